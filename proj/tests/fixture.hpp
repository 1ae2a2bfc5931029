#pragma once

#include "advamc/training.hpp"

namespace fixture {

/// CRML-tiny split plus a briefly trained tiny CNN, built once per process.
struct Trained {
  advamc::LabeledDataset ds;
  advamc::Model<float> model;
};

const Trained& trained();

}  // namespace fixture
