#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace advamc {

struct PrimitiveCheck {
  std::string primitive;
  std::size_t cases = 0;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<PrimitiveCheck> primitives;  // 64-bit, random shapes
  std::size_t model_cases = 0;
  double model_input_max_rel_error = 0.0;  // 32-bit analytic vs 64-bit differences

  double primitive_max_rel_error() const;
  bool passed(double primitive_tol = 1e-4, double model_tol = 1e-3) const;
  nlohmann::json to_json() const;
};

/// Central finite differences against the reverse-mode gradients of every
/// primitive, each on `cases` random instances, plus full-model input
/// gradients. Errors are max|analytic - fd| / max|fd| per case.
GradcheckReport run_gradcheck(std::uint64_t seed = 0, std::size_t cases = 100, std::size_t model_cases = 8);

}  // namespace advamc
