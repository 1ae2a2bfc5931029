#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace advamc::cli {

/// Records what a command produced and writes manifest-<command>.json.
class Manifest {
 public:
  Manifest(std::string command, const RunConfig& rc);
  void artifact(const std::filesystem::path& path);
  void seed(const std::string& name, std::uint64_t value);
  void write() const;

 private:
  std::string command_;
  const RunConfig& rc_;
  json artifacts_ = json::object();
  json seeds_ = json::object();
};

void cmd_gen_data(const RunConfig& rc);
/// Trains every regime, or only those listed.
void cmd_train(const RunConfig& rc, const std::vector<std::string>& only = {});
void cmd_attack_eval(const RunConfig& rc);
void cmd_grid(const RunConfig& rc);
void cmd_constellation(const RunConfig& rc);
/// Returns true when all tolerances hold. `out` may be empty (stdout only).
bool cmd_gradcheck(std::uint64_t seed, const std::filesystem::path& out);

}  // namespace advamc::cli
