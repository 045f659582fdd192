#pragma once

// One manifest per command run: what ran, with which effective config, on
// which inputs, producing which outputs.

#include <chrono>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "graspkit/hash.hpp"
#include "graspkit/nn/archive.hpp"

namespace graspkit {

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> git blob hash
  std::map<std::string, std::string> outputs;  // path -> git blob hash
  double wall_clock_s = 0;
  int exit_code = 0;
  std::string message;

  void add_input(const std::filesystem::path& p) {
    if (std::filesystem::is_regular_file(p)) inputs[p.string()] = file_hash(p);
  }
  void add_output(const std::filesystem::path& p) {
    if (std::filesystem::is_regular_file(p)) outputs[p.string()] = file_hash(p);
  }

  nlohmann::json to_json() const {
    return {{"command", command}, {"config", config},          {"seed", seed},
            {"inputs", inputs},   {"outputs", outputs},        {"wall_clock_s", wall_clock_s},
            {"exit_code", exit_code}, {"message", message}};
  }

  void write(const std::filesystem::path& p) const { nn::write_file_atomic(p, to_json().dump(2) + "\n"); }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace graspkit
