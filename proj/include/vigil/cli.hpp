#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vigil/evaluation.hpp"
#include "vigil/types.hpp"
#include "vigil/vigilance.hpp"

namespace vigil::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Pipeline parameters shared by every processing subcommand.
struct Flags {
  EpochConfig epoch;
  CalibrationConfig calib;
};

struct Serve {
  std::string bind_addr{"127.0.0.1:8080"};
  std::string data_dir;  // empty: VIGIL_DATA_DIR or ./data
  std::size_t max_sessions{16};
};

struct Replay {
  std::string path;
  double speed{1.0};
  std::string tags_path;
  std::string out_path;
  SessionMode mode{SessionMode::Instructed};
  Flags flags;
};

struct Simulate {
  std::string preset{"session"};
  std::string config_path;  // JSON synthetic config; overrides preset
  std::uint64_t seed{1};
  double amplitude_uv{4.0};
  double noise_sigma_uv{1.0};
  std::string out_dir{"."};
  std::string name;  // output file stem; defaults to the preset name
  SessionMode mode{SessionMode::Instructed};
  Flags flags;
};

struct Analyze {
  std::string recording;
  std::string tags_path;
  std::string out_path;  // default: <recording stem>.session.jsonl
  std::string bp_csv_path;
  std::string session_id;
  std::string label;
  SessionMode mode{SessionMode::Instructed};
  Flags flags;
};

struct Evaluate {
  std::vector<std::string> files;
  std::string csv_path;
};

struct Report {
  std::vector<std::string> files;
  std::string csv_path;
};

using Command = std::variant<Serve, Replay, Simulate, Analyze, Evaluate, Report>;

// Thrown by parse_cli. exit_code is 2 for usage errors and 0 for --help.
class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& message, int exit_code) : std::runtime_error(message), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

Command parse_cli(int argc, const char* const* argv);
inline Command parse_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"vigil"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return parse_cli(static_cast<int>(argv.size()), argv.data());
}

int execute(const Command& cmd, std::ostream& out, std::ostream& err);

// parse + execute with the exit-code contract (0 ok, 1 runtime, 2 usage)
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vigil::cli
