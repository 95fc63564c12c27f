#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace nce_lab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

enum class Subcommand { Sample, Distances, Hessian, Mse, Anticonc, Identity, Plot };

const char* to_string(Subcommand sub);

struct Invocation {
  Subcommand subcommand = Subcommand::Distances;
  std::optional<std::filesystem::path> config_path;
  std::vector<std::string> overrides;
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<int>> dims;
  bool quiet = false;

  // Subcommand-specific flags; unset ones leave the config untouched.
  bool full_grid = false;
  std::optional<double> epsilon;
  std::optional<std::string> source;
  std::optional<long> n;
  std::optional<int> d;
  std::optional<std::string> input;
  std::optional<std::string> x_col;
  std::optional<std::string> y_col;
  std::optional<std::string> output;
};

/// "1,10,100" or an inclusive range "70:120:10".
std::vector<int> parse_dims(const std::string& text);

/// Config after defaults, --config, flags and overrides, in that order. The
/// result is what run_manifest.json records under "config".
nlohmann::ordered_json resolve_config(const Invocation& inv);

/// Runs a parsed invocation and returns the exit code. Errors are reported on
/// `err`; progress lines go to `out` unless quiet.
int run(const Invocation& inv, std::ostream& out, std::ostream& err);

/// Parses the argument list (without the program name) and runs it.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nce_lab::cli
