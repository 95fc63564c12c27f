#include "nce_lab/cli.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>

#include <Eigen/Core>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "CLI11.hpp"
#include "nce_lab/dist.hpp"
#include "nce_lab/errors.hpp"
#include "nce_lab/harness.hpp"
#include "nce_lab/model.hpp"
#include "nce_lab/plot.hpp"
#include "nce_lab/theory.hpp"

#ifndef NCE_LAB_VERSION
#define NCE_LAB_VERSION "0.0.0"
#endif

namespace nce_lab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Subcommand sub) {
  switch (sub) {
    case Subcommand::Sample:
      return "sample";
    case Subcommand::Distances:
      return "distances";
    case Subcommand::Hessian:
      return "hessian";
    case Subcommand::Mse:
      return "mse";
    case Subcommand::Anticonc:
      return "anticonc";
    case Subcommand::Identity:
      return "identity";
    case Subcommand::Plot:
      return "plot";
  }
  return "?";
}

namespace {

std::optional<harness::ExperimentKind> experiment_kind(Subcommand sub) {
  switch (sub) {
    case Subcommand::Mse:
      return harness::ExperimentKind::Mse;
    case Subcommand::Hessian:
      return harness::ExperimentKind::HessianDecay;
    case Subcommand::Anticonc:
      return harness::ExperimentKind::Anticonc;
    case Subcommand::Identity:
      return harness::ExperimentKind::Identity;
    default:
      return std::nullopt;
  }
}

json defaults_for(Subcommand sub) {
  if (const auto kind = experiment_kind(sub)) {
    json j = harness::to_json(harness::default_config(*kind));
    if (sub == Subcommand::Anticonc) {
      j["epsilon"] = harness::kDefaultEpsilon;
    }
    return j;
  }
  switch (sub) {
    case Subcommand::Sample:
      return {{"source", "data"}, {"n", 1000}, {"d", 2}, {"seed", 7}, {"stream_id", 0}};
    case Subcommand::Distances:
      return {{"dims", {1, 10, 100}}};
    case Subcommand::Plot:
      return {{"input", ""}, {"x", "d"}, {"y", "log:mean"}, {"output", ""}};
    default:
      return json::object();
  }
}

// Splits an anticonc config into the experiment part and epsilon.
std::pair<json, std::optional<json>> split_epsilon(json j) {
  std::optional<json> eps;
  if (j.is_object() && j.contains("epsilon")) {
    eps = j["epsilon"];
    j.erase("epsilon");
  }
  return {j, eps};
}

harness::ExperimentConfig experiment_from(const json& resolved, Subcommand sub) {
  json j = sub == Subcommand::Anticonc ? split_epsilon(resolved).first : resolved;
  const auto cfg = harness::config_from_json(j);
  if (cfg.kind != *experiment_kind(sub)) {
    throw ConfigError(fmt::format("config kind '{}' does not match subcommand '{}'",
                                  harness::to_string(cfg.kind), to_string(sub)));
  }
  return cfg;
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(fmt::format("cannot read config {}", path.string()));
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError(fmt::format("config {} is not valid JSON", path.string()));
  }
  return j;
}

void merge_declared(json& base, const json& file_cfg) {
  if (!file_cfg.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  for (const auto& item : file_cfg.items()) {
    if (!base.contains(item.key())) {
      throw ConfigError(fmt::format("unknown config key '{}'", item.key()));
    }
    base[item.key()] = item.value();
  }
}

template <class T>
T get_or_throw(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("config key '{}' is missing or has the wrong type", key));
  }
}

std::string versions_line() {
  return fmt::format("nce-lab {}; eigen {}.{}.{}; fmt {}; compiler {}", NCE_LAB_VERSION,
                     EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION, FMT_VERSION,
                     __VERSION__);
}

json versions() {
  return {{"nce_lab", NCE_LAB_VERSION},
          {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
          {"fmt", FMT_VERSION},
          {"json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                               NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__}};
}

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError(fmt::format("cannot create output directory {}", dir.string()));
  }
}

// ---------------------------------------------------------------------------
// Subcommand bodies. Each writes into out_dir and returns a short report.

std::string do_sample(const json& cfg, const fs::path& dir) {
  const auto source = get_or_throw<std::string>(cfg, "source");
  const auto n = get_or_throw<long>(cfg, "n");
  const auto d = get_or_throw<int>(cfg, "d");
  const auto seed = get_or_throw<std::uint64_t>(cfg, "seed");
  const auto stream = get_or_throw<std::uint64_t>(cfg, "stream_id");
  if (source != "data" && source != "noise") {
    throw ConfigError(fmt::format("source must be 'data' or 'noise', got '{}'", source));
  }
  if (n < 1 || d < 1) {
    throw ConfigError("sample needs n >= 1 and d >= 1");
  }
  numerics::RngStream rng(seed, stream);
  const dist::SampleBatch batch =
      source == "data" ? dist::ProductQuartic(d).sample(n, rng) : dist::StandardGaussian(d).sample(n, rng);
  dist::write_batch_csv(batch, dir / "sample.csv");
  dist::write_batch_sidecar(batch, dir / "sample.json");
  return fmt::format("wrote {} {} points in d={} to {}", n, source, d, (dir / "sample.csv").string());
}

std::string do_distances(const json& cfg, const fs::path& dir) {
  const auto dims = get_or_throw<std::vector<int>>(cfg, "dims");
  if (dims.empty()) {
    throw ConfigError("dims must not be empty");
  }
  std::string csv = "d,rho,hellinger_sq,tv_lower_bound,hessian_norm_bound_log\n";
  for (int d : dims) {
    if (d < 1) {
      throw ConfigError(fmt::format("dims must be positive, got {}", d));
    }
    const auto r = theory::tv_hellinger_report(d);
    const auto b = theory::hessian_norm_bound(d);
    csv += fmt::format("{},{},{},{},{}\n", d, r.rho, r.hellinger_sq_d, r.tv_lower_bound_d, b.log_bound);
  }
  harness::write_text(dir / "distances.csv", csv);
  return csv;
}

std::string do_mse(const harness::ExperimentConfig& cfg, const fs::path& dir) {
  const auto result = harness::run_mse_experiment(cfg);
  harness::write_text(dir / "mse.csv", harness::mse_csv(result.records));
  harness::write_text(dir / "summary.csv", harness::summary_csv(result.summary));
  harness::write_text(dir / "fit.json", harness::fit_json(result.fit));

  json thetas = json::object();
  json stars = json::object();
  std::string decomposition = "d,mean_sq_error,trace_cov,bias_sq,bias_sq_null\n";
  json estimates = json::array();
  for (int d : cfg.dims) {
    const model::ThetaVector star = model::theta_star(d);
    stars[std::to_string(d)] = model::to_json(star);
    std::vector<Vector> hats;
    for (std::size_t i = 0; i < result.records.size(); ++i) {
      if (result.records[i].d == d) {
        hats.push_back(result.theta_hats[i]);
        estimates.push_back({{"d", d},
                             {"trial", result.records[i].trial},
                             {"theta", model::to_json(model::ThetaVector(result.theta_hats[i]))}});
      }
    }
    if (hats.size() >= 2) {
      const auto m = harness::mse_decomposition(hats, star.coords());
      decomposition += fmt::format("{},{},{},{},{}\n", d, m.mean_sq_error, m.trace_cov, m.bias_sq, m.bias_sq_null);
    }
  }
  thetas["theta_star"] = stars;
  thetas["estimates"] = estimates;
  harness::write_text(dir / "theta.json", thetas.dump() + "\n");
  harness::write_text(dir / "decomposition.csv", decomposition);
  if (result.summary.size() >= 2) {
    plot::emit_plot(dir / "summary.csv", plot::ColumnSpec::parse("d"), plot::ColumnSpec::parse("log:mean"),
                    dir / "log_mse.svg");
  }

  std::string report = harness::summary_csv(result.summary);
  report += fmt::format("ln MSE vs d: slope={} intercept={} r2={}\n", result.fit.slope, result.fit.intercept,
                        result.fit.r_squared);
  return report;
}

std::string do_hessian(const harness::ExperimentConfig& cfg, const fs::path& dir) {
  const auto result = harness::run_hessian_decay(cfg);
  const std::string csv = harness::hessian_csv(result.records);
  harness::write_text(dir / "hessian.csv", csv);
  harness::write_text(dir / "fit.json", harness::fit_json(result.fit));
  if (result.records.size() >= 2) {
    plot::emit_plot(dir / "hessian.csv", plot::ColumnSpec::parse("d"),
                    plot::ColumnSpec::parse("log:lambda_max"), dir / "hessian.svg");
  }
  return csv + fmt::format("ln lambda_max vs d: slope={} r2={}\n", result.fit.slope, result.fit.r_squared);
}

std::string do_identity(const harness::ExperimentConfig& cfg, const fs::path& dir) {
  const std::string csv = harness::identity_csv(harness::run_identity_check(cfg));
  harness::write_text(dir / "identity.csv", csv);
  return csv;
}

std::string do_anticonc(const harness::ExperimentConfig& cfg, double epsilon, const fs::path& dir) {
  const auto checks = harness::run_anticonc_experiment(cfg, epsilon);
  const std::string fwd = harness::anticonc_csv(checks, theory::Direction::DataVsNoise);
  const std::string rev = harness::anticonc_csv(checks, theory::Direction::NoiseVsData);
  harness::write_text(dir / "anticonc.csv", fwd);
  harness::write_text(dir / "anticonc_reversed.csv", rev);
  return fwd + rev;
}

std::string do_plot(const json& cfg, const fs::path& dir) {
  const auto input = get_or_throw<std::string>(cfg, "input");
  if (input.empty()) {
    throw ConfigError("plot needs --input");
  }
  const auto x = plot::ColumnSpec::parse(get_or_throw<std::string>(cfg, "x"));
  const auto y = plot::ColumnSpec::parse(get_or_throw<std::string>(cfg, "y"));
  auto output = get_or_throw<std::string>(cfg, "output");
  const fs::path out_svg = output.empty() ? dir / fs::path(input).stem().concat(".svg") : fs::path(output);
  if (fs::exists(out_svg) && fs::exists(input) && fs::equivalent(out_svg, input)) {
    throw ConfigError("plot output would overwrite its input");
  }
  const auto s = plot::read_series(input, x, y);
  harness::write_text(out_svg, plot::render_svg(s, x, y));
  std::string report = fmt::format("wrote {}\n", out_svg.string());
  if (const auto fit = plot::series_fit(s)) {
    report += fmt::format("slope={:.6f} r2={:.4f}\n", fit->slope, fit->r_squared);
  }
  return report;
}

}  // namespace

std::vector<int> parse_dims(const std::string& text) {
  auto to_int = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(s, &used);
      if (used != s.size()) {
        throw std::invalid_argument(s);
      }
      return v;
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("bad dimension list '{}'", text));
    }
  };
  std::vector<int> dims;
  if (text.find(':') != std::string::npos) {
    std::vector<int> parts;
    std::size_t start = 0;
    for (;;) {
      const auto colon = text.find(':', start);
      parts.push_back(to_int(text.substr(start, colon == std::string::npos ? std::string::npos : colon - start)));
      if (colon == std::string::npos) {
        break;
      }
      start = colon + 1;
    }
    if (parts.size() != 3 || parts[2] <= 0 || parts[1] < parts[0]) {
      throw ConfigError(fmt::format("dimension range '{}' must be lo:hi:step with step > 0", text));
    }
    for (int d = parts[0]; d <= parts[1]; d += parts[2]) {
      dims.push_back(d);
    }
    return dims;
  }
  std::size_t start = 0;
  for (;;) {
    const auto comma = text.find(',', start);
    dims.push_back(to_int(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) {
      break;
    }
    start = comma + 1;
  }
  return dims;
}

nlohmann::ordered_json resolve_config(const Invocation& inv) {
  const Subcommand sub = inv.subcommand;
  json cfg = defaults_for(sub);
  const bool is_experiment = experiment_kind(sub).has_value();

  if (inv.config_path) {
    json file_cfg = load_json_file(*inv.config_path);
    if (file_cfg.is_object() && file_cfg.contains("subcommand")) {
      // A run_manifest.json from an earlier run.
      if (file_cfg["subcommand"] != to_string(sub)) {
        throw ConfigError(fmt::format("manifest is for '{}', not '{}'",
                                      file_cfg["subcommand"].dump(), to_string(sub)));
      }
      if (!file_cfg.contains("config")) {
        throw ConfigError("manifest has no 'config'");
      }
      file_cfg = json(file_cfg["config"]);
    }
    if (is_experiment) {
      auto [exp_part, eps] = split_epsilon(file_cfg);
      if (eps && sub != Subcommand::Anticonc) {
        throw ConfigError("unknown config key 'epsilon'");
      }
      if (!exp_part.contains("kind")) {
        exp_part["kind"] = harness::to_string(*experiment_kind(sub));
      }
      json merged = harness::to_json(experiment_from(exp_part, sub));
      if (sub == Subcommand::Anticonc) {
        merged["epsilon"] = eps ? *eps : cfg["epsilon"];
      }
      cfg = merged;
    } else {
      merge_declared(cfg, file_cfg);
    }
  }

  if (inv.full_grid) {
    if (sub != Subcommand::Mse) {
      throw ConfigError("--full-grid only applies to mse");
    }
    cfg["dims"] = parse_dims("70:120:2");
    cfg["trials"] = 100;
  }
  if (inv.dims) {
    if (!cfg.contains("dims")) {
      throw ConfigError(fmt::format("--dims does not apply to {}", to_string(sub)));
    }
    cfg["dims"] = *inv.dims;
  }
  if (inv.seed) {
    const char* key = is_experiment ? "master_seed" : "seed";
    if (!cfg.contains(key)) {
      throw ConfigError(fmt::format("--seed does not apply to {}", to_string(sub)));
    }
    cfg[key] = *inv.seed;
  }
  auto set_flag = [&](const char* key, const auto& value, const char* flag) {
    if (!value) {
      return;
    }
    if (!cfg.contains(key)) {
      throw ConfigError(fmt::format("{} does not apply to {}", flag, to_string(sub)));
    }
    cfg[key] = *value;
  };
  set_flag("epsilon", inv.epsilon, "--epsilon");
  set_flag("source", inv.source, "--source");
  set_flag("n", inv.n, "--n");
  set_flag("d", inv.d, "--d");
  set_flag("input", inv.input, "--input");
  set_flag("x", inv.x_col, "--x");
  set_flag("y", inv.y_col, "--y");
  set_flag("output", inv.output, "--output");

  for (const auto& o : inv.overrides) {
    harness::apply_override(cfg, o);
  }
  if (is_experiment) {
    // Normalize through the typed config so bad values fail here.
    auto [exp_part, eps] = split_epsilon(cfg);
    json normalized = harness::to_json(experiment_from(exp_part, sub));
    if (eps) {
      if (!eps->is_number()) {
        throw ConfigError("epsilon must be a number");
      }
      normalized["epsilon"] = *eps;
    }
    cfg = normalized;
  }
  return nlohmann::ordered_json(cfg);
}

int run(const Invocation& inv, std::ostream& out, std::ostream& err) {
  try {
    const nlohmann::ordered_json resolved = resolve_config(inv);
    const json cfg(resolved);
    prepare_out_dir(inv.out_dir);

    nlohmann::ordered_json manifest;
    manifest["subcommand"] = to_string(inv.subcommand);
    manifest["config"] = resolved;
    manifest["overrides"] = inv.overrides;
    manifest["versions"] = versions();
    harness::write_text(inv.out_dir / "run_manifest.json", manifest.dump(2) + "\n");

    std::string report;
    switch (inv.subcommand) {
      case Subcommand::Sample:
        report = do_sample(cfg, inv.out_dir);
        break;
      case Subcommand::Distances:
        report = do_distances(cfg, inv.out_dir);
        break;
      case Subcommand::Plot:
        report = do_plot(cfg, inv.out_dir);
        break;
      case Subcommand::Mse:
        report = do_mse(experiment_from(cfg, inv.subcommand), inv.out_dir);
        break;
      case Subcommand::Hessian:
        report = do_hessian(experiment_from(cfg, inv.subcommand), inv.out_dir);
        break;
      case Subcommand::Identity:
        report = do_identity(experiment_from(cfg, inv.subcommand), inv.out_dir);
        break;
      case Subcommand::Anticonc: {
        const double eps = get_or_throw<double>(cfg, "epsilon");
        if (!(eps > 0.0 && eps <= 0.125)) {
          throw ConfigError(fmt::format("epsilon must be in (0, 1/8], got {}", eps));
        }
        report = do_anticonc(experiment_from(cfg, inv.subcommand), eps, inv.out_dir);
        break;
      }
    }
    if (!inv.quiet) {
      out << report;
      if (!report.empty() && report.back() != '\n') {
        out << '\n';
      }
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Noise-contrastive estimation lab: a quartic family against Gaussian noise.", "nce-lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", versions_line());

  Invocation inv;
  std::string config_path;
  std::string out_dir;
  std::string dims_text;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config or an earlier run_manifest.json");
    sub->add_option("--override", inv.overrides, "Dotted key=value override, repeatable")->allow_extra_args(false);
    sub->add_option("--out", out_dir, "Output directory (default: current directory)");
    sub->add_option("--seed", inv.seed, "Master seed");
    sub->add_option("--dims", dims_text, "Dimensions: 1,10,100 or lo:hi:step");
    sub->add_flag("--quiet", inv.quiet, "Print nothing on success");
  };

  auto* sample = app.add_subcommand("sample", "Draw a batch from the quartic data or the Gaussian noise");
  common(sample);
  sample->add_option("--source", inv.source, "data or noise");
  sample->add_option("--n", inv.n, "Number of points");
  sample->add_option("--d", inv.d, "Dimension");

  auto* distances = app.add_subcommand("distances", "Bhattacharyya, Hellinger and TV bounds per dimension");
  common(distances);

  auto* hessian = app.add_subcommand("hessian", "Population Hessian spectrum at the true parameter");
  common(hessian);

  auto* mse = app.add_subcommand("mse", "Squared error of the NCE estimate against dimension");
  common(mse);
  mse->add_flag("--full-grid", inv.full_grid, "d = 70, 72, ..., 120 with 100 trials");

  auto* anticonc = app.add_subcommand("anticonc", "Anti-concentration of the log density ratio");
  common(anticonc);
  anticonc->add_option("--epsilon", inv.epsilon, "Slack in (0, 1/8]");

  auto* identity = app.add_subcommand("identity", "Check E[A^2] + E[B^2] = 2 v'Hv");
  common(identity);

  auto* plot_cmd = app.add_subcommand("plot", "Render a CSV column pair as an SVG with an OLS line");
  common(plot_cmd);
  plot_cmd->add_option("--input", inv.input, "CSV file");
  plot_cmd->add_option("--x", inv.x_col, "x column (prefix log: for ln)");
  plot_cmd->add_option("--y", inv.y_col, "y column (prefix log: for ln)");
  plot_cmd->add_option("--output", inv.output, "SVG path (default: <out>/<input stem>.svg)");

  std::vector<const char*> argv{"nce-lab"};
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << versions_line() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  const std::pair<CLI::App*, Subcommand> table[] = {
      {sample, Subcommand::Sample},     {distances, Subcommand::Distances}, {hessian, Subcommand::Hessian},
      {mse, Subcommand::Mse},           {anticonc, Subcommand::Anticonc},   {identity, Subcommand::Identity},
      {plot_cmd, Subcommand::Plot}};
  for (const auto& [app_ptr, sub] : table) {
    if (app_ptr->parsed()) {
      inv.subcommand = sub;
    }
  }
  if (!config_path.empty()) {
    inv.config_path = config_path;
  }
  if (!out_dir.empty()) {
    inv.out_dir = out_dir;
  }
  try {
    if (!dims_text.empty()) {
      inv.dims = parse_dims(dims_text);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return run(inv, out, err);
}

}  // namespace nce_lab::cli
