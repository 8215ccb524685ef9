// Command-line front end: reproducible batch runs of the mode simulator, the
// estimator families, the parabolicity certificate, and the Monte Carlo
// harness.  Every output is fully determined by the invocation; configuration
// is echoed into JSON sidecars next to the primary outputs.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spde/detail/format.hpp"
#include "spde/estimators.hpp"
#include "spde/experiments.hpp"
#include "spde/noise_sim.hpp"
#include "spde/spectral_model.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

[[noreturn]] void usage_error(const std::string& msg) { throw std::invalid_argument(msg); }

constexpr int kModeCap = 10'000'000;

int parse_mode_index(std::string_view token) {
  const long long k = spde::detail::parse_int(token, "mode index");
  if (k < 1) usage_error("mode index must be >= 1, got " + std::string(token));
  if (k > kModeCap) usage_error("mode index " + std::string(token) + " too large");
  return static_cast<int>(k);
}

// "a..b" inclusive ranges and comma lists, mixed: "1,3..5,9".
std::vector<int> parse_mode_list(const std::string& text) {
  std::vector<int> out;
  for (std::string_view token : spde::detail::split(text, ',')) {
    if (token.empty()) usage_error("empty entry in mode list '" + text + "'");
    const auto pos = token.find("..");
    if (pos == std::string_view::npos) {
      out.push_back(parse_mode_index(token));
      continue;
    }
    const int a = parse_mode_index(token.substr(0, pos));
    const int b = parse_mode_index(token.substr(pos + 2));
    if (a > b) usage_error("empty mode range '" + std::string(token) + "'");
    for (int k = a; k <= b; ++k) out.push_back(k);
  }
  if (out.empty()) usage_error("mode list '" + text + "' is empty");
  return out;
}

std::map<std::string, double> parse_params(const std::vector<std::string>& entries) {
  std::map<std::string, double> out;
  for (const std::string& e : entries) {
    const auto pos = e.find('=');
    if (pos == std::string::npos || pos == 0)
      usage_error("model parameter '" + e + "' is not of the form key=value");
    const std::string key = e.substr(0, pos);
    if (!out.emplace(key, spde::detail::parse_double(e.substr(pos + 1), "parameter " + key))
             .second)
      usage_error("model parameter '" + key + "' given twice");
  }
  return out;
}

bool looks_like_path(const std::string& arg) {
  return arg.find('/') != std::string::npos || arg.find('\\') != std::string::npos ||
         arg.ends_with(".json") || fs::exists(arg);
}

// --model accepts either a JSON spec file or a builtin id; builtins take
// their k_max from --param, falling back to the largest mode the invocation
// needs.
spde::SpectralModel resolve_model(const std::string& arg,
                                  const std::vector<std::string>& param_entries,
                                  int default_kmax) {
  if (looks_like_path(arg)) {
    if (!param_entries.empty())
      usage_error("--param applies to builtin models only; edit the spec file instead");
    return spde::load_model_file(arg);
  }
  std::map<std::string, double> params = parse_params(param_entries);
  if (!params.count("k_max")) {
    if (default_kmax < 1)
      usage_error("builtin model '" + arg + "' needs --param k_max=N or --kmax");
    params["k_max"] = static_cast<double>(default_kmax);
  }
  return spde::build_builtin(arg, params);
}

json model_spec_json(const std::string& arg, const std::vector<std::string>& param_entries,
                     int default_kmax) {
  return resolve_model(arg, param_entries, default_kmax).spec();
}

int max_mode(const std::vector<int>& modes) {
  return *std::max_element(modes.begin(), modes.end());
}

void require_prefix_range(const std::vector<int>& modes, const char* family) {
  for (std::size_t i = 0; i < modes.size(); ++i)
    if (modes[i] != static_cast<int>(i) + 1)
      usage_error(std::string("family '") + family +
                  "' uses modes 1..N; pass a contiguous range starting at 1");
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) usage_error("cannot open output file '" + path + "'");
  out << body;
  if (!out) usage_error("failed writing output file '" + path + "'");
}

struct SimulateOpts {
  std::string model;
  std::vector<std::string> params;
  double theta = 0.0;
  std::string modes;
  double T = 1.0;
  std::uint64_t seed = 1;
  std::vector<std::string> u0_entries;
  std::string out;
};

int run_simulate(const SimulateOpts& o) {
  const std::vector<int> modes = parse_mode_list(o.modes);
  const spde::SpectralModel model = resolve_model(o.model, o.params, max_mode(modes));
  std::map<int, double> u0;
  for (const std::string& e : o.u0_entries) {
    const auto pos = e.find('=');
    if (pos == std::string::npos || pos == 0)
      usage_error("--u0 entry '" + e + "' is not of the form k=value");
    const int k = parse_mode_index(std::string_view(e).substr(0, pos));
    if (!u0.emplace(k, spde::detail::parse_double(e.substr(pos + 1), "u0 value")).second)
      usage_error("--u0 given twice for mode " + std::to_string(k));
  }
  const spde::ObservationSet obs =
      spde::simulate_observations(model, modes, o.theta, u0, o.T, o.seed);
  json extra;
  extra["command"] = "simulate";
  extra["model"] = model.spec();
  extra["modes"] = modes;
  spde::write_observations(obs, o.out, extra);
  return 0;
}

struct EstimateOpts {
  std::string family;
  std::string modes;
  std::string model;
  std::vector<std::string> params;
  std::string obs;
  std::string weights = "uniform";
  std::string out;  // empty: stdout
};

int run_estimate(const EstimateOpts& o) {
  const std::vector<int> modes = parse_mode_list(o.modes);
  const spde::Family family = spde::family_from_string(o.family);
  const spde::SpectralModel model = resolve_model(o.model, o.params, max_mode(modes));
  const spde::ObservationSet obs = spde::read_observations(o.obs);

  std::vector<spde::EstimationResult> results;
  switch (family) {
    case spde::Family::mle:
      for (int k : modes) results.push_back(spde::mle_single(model, k, obs));
      break;
    case spde::Family::weighted: {
      require_prefix_range(modes, "weighted");
      const spde::WeightScheme scheme = spde::WeightScheme::by_name(o.weights);
      results.push_back(
          spde::weighted_average(model, obs, scheme, static_cast<int>(modes.size())));
      break;
    }
    case spde::Family::aitken:
      require_prefix_range(modes, "aitken");
      results = spde::aitken_estimates(model, obs, static_cast<int>(modes.size()));
      break;
    case spde::Family::exact: {
      const spde::ExactCombination combo = spde::exact_combination(model, modes);
      results.push_back(spde::exact_estimate(model, combo, obs));
      break;
    }
  }

  std::string body = spde::result_csv_header;
  body += '\n';
  for (const spde::EstimationResult& r : results) {
    body += spde::to_csv_row(r);
    body += '\n';
  }
  if (o.out.empty()) {
    std::cout << body;
    return 0;
  }
  write_text_file(o.out, body);
  json side;
  side["command"] = "estimate";
  side["family"] = o.family;
  side["modes"] = modes;
  side["model"] = model.spec();
  side["observations"] = o.obs;
  if (family == spde::Family::weighted) side["weights"] = o.weights;
  write_text_file(o.out + ".json", side.dump(2) + "\n");
  return 0;
}

struct CheckOpts {
  std::string model;
  std::vector<std::string> params;
  std::vector<double> thetas;
  double delta = 0.0;
  double c1 = 1.0;
  double c2 = 1.0;
  int kmax = 0;  // 0: model k_max
};

int run_check(const CheckOpts& o) {
  const spde::SpectralModel model = resolve_model(o.model, o.params, o.kmax);
  const int k_range = o.kmax > 0 ? o.kmax : model.k_max();
  const spde::ParabolicityReport report =
      spde::check_parabolicity(model, o.delta, o.c1, o.c2, o.thetas, k_range);

  std::cout << "model: " << model.name() << " (k_max = " << model.k_max() << ")\n";
  std::cout << "delta = " << spde::detail::fmt(report.delta)
            << ", C1 = " << spde::detail::fmt(report.c1)
            << ", C2 = " << spde::detail::fmt(report.c2) << '\n';
  std::cout << "thetas:";
  for (double t : report.thetas) std::cout << ' ' << spde::detail::fmt(t);
  std::cout << '\n';
  std::cout << "checked: k = 1.." << report.k_checked << '\n';
  std::cout << "verdict: " << spde::to_string(report.verdict) << '\n';
  if (report.first_violation) {
    const spde::ParabolicityViolation& v = *report.first_violation;
    std::cout << "first violation: k = " << v.k << ", theta = " << spde::detail::fmt(v.theta)
              << ", condition = " << spde::to_string(v.condition)
              << ", lhs = " << spde::detail::fmt(v.lhs) << '\n';
  } else if (report.verdict == spde::Verdict::inconclusive) {
    std::cout << "note: checked range stops below k_max; the certificate says nothing "
                 "about the remaining modes\n";
  }
  return 0;
}

struct McOpts {
  std::string config_path;
  std::string model;
  std::vector<std::string> params;
  std::optional<double> theta;
  std::optional<double> T;
  std::optional<long long> replicates;
  std::optional<std::uint64_t> seed;
  std::optional<int> krange;
  std::optional<bool> mle;
  std::optional<std::string> weighted;
  std::optional<bool> aitken;
  std::optional<bool> exact;
  std::string exact_modes;
  std::optional<int> threads;
  std::string out;
};

int run_mc(const McOpts& o) {
  spde::MCConfig cfg;
  bool have_model = false;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path, std::ios::binary);
    if (!in) usage_error("cannot open config file '" + o.config_path + "'");
    json j;
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      usage_error("malformed config file '" + o.config_path + "': " + e.what());
    }
    cfg = spde::MCConfig::from_json(j);
    have_model = true;
  }
  if (o.theta) cfg.theta0 = *o.theta;
  if (o.T) cfg.T = *o.T;
  if (o.replicates) cfg.replicates = *o.replicates;
  if (o.seed) cfg.root_seed = *o.seed;
  if (o.krange) cfg.k_range = *o.krange;
  if (o.mle) cfg.run_mle = *o.mle;
  if (o.weighted) {
    if (o.weighted->empty() || *o.weighted == "none")
      cfg.weighted_scheme.reset();
    else
      cfg.weighted_scheme = *o.weighted;
  }
  if (o.aitken) cfg.run_aitken = *o.aitken;
  if (o.exact) cfg.run_exact = *o.exact;
  if (!o.exact_modes.empty()) cfg.exact_modes = parse_mode_list(o.exact_modes);
  if (o.threads) cfg.threads = *o.threads;

  if (!o.model.empty()) {
    int needed = cfg.k_range;
    for (int k : cfg.exact_modes) needed = std::max(needed, k);
    cfg.model_spec = model_spec_json(o.model, o.params, needed);
    have_model = true;
  } else if (!o.params.empty()) {
    usage_error("--param needs --model");
  }
  if (!have_model) usage_error("mc needs --config or --model");

  const spde::MCReport report = spde::run_monte_carlo(cfg);
  spde::emit_report(report, o.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mode-space simulation and drift estimation for bilinear stochastic "
               "parabolic equations"};
  app.require_subcommand(1);

  SimulateOpts sim;
  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "Sample terminal mode observations and write them as CSV");
  sim_cmd->add_option("--model", sim.model, "builtin model id or JSON spec file")->required();
  sim_cmd->add_option("--param", sim.params, "builtin model parameter key=value (repeatable)");
  sim_cmd->add_option("--theta", sim.theta, "true drift parameter")->required();
  sim_cmd->add_option("--modes", sim.modes, "modes to simulate, e.g. 1..5 or 1,3,9")->required();
  sim_cmd->add_option("--T", sim.T, "observation horizon")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "RNG seed")->capture_default_str();
  sim_cmd->add_option("--u0", sim.u0_entries, "initial value override k=value (repeatable)");
  sim_cmd->add_option("--out", sim.out, "output CSV path")->required();

  EstimateOpts est;
  CLI::App* est_cmd =
      app.add_subcommand("estimate", "Estimate theta from an observation CSV");
  est_cmd->add_option("--family", est.family, "estimator family: mle, weighted, aitken, exact")
      ->required();
  est_cmd->add_option("--modes", est.modes, "modes to use, e.g. 1..5 or 1,2")->required();
  est_cmd->add_option("--model", est.model, "builtin model id or JSON spec file")->required();
  est_cmd->add_option("--param", est.params, "builtin model parameter key=value (repeatable)");
  est_cmd->add_option("--obs", est.obs, "observation CSV path")->required();
  est_cmd->add_option("--weights", est.weights, "weight scheme for family weighted")->capture_default_str();
  est_cmd->add_option("--out", est.out, "output CSV path (default: stdout)");

  CheckOpts chk;
  CLI::App* chk_cmd =
      app.add_subcommand("check", "Evaluate the parabolicity certificate over a mode range");
  chk_cmd->add_option("--model", chk.model, "builtin model id or JSON spec file")->required();
  chk_cmd->add_option("--param", chk.params, "builtin model parameter key=value (repeatable)");
  chk_cmd->add_option("--theta", chk.thetas, "drift parameter sample (repeatable)")->required();
  chk_cmd->add_option("--delta", chk.delta, "coercivity margin, > 0")->required();
  chk_cmd->add_option("--C1", chk.c1, "drift bound constant")->capture_default_str();
  chk_cmd->add_option("--C2", chk.c2, "coercivity constant")->capture_default_str();
  chk_cmd->add_option("--kmax", chk.kmax, "check modes 1..kmax (default: all model modes)");

  McOpts mc;
  CLI::App* mc_cmd =
      app.add_subcommand("mc", "Monte Carlo estimator study; writes a statistics CSV");
  mc_cmd->add_option("--config", mc.config_path, "JSON config file (flags override its values)");
  mc_cmd->add_option("--model", mc.model, "builtin model id or JSON spec file");
  mc_cmd->add_option("--param", mc.params, "builtin model parameter key=value (repeatable)");
  mc_cmd->add_option("--theta", mc.theta, "true drift parameter");
  mc_cmd->add_option("--T", mc.T, "observation horizon");
  mc_cmd->add_option("--replicates", mc.replicates, "number of replicates");
  mc_cmd->add_option("--seed", mc.seed, "root RNG seed");
  mc_cmd->add_option("--krange", mc.krange, "evaluate estimators at modes 1..krange");
  mc_cmd->add_flag("--mle,!--no-mle", mc.mle, "toggle the single-mode family");
  mc_cmd->add_option("--weighted", mc.weighted,
                     "weight scheme for the averaged family (uniform, linear, harmonic; "
                     "'none' disables)");
  mc_cmd->add_flag("--aitken,!--no-aitken", mc.aitken, "toggle the accelerated family");
  mc_cmd->add_flag("--exact,!--no-exact", mc.exact, "toggle the exact family");
  mc_cmd->add_option("--exact-modes", mc.exact_modes,
                     "modes for the exact combination (default: 1..J+1)");
  mc_cmd->add_option("--threads", mc.threads, "worker threads (0: hardware)");
  mc_cmd->add_option("--out", mc.out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message
    return 1;
  }

  try {
    if (sim_cmd->parsed()) return run_simulate(sim);
    if (est_cmd->parsed()) return run_estimate(est);
    if (chk_cmd->parsed()) return run_check(chk);
    if (mc_cmd->parsed()) return run_mc(mc);
  } catch (const spde::numerical_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
