#include "spde/spectral_model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace spde {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

double get_param(const std::map<std::string, double>& params, const std::string& key,
                 std::optional<double> fallback = std::nullopt) {
  auto it = params.find(key);
  if (it != params.end()) return it->second;
  if (fallback) return *fallback;
  fail("builtin model needs parameter " + key);
}

int get_int_param(const std::map<std::string, double>& params, const std::string& key,
                  std::optional<int> fallback = std::nullopt) {
  auto it = params.find(key);
  if (it == params.end()) {
    if (fallback) return *fallback;
    fail("builtin model needs parameter " + key);
  }
  double v = it->second;
  if (!(v >= 1.0) || v != std::floor(v) || v > 1e9)
    fail("parameter " + key + " must be a positive integer");
  return static_cast<int>(v);
}

void reject_unknown_params(const std::map<std::string, double>& params,
                           std::initializer_list<const char*> known) {
  for (const auto& [key, value] : params) {
    (void)value;
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok) fail("unknown parameter '" + key + "' for builtin model");
  }
}

nlohmann::json builtin_spec(const std::string& id, const nlohmann::json& params) {
  return nlohmann::json{{"builtin", id}, {"params", params}};
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::satisfied: return "satisfied";
    case Verdict::violated: return "violated";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

const char* to_string(ParabolicCondition c) {
  return c == ParabolicCondition::drift_bound ? "drift-bound" : "coercivity";
}

SpectralModel::SpectralModel(std::string name, std::vector<double> rho, std::vector<double> nu,
                             std::vector<std::vector<double>> mu_rows,
                             std::vector<double> lambda, double order, ThetaDomain theta_domain,
                             nlohmann::json spec)
    : name_(std::move(name)),
      rho_(std::move(rho)),
      nu_(std::move(nu)),
      lambda_(std::move(lambda)),
      mu_(std::move(mu_rows)),
      order_(order),
      theta_domain_(theta_domain),
      spec_(std::move(spec)) {
  if (mu_.empty()) fail("model '" + name_ + "' declares no noise loadings");
  m_total_.assign(nu_.size(), 0.0);
  for (const auto& row : mu_) {
    if (row.size() != nu_.size())
      fail("model '" + name_ + "': every mu row must have k_max entries");
    for (size_t i = 0; i < row.size(); ++i) m_total_[i] += row[i] * row[i];
  }
  validate();
}

SpectralModel SpectralModel::closed_form_noise(std::string name, std::vector<double> rho,
                                               std::vector<double> nu, std::vector<double> m_total,
                                               std::vector<double> lambda, double order,
                                               ThetaDomain theta_domain, nlohmann::json spec) {
  SpectralModel m;
  m.name_ = std::move(name);
  m.rho_ = std::move(rho);
  m.nu_ = std::move(nu);
  m.lambda_ = std::move(lambda);
  m.m_total_ = std::move(m_total);
  m.order_ = order;
  m.theta_domain_ = theta_domain;
  m.spec_ = std::move(spec);
  m.validate();
  return m;
}

void SpectralModel::validate() const {
  const size_t n = nu_.size();
  if (n == 0) fail("model '" + name_ + "': k_max must be at least 1");
  if (rho_.size() != n || lambda_.size() != n || m_total_.size() != n)
    fail("model '" + name_ + "': sequence lengths disagree");
  if (!(order_ > 0.0)) fail("model '" + name_ + "': order m must be positive");
  if (!(theta_domain_.lo < theta_domain_.hi))
    fail("model '" + name_ + "': theta_domain must be a nonempty open interval");
  for (size_t i = 0; i < n; ++i) {
    if (nu_[i] == 0.0)
      fail("model '" + name_ + "': nu_k = 0 at k=" + std::to_string(i + 1) +
           "; estimators divide by nu_k");
    if (!(lambda_[i] > 0.0))
      fail("model '" + name_ + "': lambda_k must be positive at k=" + std::to_string(i + 1));
    if (!(m_total_[i] >= 0.0))
      fail("model '" + name_ + "': M_k must be nonnegative at k=" + std::to_string(i + 1));
  }
}

size_t SpectralModel::index(int k) const {
  if (k < 1 || k > k_max())
    throw std::out_of_range("mode " + std::to_string(k) + " out of range (k_max = " +
                            std::to_string(k_max()) + ")");
  return static_cast<size_t>(k - 1);
}

double SpectralModel::eta(int k) const {
  const size_t i = index(k);
  return m_total_[i] / (nu_[i] * nu_[i]);
}

int SpectralModel::noise_dimension() const {
  if (mu_.empty())
    throw std::invalid_argument("model '" + name_ + "' has no explicit noise loadings");
  return static_cast<int>(mu_.size());
}

double SpectralModel::mu(int j, int k) const {
  const size_t i = index(k);
  if (j < 1 || j > noise_dimension())
    throw std::out_of_range("driver " + std::to_string(j) + " out of range (J = " +
                            std::to_string(mu_.size()) + ")");
  return mu_[static_cast<size_t>(j - 1)][i];
}

ModeCoefficients SpectralModel::mode_coefficients(int k) const {
  const size_t i = index(k);
  ModeCoefficients c;
  c.k = k;
  c.rho = rho_[i];
  c.nu = nu_[i];
  c.mu.reserve(mu_.size());
  for (const auto& row : mu_) c.mu.push_back(row[i]);
  c.M = m_total_[i];
  c.eta = c.M / (c.nu * c.nu);
  return c;
}

SpectralModel build_builtin(const std::string& id, const std::map<std::string, double>& params) {
  const auto seq = [](int k_max, auto&& f) {
    std::vector<double> out(static_cast<size_t>(k_max));
    for (int k = 1; k <= k_max; ++k) out[static_cast<size_t>(k - 1)] = f(k);
    return out;
  };

  if (id == "heat-1w" || id == "heat-shift") {
    reject_unknown_params(params, {"k_max"});
    const int k_max = get_int_param(params, "k_max");
    const double rho0 = (id == "heat-shift") ? -0.5 : 0.0;
    return SpectralModel(
        id, seq(k_max, [&](int) { return rho0; }),
        seq(k_max, [](int k) { return double(k) * k; }), {seq(k_max, [](int) { return 1.0; })},
        seq(k_max, [](int k) { return std::sqrt(1.0 + double(k) * k); }), 1.0,
        ThetaDomain{0.0, kInf}, builtin_spec(id, {{"k_max", k_max}}));
  }

  if (id == "figure1") {
    reject_unknown_params(params, {"k_max", "J"});
    const int k_max = get_int_param(params, "k_max");
    const int J = get_int_param(params, "J", 10);
    std::vector<std::vector<double>> mu(static_cast<size_t>(J));
    for (int j = 1; j <= J; ++j)
      mu[static_cast<size_t>(j - 1)] =
          seq(k_max, [&](int k) { return (k % 2 == 0 ? 1.0 : -1.0) / double(k + j); });
    return SpectralModel(
        id, seq(k_max, [](int) { return 0.0; }), seq(k_max, [](int k) { return double(k); }),
        std::move(mu), seq(k_max, [](int k) { return std::sqrt(1.0 + double(k) * k); }), 0.5,
        ThetaDomain{0.0, kInf}, builtin_spec(id, {{"k_max", k_max}, {"J", J}}));
  }

  if (id == "lambda-noise") {
    reject_unknown_params(params, {"k_max", "d", "c"});
    const int k_max = get_int_param(params, "k_max");
    const int d = get_int_param(params, "d", 1);
    const double c = get_param(params, "c", 1.0);
    if (!(c > 0.0)) fail("parameter c must be positive");
    // nu_k = |sigma_k| with the d=1 Dirichlet values k^2, surrogate c*k^{2/d}
    // otherwise; the noise operator contributes mu_1k = lambda_k.
    auto nu = seq(k_max, [&](int k) { return c * std::pow(double(k), 2.0 / d); });
    auto lambda = seq(k_max, [&](int k) { return std::sqrt(1.0 + nu[size_t(k - 1)]); });
    return SpectralModel(id, seq(k_max, [](int) { return 0.0; }), std::move(nu), {lambda}, lambda,
                         1.0, ThetaDomain{-kInf, kInf},
                         builtin_spec(id, {{"k_max", k_max}, {"d", d}, {"c", c}}));
  }

  if (id == "smoothing-noise") {
    reject_unknown_params(params, {"k_max", "d", "c", "J"});
    const int k_max = get_int_param(params, "k_max");
    const int d = get_int_param(params, "d", 1);
    const double c = get_param(params, "c", 1.0);
    if (!(c > 0.0)) fail("parameter c must be positive");
    auto rho = seq(k_max, [&](int k) { return c * std::pow(double(k), 2.0 / d); });
    auto nu = seq(k_max, [](int) { return 1.0; });
    auto lambda = seq(k_max, [&](int k) { return std::sqrt(1.0 + rho[size_t(k - 1)]); });
    if (params.count("J")) {
      const int J = get_int_param(params, "J");
      std::vector<std::vector<double>> mu(static_cast<size_t>(J));
      for (int j = 1; j <= J; ++j)
        mu[size_t(j - 1)] =
            seq(k_max, [&](int k) { return std::pow(1.0 + rho[size_t(k - 1)], -0.5 * j); });
      return SpectralModel(
          id, std::move(rho), std::move(nu), std::move(mu), std::move(lambda), 1.0,
          ThetaDomain{-kInf, kInf},
          builtin_spec(id, {{"k_max", k_max}, {"d", d}, {"c", c}, {"J", J}}));
    }
    // Infinitely many drivers; the geometric series sum_j (1+rho)^{-j}
    // collapses to M_k = 1/rho_k exactly.
    auto m_total = seq(k_max, [&](int k) { return 1.0 / rho[size_t(k - 1)]; });
    return SpectralModel::closed_form_noise(
        id, std::move(rho), std::move(nu), std::move(m_total), std::move(lambda), 1.0,
        ThetaDomain{-kInf, kInf}, builtin_spec(id, {{"k_max", k_max}, {"d", d}, {"c", c}}));
  }

  fail("unknown builtin model '" + id + "'");
}

SpectralModel load_model_spec(const nlohmann::json& spec) {
  if (spec.contains("builtin")) {
    std::map<std::string, double> params;
    if (spec.contains("params")) {
      if (!spec["params"].is_object()) fail("model spec: params must be an object");
      for (const auto& [key, value] : spec["params"].items()) {
        if (!value.is_number()) fail("model spec: parameter " + key + " must be a number");
        params[key] = value.get<double>();
      }
    }
    return build_builtin(spec["builtin"].get<std::string>(), params);
  }

  if (!spec.contains("custom")) fail("model spec needs a 'builtin' or 'custom' entry");
  const auto& c = spec["custom"];
  for (const char* key : {"rho", "nu", "mu", "lambda", "m"})
    if (!c.contains(key)) fail(std::string("custom model spec is missing '") + key + "'");

  auto arr = [&](const char* key) {
    if (!c[key].is_array()) fail(std::string("custom model: '") + key + "' must be an array");
    return c[key].get<std::vector<double>>();
  };
  std::vector<double> rho = arr("rho"), nu = arr("nu"), lambda = arr("lambda");
  std::vector<std::vector<double>> mu;
  for (const auto& row : c["mu"]) mu.push_back(row.get<std::vector<double>>());
  if (mu.empty()) fail("custom model: 'mu' needs at least one driver row");

  ThetaDomain domain{-kInf, kInf};
  if (c.contains("theta_domain")) {
    const auto& td = c["theta_domain"];
    if (!td.is_array() || td.size() != 2) fail("custom model: theta_domain must be [lo, hi]");
    if (td[0].is_number()) domain.lo = td[0].get<double>();
    if (td[1].is_number()) domain.hi = td[1].get<double>();
  }
  return SpectralModel("custom", std::move(rho), std::move(nu), std::move(mu), std::move(lambda),
                       c["m"].get<double>(), domain, spec);
}

SpectralModel load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open model spec file " + path.string());
  nlohmann::json spec;
  try {
    in >> spec;
  } catch (const nlohmann::json::exception& e) {
    fail("malformed model spec file " + path.string() + ": " + e.what());
  }
  return load_model_spec(spec);
}

ParabolicityReport check_parabolicity(const SpectralModel& model, double delta, double c1,
                                      double c2, std::span<const double> theta_samples,
                                      int k_range) {
  if (!(delta > 0.0)) fail("delta must be positive");
  if (!(c1 > 0.0)) fail("C1 must be positive");
  if (theta_samples.empty()) fail("theta_samples must be nonempty");
  if (k_range < 1 || k_range > model.k_max())
    fail("k_range out of range (k_max = " + std::to_string(model.k_max()) + ")");
  for (double theta : theta_samples)
    if (!model.theta_domain().contains(theta))
      fail("theta sample " + std::to_string(theta) + " outside the model's theta domain");

  ParabolicityReport report;
  report.delta = delta;
  report.c1 = c1;
  report.c2 = c2;
  report.thetas.assign(theta_samples.begin(), theta_samples.end());
  report.k_checked = k_range;

  for (int k = 1; k <= k_range && !report.first_violation; ++k) {
    const double lam2m = std::pow(model.lambda(k), 2.0 * model.order());
    for (double theta : theta_samples) {
      const double a = model.rho(k) + theta * model.nu(k);
      const double lhs1 = std::abs(a) / lam2m;
      if (lhs1 > c1) {
        report.first_violation =
            ParabolicityViolation{k, theta, ParabolicCondition::drift_bound, lhs1};
        break;
      }
      const double lhs2 = -2.0 * a + model.total_load(k) + delta * lam2m;
      if (lhs2 > c2) {
        report.first_violation =
            ParabolicityViolation{k, theta, ParabolicCondition::coercivity, lhs2};
        break;
      }
    }
  }

  if (report.first_violation)
    report.verdict = Verdict::violated;
  else
    report.verdict = (k_range == model.k_max()) ? Verdict::satisfied : Verdict::inconclusive;
  return report;
}

}  // namespace spde
