#include "spde/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <utility>

#include "spde/detail/format.hpp"

namespace spde {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

[[noreturn]] void fail_numeric(const std::string& msg) { throw numerical_error(msg); }

void require_horizon(double T) {
  if (!(T > 0.0)) fail("horizon T must be positive");
}

}  // namespace

const char* to_string(Family f) {
  switch (f) {
    case Family::mle: return "mle";
    case Family::weighted: return "weighted";
    case Family::aitken: return "aitken";
    case Family::exact: return "exact";
  }
  fail("invalid estimator family value");
}

Family family_from_string(std::string_view name) {
  if (name == "mle") return Family::mle;
  if (name == "weighted") return Family::weighted;
  if (name == "aitken") return Family::aitken;
  if (name == "exact") return Family::exact;
  fail("unknown estimator family '" + std::string(name) + "'");
}

WeightScheme WeightScheme::uniform() { return WeightScheme("uniform", 0, {}); }
WeightScheme WeightScheme::linear() { return WeightScheme("linear", 1, {}); }
WeightScheme WeightScheme::harmonic() { return WeightScheme("harmonic", 2, {}); }

WeightScheme WeightScheme::from_values(std::vector<double> beta) {
  if (beta.empty()) fail("weight list must not be empty");
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (!std::isfinite(beta[i]) || beta[i] < 0.0)
      fail("weight for mode " + std::to_string(i + 1) + " must be finite and nonnegative");
  }
  return WeightScheme("custom", 3, std::move(beta));
}

WeightScheme WeightScheme::by_name(std::string_view name) {
  if (name == "uniform") return uniform();
  if (name == "linear") return linear();
  if (name == "harmonic") return harmonic();
  fail("unknown weight scheme '" + std::string(name) + "'");
}

double WeightScheme::beta(int k) const {
  if (k < 1) fail("mode index must be >= 1");
  switch (kind_) {
    case 0: return 1.0;
    case 1: return static_cast<double>(k);
    case 2: return 1.0 / static_cast<double>(k);
    default:
      if (static_cast<std::size_t>(k) > values_.size())
        fail("weight scheme has no entry for mode " + std::to_string(k));
      return values_[static_cast<std::size_t>(k - 1)];
  }
}

EstimationResult mle_single(const SpectralModel& model, int k, const ObservationSet& obs) {
  require_horizon(obs.T);
  const ModeObservation& mo = obs.at(k);
  EstimationResult r;
  r.theta_hat = mle_from_logratio(mo.v, model.rho(k), model.nu(k), model.total_load(k), obs.T);
  r.family = Family::mle;
  r.modes_used = {k};
  r.theoretical_mse = mle_variance(model, k, obs.T);
  return r;
}

double mle_variance(const SpectralModel& model, int k, double T) {
  require_horizon(T);
  return model.eta(k) / T;
}

EstimationResult weighted_average(const SpectralModel& model, const ObservationSet& obs,
                                  const WeightScheme& scheme, int n_modes) {
  require_horizon(obs.T);
  if (n_modes < 1) fail("weighted average needs at least one mode");
  if (n_modes > model.k_max())
    fail("weighted average over " + std::to_string(n_modes) + " modes exceeds k_max = " +
         std::to_string(model.k_max()));
  // Plain ascending accumulation; the Monte Carlo harness repeats these exact
  // operations as prefix sums, so both paths agree bitwise.
  double num = 0.0;
  double den = 0.0;
  EstimationResult r;
  r.family = Family::weighted;
  r.modes_used.reserve(static_cast<std::size_t>(n_modes));
  for (int k = 1; k <= n_modes; ++k) {
    const ModeObservation& mo = obs.at(k);
    const double b = scheme.beta(k);
    num += b * mle_from_logratio(mo.v, model.rho(k), model.nu(k), model.total_load(k), obs.T);
    den += b;
    r.modes_used.push_back(k);
  }
  if (!(den > 0.0)) fail("weights over modes 1.." + std::to_string(n_modes) + " sum to zero");
  r.theta_hat = num / den;
  if (model.has_explicit_noise())
    r.theoretical_mse = weighted_variance(model, scheme, n_modes, obs.T);
  return r;
}

double weighted_variance(const SpectralModel& model, const WeightScheme& scheme, int n_modes,
                         double T) {
  require_horizon(T);
  if (n_modes < 1 || n_modes > model.k_max())
    fail("mode count " + std::to_string(n_modes) + " out of range (k_max = " +
         std::to_string(model.k_max()) + ")");
  const int J = model.noise_dimension();
  double den = 0.0;
  for (int k = 1; k <= n_modes; ++k) den += scheme.beta(k);
  if (!(den > 0.0)) fail("weights over modes 1.." + std::to_string(n_modes) + " sum to zero");
  double v = 0.0;
  for (int j = 1; j <= J; ++j) {
    double s = 0.0;
    for (int k = 1; k <= n_modes; ++k) s += scheme.beta(k) * model.mu(j, k) / model.nu(k);
    const double t = s / den;
    v += t * t;
  }
  return v / T;
}

AitkenSequence aitken(std::span<const double> seq) {
  if (seq.size() < 3) fail("Aitken transform needs at least 3 values");
  double max_abs = 0.0;
  for (double a : seq) max_abs = std::max(max_abs, std::abs(a));
  const double tol = tol_aitken * max_abs;
  AitkenSequence out;
  out.values.reserve(seq.size() - 2);
  out.passthrough.reserve(seq.size() - 2);
  for (std::size_t i = 0; i + 2 < seq.size(); ++i) {
    const double d = seq[i + 2] - 2.0 * seq[i + 1] + seq[i];
    // <= so an all-zero input (tol = 0) still passes through instead of 0/0.
    if (std::abs(d) <= tol) {
      out.values.push_back(seq[i]);
      out.passthrough.push_back(true);
    } else {
      const double e = seq[i + 1] - seq[i];
      out.values.push_back(seq[i] - e * e / d);
      out.passthrough.push_back(false);
    }
  }
  return out;
}

double aitken_deterministic_ratio(std::span<const double> r_seq, int k) {
  if (k < 1) fail("index must be >= 1");
  if (static_cast<std::size_t>(k) + 1 >= r_seq.size())
    fail("index " + std::to_string(k) + " needs entries up to " + std::to_string(k + 2) +
         "; sequence has " + std::to_string(r_seq.size()));
  const double a0 = r_seq[static_cast<std::size_t>(k - 1)];
  const double a1 = r_seq[static_cast<std::size_t>(k)];
  const double a2 = r_seq[static_cast<std::size_t>(k + 1)];
  if (a0 == 0.0) fail_numeric("coefficient at index " + std::to_string(k) + " is zero");
  const double d = a2 - 2.0 * a1 + a0;
  const double scale = std::max({std::abs(a0), std::abs(a1), std::abs(a2)});
  if (std::abs(d) <= tol_aitken * scale)
    fail_numeric("degenerate second difference at index " + std::to_string(k));
  const double e = a1 - a0;
  const double g = a0 - e * e / d;
  const double ratio = g / a0;
  return ratio * ratio;
}

std::vector<EstimationResult> aitken_estimates(const SpectralModel& model,
                                               const ObservationSet& obs, int n_modes) {
  require_horizon(obs.T);
  if (n_modes < 3) fail("Aitken transform needs at least 3 modes");
  if (n_modes > model.k_max())
    fail("mode count " + std::to_string(n_modes) + " out of range (k_max = " +
         std::to_string(model.k_max()) + ")");
  std::vector<double> theta;
  theta.reserve(static_cast<std::size_t>(n_modes));
  for (int k = 1; k <= n_modes; ++k) {
    const ModeObservation& mo = obs.at(k);
    theta.push_back(
        mle_from_logratio(mo.v, model.rho(k), model.nu(k), model.total_load(k), obs.T));
  }
  const AitkenSequence t = aitken(theta);
  std::vector<EstimationResult> out;
  out.reserve(t.values.size());
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    EstimationResult r;
    r.theta_hat = t.values[i];
    r.family = Family::aitken;
    const int k = static_cast<int>(i) + 1;
    r.modes_used = {k, k + 1, k + 2};
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

// Null-space vector of the J x n loading matrix over the chosen modes, by
// Gaussian elimination with partial pivoting in extended precision.  Among
// the free columns, picks the null vector with the largest drift denominator
// |sum_l c_l nu_l|.
std::vector<long double> annihilating_vector(const SpectralModel& model,
                                             const std::vector<int>& modes) {
  const int J = model.noise_dimension();
  const std::size_t n = modes.size();
  std::vector<std::vector<long double>> a(static_cast<std::size_t>(J),
                                          std::vector<long double>(n, 0.0L));
  long double scale = 0.0L;
  for (int j = 1; j <= J; ++j)
    for (std::size_t l = 0; l < n; ++l) {
      const long double x = model.mu(j, modes[l]);
      a[static_cast<std::size_t>(j - 1)][l] = x;
      scale = std::max(scale, std::abs(x));
    }
  const long double tol_pivot = 1e-12L * scale;

  std::vector<std::size_t> pivot_row_of_col(n, static_cast<std::size_t>(-1));
  std::vector<std::size_t> pivot_cols;
  std::size_t row = 0;
  for (std::size_t col = 0; col < n && row < a.size(); ++col) {
    std::size_t best = row;
    for (std::size_t r = row + 1; r < a.size(); ++r)
      if (std::abs(a[r][col]) > std::abs(a[best][col])) best = r;
    if (std::abs(a[best][col]) <= tol_pivot) continue;
    std::swap(a[row], a[best]);
    for (std::size_t r = row + 1; r < a.size(); ++r) {
      const long double f = a[r][col] / a[row][col];
      if (f == 0.0L) continue;
      a[r][col] = 0.0L;
      for (std::size_t c = col + 1; c < n; ++c) a[r][c] -= f * a[row][c];
    }
    pivot_row_of_col[col] = row;
    pivot_cols.push_back(col);
    ++row;
  }

  std::vector<std::size_t> free_cols;
  for (std::size_t col = 0; col < n; ++col)
    if (pivot_row_of_col[col] == static_cast<std::size_t>(-1)) free_cols.push_back(col);
  if (free_cols.empty())
    fail_numeric("no noise-annihilating combination: loadings over the given modes have "
                 "full column rank; add more modes");

  std::vector<long double> best_x;
  long double best_den = 0.0L;
  for (std::size_t f : free_cols) {
    std::vector<long double> x(n, 0.0L);
    x[f] = 1.0L;
    for (std::size_t p = pivot_cols.size(); p-- > 0;) {
      const std::size_t col = pivot_cols[p];
      const std::size_t r = pivot_row_of_col[col];
      long double s = 0.0L;
      for (std::size_t c = col + 1; c < n; ++c) s += a[r][c] * x[c];
      x[col] = -s / a[r][col];
    }
    long double den = 0.0L;
    for (std::size_t l = 0; l < n; ++l) den += x[l] * static_cast<long double>(model.nu(modes[l]));
    if (best_x.empty() || std::abs(den) > std::abs(best_den)) {
      best_den = den;
      best_x = std::move(x);
    }
  }
  return best_x;
}

void check_modes_subset(const SpectralModel& model, const std::vector<int>& modes) {
  if (modes.empty()) fail("mode list must not be empty");
  std::set<int> seen;
  for (int k : modes) {
    if (k < 1 || k > model.k_max())
      fail("mode " + std::to_string(k) + " out of range (k_max = " +
           std::to_string(model.k_max()) + ")");
    if (!seen.insert(k).second) fail("duplicate mode " + std::to_string(k) + " in mode list");
  }
}

}  // namespace

ExactCombination exact_combination(const SpectralModel& model, std::vector<int> modes) {
  check_modes_subset(model, modes);
  const int J = model.noise_dimension();
  const std::size_t n = modes.size();

  ExactCombination combo;
  combo.modes = std::move(modes);

  // A mode with no noise at all determines theta by itself.
  for (std::size_t l = 0; l < n; ++l) {
    bool zero_row = true;
    for (int j = 1; j <= J && zero_row; ++j)
      if (model.mu(j, combo.modes[l]) != 0.0) zero_row = false;
    if (zero_row) {
      combo.weights.assign(n, 0.0);
      combo.weights[l] = 1.0;
      combo.denominator = model.nu(combo.modes[l]);
      return combo;
    }
  }

  std::vector<long double> x = annihilating_vector(model, combo.modes);

  // Normalize so the first largest-magnitude weight is +1.
  std::size_t imax = 0;
  for (std::size_t l = 1; l < n; ++l)
    if (std::abs(x[l]) > std::abs(x[imax])) imax = l;
  const long double piv = x[imax];
  long double den = 0.0L;
  long double norm_sq = 0.0L;
  for (std::size_t l = 0; l < n; ++l) {
    x[l] /= piv;
    den += x[l] * static_cast<long double>(model.nu(combo.modes[l]));
    norm_sq += x[l] * x[l];
  }
  if (std::abs(den) <= tol_denom)
    fail_numeric("annihilating combination has a vanishing drift denominator; choose "
                 "different modes");

  // Confirm the combination really kills every driver.
  long double resid_sq = 0.0L;
  for (int j = 1; j <= J; ++j) {
    long double s = 0.0L;
    for (std::size_t l = 0; l < n; ++l)
      s += x[l] * static_cast<long double>(model.mu(j, combo.modes[l]));
    resid_sq += s * s;
  }
  if (std::sqrt(static_cast<double>(resid_sq)) >
      tol_null * std::sqrt(static_cast<double>(norm_sq)))
    fail_numeric("combination leaves a noise residual above tolerance; the loading matrix "
                 "is too ill-conditioned");

  combo.weights.resize(n);
  for (std::size_t l = 0; l < n; ++l) combo.weights[l] = static_cast<double>(x[l]);
  combo.denominator = static_cast<double>(den);
  return combo;
}

EstimationResult exact_estimate(const SpectralModel& model, const ExactCombination& combo,
                                const ObservationSet& obs) {
  require_horizon(obs.T);
  check_modes_subset(model, combo.modes);
  if (combo.weights.size() != combo.modes.size())
    fail("combination has " + std::to_string(combo.weights.size()) + " weights for " +
         std::to_string(combo.modes.size()) + " modes");

  const std::size_t n = combo.modes.size();
  const int J = model.noise_dimension();
  long double norm_sq = 0.0L;
  for (double w : combo.weights) norm_sq += static_cast<long double>(w) * w;
  long double resid_sq = 0.0L;
  for (int j = 1; j <= J; ++j) {
    long double s = 0.0L;
    for (std::size_t l = 0; l < n; ++l)
      s += static_cast<long double>(combo.weights[l]) *
           static_cast<long double>(model.mu(j, combo.modes[l]));
    resid_sq += s * s;
  }
  if (std::sqrt(static_cast<double>(resid_sq)) >
      tol_null * std::sqrt(static_cast<double>(norm_sq)))
    fail_numeric("combination does not annihilate the noise for this model");

  long double den = 0.0L;
  long double sv = 0.0L;
  long double drift = 0.0L;
  for (std::size_t l = 0; l < n; ++l) {
    const int k = combo.modes[l];
    const long double c = combo.weights[l];
    den += c * static_cast<long double>(model.nu(k));
    sv += c * static_cast<long double>(obs.at(k).v);
    drift += c * (static_cast<long double>(model.rho(k)) +
                  static_cast<long double>(model.total_load(k)) / 2.0L);
  }
  if (std::abs(den) <= tol_denom)
    fail_numeric("combination has a vanishing drift denominator");

  EstimationResult r;
  r.theta_hat = static_cast<double>((-sv / static_cast<long double>(obs.T) - drift) / den);
  r.family = Family::exact;
  r.modes_used = combo.modes;
  r.theoretical_mse = 0.0;
  return r;
}

EstimationResult exact_pairwise(const SpectralModel& model, int k, int n,
                                const ObservationSet& obs) {
  require_horizon(obs.T);
  if (k == n) fail("pairwise combination needs two distinct modes");
  const int J = model.noise_dimension();
  for (int j = 1; j <= J; ++j) {
    const double d = model.mu(j, k) - model.mu(j, n);
    const double s = std::max({std::abs(model.mu(j, k)), std::abs(model.mu(j, n)), 1.0});
    if (std::abs(d) > tol_null * s)
      fail_numeric("loadings do not cancel: modes " + std::to_string(k) + " and " +
                   std::to_string(n) + " differ in driver " + std::to_string(j));
  }
  const double dv = model.nu(k) - model.nu(n);
  if (std::abs(dv) <= tol_denom)
    fail_numeric("modes " + std::to_string(k) + " and " + std::to_string(n) +
                 " share the same drift coefficient; denominator vanishes");
  const double v_k = obs.at(k).v;
  const double v_n = obs.at(n).v;
  const double drift = model.rho(k) - model.rho(n) +
                       (model.total_load(k) - model.total_load(n)) / 2.0;
  EstimationResult r;
  r.theta_hat = (v_n - v_k) / (obs.T * dv) - drift / dv;
  r.family = Family::exact;
  r.modes_used = {k, n};
  r.theoretical_mse = 0.0;
  return r;
}

std::string to_csv_row(const EstimationResult& result) {
  std::string row = to_string(result.family);
  row += ',';
  row += detail::fmt(result.theta_hat);
  row += ',';
  for (std::size_t i = 0; i < result.modes_used.size(); ++i) {
    if (i != 0) row += ';';
    row += std::to_string(result.modes_used[i]);
  }
  row += ',';
  if (result.theoretical_mse) row += detail::fmt(*result.theoretical_mse);
  return row;
}

}  // namespace spde
