#pragma once

// The four estimator families for the drift parameter theta, all computed
// from terminal log-ratios v_k = ln(u_k(T)/u_k(0)):
//
//   mle       single-mode maximum likelihood, MSE eta_k / T
//   weighted  beta-weighted mean of the first N single-mode estimates
//   aitken    Delta^2 transform of the estimate sequence in k
//   exact     noise-annihilating linear combination of log-ratios; recovers
//             theta with zero statistical error on any single realization
//
// The exact family exists because the modes share their Wiener drivers: a
// weight vector c with sum_l c_l * mu_{j,k_l} = 0 for every driver j removes
// all randomness from the combined log-ratio, leaving theta in closed form.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spde/noise_sim.hpp"
#include "spde/spectral_model.hpp"

namespace spde {

// Estimation failed for numerical reasons (no annihilating combination,
// degenerate denominator, degenerate sample).  The CLI maps this to exit
// code 2, distinct from usage errors.
class numerical_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tolerances for the exact-combination algebra and the Aitken transform.
inline constexpr double tol_null = 1e-10;   // annihilation residual bound, times ||c||
inline constexpr double tol_denom = 1e-12;  // minimum usable |sum_l c_l nu_l|
inline constexpr double tol_aitken = 1e-12;  // degenerate Delta^2 threshold, times max|a_n|

enum class Family { mle, weighted, aitken, exact };

const char* to_string(Family f);
Family family_from_string(std::string_view name);

struct EstimationResult {
  double theta_hat = 0.0;
  Family family = Family::mle;
  std::vector<int> modes_used;
  // eta_k/T for mle, V_N/T for weighted, 0 for exact, absent for aitken.
  std::optional<double> theoretical_mse;
};

// Nonnegative weights beta_k for the averaged estimator.
class WeightScheme {
 public:
  static WeightScheme uniform();   // beta_k = 1
  static WeightScheme linear();    // beta_k = k
  static WeightScheme harmonic();  // beta_k = 1/k
  static WeightScheme from_values(std::vector<double> beta);  // beta[k-1], k-indexed
  static WeightScheme by_name(std::string_view name);

  double beta(int k) const;
  const std::string& name() const { return name_; }

 private:
  WeightScheme(std::string name, int kind, std::vector<double> values)
      : name_(std::move(name)), kind_(kind), values_(std::move(values)) {}
  std::string name_;
  int kind_;  // 0 uniform, 1 linear, 2 harmonic, 3 explicit values
  std::vector<double> values_;
};

// Single-mode MLE.  The obs entry for mode k supplies v_k and T.
EstimationResult mle_single(const SpectralModel& model, int k, const ObservationSet& obs);

// Core formula, shared with the Monte Carlo harness so both paths produce
// identical doubles: theta_hat = -v/(nu T) - M/(2 nu) - rho/nu.
inline double mle_from_logratio(double v, double rho, double nu, double M, double T) {
  return -v / (nu * T) - M / (2.0 * nu) - rho / nu;
}

// Theoretical MSE of the single-mode MLE: eta_k / T.
double mle_variance(const SpectralModel& model, int k, double T);

// beta-weighted mean of the single-mode MLEs over modes 1..n_modes.
EstimationResult weighted_average(const SpectralModel& model, const ObservationSet& obs,
                                  const WeightScheme& scheme, int n_modes);

// Theoretical MSE of the weighted estimator:
//   V_N = sum_j ( sum_{k<=N} beta_k mu_jk / nu_k / sum_{k<=N} beta_k )^2,
// returned as V_N / T.  Needs explicit loading rows.
double weighted_variance(const SpectralModel& model, const WeightScheme& scheme, int n_modes,
                         double T);

struct AitkenSequence {
  std::vector<double> values;  // entry i: transform applied at input index i
  // true where the second difference was degenerate and the input value was
  // passed through untransformed (keeps Monte Carlo pipelines alive).
  std::vector<bool> passthrough;
};

// Delta^2 transform b_i = a_i - (a_{i+1}-a_i)^2 / (a_{i+2}-2a_{i+1}+a_i);
// output is two entries shorter than the input.
AitkenSequence aitken(std::span<const double> seq);

// Exact single-driver MSE ratio of the transformed estimator to the plain
// one at index k (1-based), for a deterministic coefficient sequence r:
// returns (g_k / r_k)^2 with g_k the Delta^2 transform of r at k.
double aitken_deterministic_ratio(std::span<const double> r_seq, int k);

// Convenience: MLE sequence over modes 1..n_modes, then the Aitken transform;
// entry for k uses modes {k, k+1, k+2} and carries no theoretical MSE.
std::vector<EstimationResult> aitken_estimates(const SpectralModel& model,
                                               const ObservationSet& obs, int n_modes);

// Noise-annihilating weight vector over a mode subset.
struct ExactCombination {
  std::vector<int> modes;
  std::vector<double> weights;
  double denominator = 0.0;  // sum_l weights[l] * nu(modes[l]), nonzero
};

// Compute weights c != 0 with sum_l c_l mu_{j,k_l} = 0 for every driver j and
// sum_l c_l nu_{k_l} != 0, by elimination on the J x n loading matrix.  With
// J drivers, J+1 generic modes suffice.  If some mode carries no noise at
// all, its indicator vector is returned directly.  The result is normalized
// so its largest-magnitude weight equals +1.
ExactCombination exact_combination(const SpectralModel& model, std::vector<int> modes);

// theta = [ -(1/T) sum_l c_l v_{k_l} - sum_l c_l (rho_{k_l} + M_{k_l}/2) ]
//         / sum_l c_l nu_{k_l}
// Exact on synthetic data up to floating rounding; theoretical_mse = 0.
EstimationResult exact_estimate(const SpectralModel& model, const ExactCombination& combo,
                                const ObservationSet& obs);

// Two-mode special case for equal loading rows (mu_jk = mu_jn for all j),
// where c = (1, -1) cancels the noise:
//   theta = (v_n - v_k) / (T (nu_k - nu_n))
//           - (rho_k - rho_n + (M_k - M_n)/2) / (nu_k - nu_n)
EstimationResult exact_pairwise(const SpectralModel& model, int k, int n,
                                const ObservationSet& obs);

inline constexpr const char* result_csv_header = "family,theta_hat,modes,theoretical_mse";

// One CSV row per the header above; modes joined with ';', empty last field
// when no theoretical MSE is defined.
std::string to_csv_row(const EstimationResult& result);

}  // namespace spde
