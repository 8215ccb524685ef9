#pragma once

// Mode-space description of a diagonalizable bilinear stochastic evolution
// equation.  All operators of the equation
//
//     du + (A0 + theta * A1) u dt = sum_j M_j u dW_j
//
// share one eigenbasis {h_k}, so the model is fully described by the
// eigenvalue sequences
//
//     A0 h_k = rho_k h_k,   A1 h_k = nu_k h_k,
//     M_j h_k = mu_jk h_k,  Lambda h_k = lambda_k h_k,
//
// and each Fourier mode u_k solves the scalar SDE
//
//     du_k = -(rho_k + theta * nu_k) u_k dt + u_k * sum_j mu_jk dW_j,
//
// a geometric Brownian motion.  Models either carry an explicit J x k_max
// loading matrix mu (required for simulation) or only the per-mode totals
// M_k = sum_j mu_jk^2 in closed form (enough for every estimator formula).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace spde {

// Open interval of admissible parameter values; infinite endpoints allowed.
struct ThetaDomain {
  double lo;
  double hi;
  bool contains(double theta) const { return theta > lo && theta < hi; }
};

// Everything mode k contributes to the estimator formulas.
struct ModeCoefficients {
  int k = 0;
  double rho = 0.0;
  double nu = 0.0;
  std::vector<double> mu;  // loading per driver; empty when M is closed-form
  double M = 0.0;          // total squared loading  sum_j mu_jk^2
  double eta = 0.0;        // M / nu^2
};

enum class Verdict { satisfied, violated, inconclusive };

// The two inequalities of the finite parabolicity certificate:
//   drift_bound:  |rho_k + theta*nu_k| / lambda_k^{2m} <= C1
//   coercivity:   -2(rho_k + theta*nu_k) + M_k + delta*lambda_k^{2m} <= C2
enum class ParabolicCondition { drift_bound, coercivity };

struct ParabolicityViolation {
  int k = 0;
  double theta = 0.0;
  ParabolicCondition condition = ParabolicCondition::drift_bound;
  double lhs = 0.0;  // offending left-hand side
};

struct ParabolicityReport {
  Verdict verdict = Verdict::inconclusive;
  double delta = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  std::vector<double> thetas;  // checked parameter samples
  int k_checked = 0;           // inequalities evaluated for k = 1..k_checked
  std::optional<ParabolicityViolation> first_violation;
};

const char* to_string(Verdict v);
const char* to_string(ParabolicCondition c);

class SpectralModel {
 public:
  // Explicit noise loadings: mu_rows[j-1][k-1] is the loading of driver j on
  // mode k.  Every row must have k_max entries; J = mu_rows.size() >= 1.
  SpectralModel(std::string name, std::vector<double> rho, std::vector<double> nu,
                std::vector<std::vector<double>> mu_rows, std::vector<double> lambda,
                double order, ThetaDomain theta_domain, nlohmann::json spec);

  // Noise known only through the totals M_k.  Such models support every
  // estimator but cannot be simulated (no drivers to draw).
  static SpectralModel closed_form_noise(std::string name, std::vector<double> rho,
                                         std::vector<double> nu, std::vector<double> m_total,
                                         std::vector<double> lambda, double order,
                                         ThetaDomain theta_domain, nlohmann::json spec);

  const std::string& name() const { return name_; }
  int k_max() const { return static_cast<int>(nu_.size()); }
  double order() const { return order_; }
  const ThetaDomain& theta_domain() const { return theta_domain_; }

  double rho(int k) const { return rho_[index(k)]; }
  double nu(int k) const { return nu_[index(k)]; }
  double lambda(int k) const { return lambda_[index(k)]; }
  double total_load(int k) const { return m_total_[index(k)]; }  // M_k
  double eta(int k) const;                                       // M_k / nu_k^2

  bool has_explicit_noise() const { return !mu_.empty(); }
  int noise_dimension() const;     // J; throws for closed-form-noise models
  double mu(int j, int k) const;   // driver j in 1..J

  ModeCoefficients mode_coefficients(int k) const;

  // JSON description this model was built from ({"builtin":...} or
  // {"custom":...}); embedded into output sidecars for provenance.
  const nlohmann::json& spec() const { return spec_; }

 private:
  SpectralModel() = default;  // for closed_form_noise
  size_t index(int k) const;  // validates 1 <= k <= k_max
  void validate() const;

  std::string name_;
  std::vector<double> rho_, nu_, lambda_;
  std::vector<std::vector<double>> mu_;  // J rows; empty for closed-form noise
  std::vector<double> m_total_;
  double order_ = 1.0;
  ThetaDomain theta_domain_{0.0, 0.0};
  nlohmann::json spec_;
};

// Builtin model families.  `params` always takes k_max; remaining keys with
// defaults in parentheses:
//   heat-1w          rho=0, nu=k^2, one unit driver                  ()
//   heat-shift       rho=-1/2, nu=k^2, one unit driver               ()
//   figure1          rho=0, nu=k, mu_jk=(-1)^k/(k+j)                 (J=10)
//   lambda-noise     rho=0, nu=c*k^{2/d}, mu_1k=sqrt(1+nu_k)         (d=1, c=1)
//   smoothing-noise  rho=c*k^{2/d}, nu=1, mu_jk=(1+rho_k)^{-j/2};    (d=1, c=1, J optional)
//                    without J the noise is closed-form, M_k = 1/rho_k
SpectralModel build_builtin(const std::string& id, const std::map<std::string, double>& params);

// Parse {"builtin": id, "params": {...}} or {"custom": {"rho": [...],
// "nu": [...], "mu": [[...]], "lambda": [...], "m": m,
// "theta_domain": [lo, hi]}}; custom arrays are indexed from k=1 and
// theta_domain endpoints may be null for an unbounded side.
SpectralModel load_model_spec(const nlohmann::json& spec);
SpectralModel load_model_file(const std::filesystem::path& path);

// Evaluate both certificate inequalities at every (k, theta) pair with
// k = 1..k_range and theta in theta_samples.  Violations report the smallest
// offending k.  A clean sweep over a strict subrange (k_range < k_max) is
// only `inconclusive`: the certificate says nothing beyond the checked range.
ParabolicityReport check_parabolicity(const SpectralModel& model, double delta, double c1,
                                      double c2, std::span<const double> theta_samples,
                                      int k_range);

}  // namespace spde
