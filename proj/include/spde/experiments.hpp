#pragma once

// Monte Carlo harness: repeated exact simulation of the mode system under a
// known theta, with per-replicate evaluation of every enabled estimator and
// streaming central-moment accumulation of the errors theta_hat - theta0.
//
// Replicate i always draws from the seed stream_seed(root_seed, i), and
// replicates are processed in fixed-size blocks whose partial moments are
// merged in block order.  The report is therefore byte-identical for any
// thread count, including 1.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spde/estimators.hpp"

namespace spde {

// Streaming first four central moments (mean, and sums of squared, cubed,
// fourth-power deviations).  add() and merge() are exact in the sense of the
// usual one-pass update identities; internals are long double for headroom.
class MomentAccumulator {
 public:
  void add(double x);
  void merge(const MomentAccumulator& other);

  long long count() const { return n_; }
  double mean() const;
  double variance() const;        // population, sum((x-mean)^2)/n
  double mean_square() const;     // variance + mean^2
  double third_central() const;   // sum((x-mean)^3)/n
  double fourth_central() const;  // sum((x-mean)^4)/n

 private:
  long long n_ = 0;
  long double m1_ = 0.0L;
  long double m2_ = 0.0L;
  long double m3_ = 0.0L;
  long double m4_ = 0.0L;
};

struct NormalityStats {
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

// Shape statistics of the accumulated sample.  Throws std::invalid_argument
// below 8 samples and numerical_error on zero variance.
NormalityStats normality_stats(const MomentAccumulator& acc);

struct MCConfig {
  nlohmann::json model_spec;  // as accepted by load_model_spec
  double theta0 = 1.0;
  double T = 1.0;
  long long replicates = 10000;
  std::uint64_t root_seed = 1;
  int k_range = 1;  // estimators use modes 1..k_range

  bool run_mle = true;
  std::optional<std::string> weighted_scheme;  // uniform / linear / harmonic
  bool run_aitken = false;
  bool run_exact = false;
  std::vector<int> exact_modes;  // empty: modes 1..J+1
  int threads = 0;               // 0: hardware concurrency

  nlohmann::json to_json() const;
  static MCConfig from_json(const nlohmann::json& j);
};

struct EstimatorStats {
  Family family = Family::mle;
  int k = 0;  // mode label; weighted: number of modes averaged; exact: 0
  double bias = 0.0;
  double mse_empirical = 0.0;
  std::optional<double> mse_theoretical;
  double skewness = 0.0;         // NaN when the error sample is degenerate
  double excess_kurtosis = 0.0;  // NaN when the error sample is degenerate
  long long replicates = 0;
};

struct MCReport {
  MCConfig config;
  std::vector<EstimatorStats> rows;
};

MCReport run_monte_carlo(const MCConfig& config);

inline constexpr const char* report_csv_header =
    "estimator,k,bias,mse_empirical,mse_theoretical,skewness,excess_kurtosis,replicates";

// Writes the rows as CSV at `path` and the configuration as JSON alongside
// at `path` + ".json".  Output carries no timestamps, so identical runs
// produce identical bytes.
void emit_report(const MCReport& report, const std::string& path);

std::vector<EstimatorStats> read_report(const std::string& path);

}  // namespace spde
