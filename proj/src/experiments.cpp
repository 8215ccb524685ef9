#include "spde/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>
#include <utility>

#include "spde/detail/format.hpp"

namespace spde {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

void MomentAccumulator::add(double x) {
  const long long n1 = n_;
  n_ += 1;
  const long double n = static_cast<long double>(n_);
  const long double delta = static_cast<long double>(x) - m1_;
  const long double delta_n = delta / n;
  const long double delta_n2 = delta_n * delta_n;
  const long double term1 = delta * delta_n * static_cast<long double>(n1);
  m1_ += delta_n;
  m4_ += term1 * delta_n2 * (n * n - 3.0L * n + 3.0L) + 6.0L * delta_n2 * m2_ -
         4.0L * delta_n * m3_;
  m3_ += term1 * delta_n * (n - 2.0L) - 3.0L * delta_n * m2_;
  m2_ += term1;
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const long double na = static_cast<long double>(n_);
  const long double nb = static_cast<long double>(other.n_);
  const long double n = na + nb;
  const long double delta = other.m1_ - m1_;
  const long double m2 = m2_ + other.m2_ + delta * delta * na * nb / n;
  const long double m3 = m3_ + other.m3_ +
                         delta * delta * delta * na * nb * (na - nb) / (n * n) +
                         3.0L * delta * (na * other.m2_ - nb * m2_) / n;
  const long double d2 = delta * delta;
  const long double m4 = m4_ + other.m4_ +
                         d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
                         6.0L * d2 * (na * na * other.m2_ + nb * nb * m2_) / (n * n) +
                         4.0L * delta * (na * other.m3_ - nb * m3_) / n;
  m1_ += delta * nb / n;
  m2_ = m2;
  m3_ = m3;
  m4_ = m4;
  n_ += other.n_;
}

double MomentAccumulator::mean() const { return n_ == 0 ? 0.0 : static_cast<double>(m1_); }

double MomentAccumulator::variance() const {
  return n_ == 0 ? 0.0 : static_cast<double>(m2_ / static_cast<long double>(n_));
}

double MomentAccumulator::mean_square() const {
  const double m = mean();
  return variance() + m * m;
}

double MomentAccumulator::third_central() const {
  return n_ == 0 ? 0.0 : static_cast<double>(m3_ / static_cast<long double>(n_));
}

double MomentAccumulator::fourth_central() const {
  return n_ == 0 ? 0.0 : static_cast<double>(m4_ / static_cast<long double>(n_));
}

NormalityStats normality_stats(const MomentAccumulator& acc) {
  if (acc.count() < 8) fail("need at least 8 samples for shape statistics");
  const double m2 = acc.variance();
  if (!(m2 > 0.0)) throw numerical_error("degenerate sample: zero variance");
  NormalityStats s;
  s.skewness = acc.third_central() / (m2 * std::sqrt(m2));
  s.excess_kurtosis = acc.fourth_central() / (m2 * m2) - 3.0;
  return s;
}

nlohmann::json MCConfig::to_json() const {
  nlohmann::json j;
  j["model"] = model_spec;
  j["theta0"] = theta0;
  j["T"] = T;
  j["replicates"] = replicates;
  j["seed"] = root_seed;
  j["k_range"] = k_range;
  j["mle"] = run_mle;
  if (weighted_scheme)
    j["weighted"] = *weighted_scheme;
  else
    j["weighted"] = nullptr;
  j["aitken"] = run_aitken;
  j["exact"] = run_exact;
  j["exact_modes"] = exact_modes;
  j["threads"] = threads;
  return j;
}

MCConfig MCConfig::from_json(const nlohmann::json& j) {
  MCConfig c;
  if (!j.contains("model")) fail("Monte Carlo config needs a 'model' entry");
  c.model_spec = j.at("model");
  c.theta0 = j.value("theta0", c.theta0);
  c.T = j.value("T", c.T);
  c.replicates = j.value("replicates", c.replicates);
  c.root_seed = j.value("seed", c.root_seed);
  c.k_range = j.value("k_range", c.k_range);
  c.run_mle = j.value("mle", c.run_mle);
  if (j.contains("weighted") && !j.at("weighted").is_null())
    c.weighted_scheme = j.at("weighted").get<std::string>();
  c.run_aitken = j.value("aitken", c.run_aitken);
  c.run_exact = j.value("exact", c.run_exact);
  if (j.contains("exact_modes")) c.exact_modes = j.at("exact_modes").get<std::vector<int>>();
  c.threads = j.value("threads", c.threads);
  return c;
}

namespace {

struct BlockState {
  std::vector<MomentAccumulator> mle;
  std::vector<MomentAccumulator> wavg;
  std::vector<MomentAccumulator> aitk;
  MomentAccumulator exact;
};

}  // namespace

MCReport run_monte_carlo(const MCConfig& config) {
  const SpectralModel model = load_model_spec(config.model_spec);
  if (!(config.T > 0.0)) fail("horizon T must be positive");
  if (config.replicates < 1) fail("replicate count must be >= 1");
  const int K = config.k_range;
  if (K < 1 || K > model.k_max())
    fail("mode range 1.." + std::to_string(K) + " out of range (k_max = " +
         std::to_string(model.k_max()) + ")");
  if (!model.theta_domain().contains(config.theta0))
    fail("theta0 = " + detail::fmt(config.theta0) + " outside the model's theta domain");
  if (!config.run_mle && !config.weighted_scheme && !config.run_aitken && !config.run_exact)
    fail("no estimator family enabled");
  if (config.run_aitken && K < 3) fail("Aitken transform needs at least 3 modes");
  const int J = model.noise_dimension();

  std::optional<WeightScheme> scheme;
  if (config.weighted_scheme) scheme = WeightScheme::by_name(*config.weighted_scheme);

  ExactCombination combo;
  if (config.run_exact) {
    std::vector<int> exact_modes = config.exact_modes;
    if (exact_modes.empty()) {
      if (J + 1 > model.k_max())
        fail("default exact combination needs modes 1.." + std::to_string(J + 1) +
             ", but k_max = " + std::to_string(model.k_max()));
      for (int k = 1; k <= J + 1; ++k) exact_modes.push_back(k);
    }
    combo = exact_combination(model, std::move(exact_modes));
  }

  // Simulate enough modes to cover both the estimator range and the exact
  // combination, which may reach beyond it.
  int k_sim = K;
  for (int k : combo.modes) k_sim = std::max(k_sim, k);

  struct ModePre {
    double rho = 0.0;
    double nu = 0.0;
    double load = 0.0;
    double drift = 0.0;  // deterministic part of v at theta0
    std::vector<double> mu;
  };
  std::vector<ModePre> pre(static_cast<std::size_t>(k_sim));
  for (int k = 1; k <= k_sim; ++k) {
    ModePre& p = pre[static_cast<std::size_t>(k - 1)];
    p.rho = model.rho(k);
    p.nu = model.nu(k);
    p.load = model.total_load(k);
    // Same expression as the single-realization simulator, so a replicate
    // reproduces it bit for bit at the same seed.
    p.drift = -(p.rho + config.theta0 * p.nu + 0.5 * p.load) * config.T;
    p.mu.resize(static_cast<std::size_t>(J));
    for (int j = 1; j <= J; ++j) p.mu[static_cast<std::size_t>(j - 1)] = model.mu(j, k);
  }

  std::vector<double> beta(static_cast<std::size_t>(K), 0.0);
  std::vector<double> wden(static_cast<std::size_t>(K), 0.0);
  if (scheme) {
    double den = 0.0;
    for (int k = 1; k <= K; ++k) {
      beta[static_cast<std::size_t>(k - 1)] = scheme->beta(k);
      den += beta[static_cast<std::size_t>(k - 1)];
      if (!(den > 0.0)) fail("weights over modes 1.." + std::to_string(k) + " sum to zero");
      wden[static_cast<std::size_t>(k - 1)] = den;
    }
  }

  long double ex_drift = 0.0L;
  long double ex_den = 0.0L;
  if (config.run_exact) {
    for (std::size_t l = 0; l < combo.modes.size(); ++l) {
      const ModePre& p = pre[static_cast<std::size_t>(combo.modes[l] - 1)];
      const long double c = combo.weights[l];
      ex_den += c * static_cast<long double>(p.nu);
      ex_drift += c * (static_cast<long double>(p.rho) + static_cast<long double>(p.load) / 2.0L);
    }
  }

  const long long R = config.replicates;
  const long long block_size = 512;  // fixed, so the merge tree ignores thread count
  const long long n_blocks = (R + block_size - 1) / block_size;
  std::vector<BlockState> blocks(static_cast<std::size_t>(n_blocks));

  const double sd = std::sqrt(config.T);
  const int n_aitken = config.run_aitken ? K - 2 : 0;

  auto run_block = [&](long long b) {
    BlockState& st = blocks[static_cast<std::size_t>(b)];
    if (config.run_mle) st.mle.resize(static_cast<std::size_t>(K));
    if (scheme) st.wavg.resize(static_cast<std::size_t>(K));
    if (n_aitken > 0) st.aitk.resize(static_cast<std::size_t>(n_aitken));
    std::vector<double> w(static_cast<std::size_t>(J));
    std::vector<double> v(static_cast<std::size_t>(k_sim));
    std::vector<double> th(static_cast<std::size_t>(k_sim));
    const long long lo = b * block_size;
    const long long hi = std::min(R, lo + block_size);
    for (long long i = lo; i < hi; ++i) {
      GaussianStream g(stream_seed(config.root_seed, static_cast<std::uint64_t>(i)));
      for (int j = 0; j < J; ++j) w[static_cast<std::size_t>(j)] = sd * g.next();
      for (int k = 1; k <= k_sim; ++k) {
        const ModePre& p = pre[static_cast<std::size_t>(k - 1)];
        double vk = p.drift;
        for (int j = 0; j < J; ++j)
          vk += p.mu[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(j)];
        v[static_cast<std::size_t>(k - 1)] = vk;
        th[static_cast<std::size_t>(k - 1)] =
            mle_from_logratio(vk, p.rho, p.nu, p.load, config.T);
      }
      if (config.run_mle)
        for (int k = 0; k < K; ++k)
          st.mle[static_cast<std::size_t>(k)].add(th[static_cast<std::size_t>(k)] -
                                                  config.theta0);
      if (scheme) {
        double num = 0.0;
        for (int k = 0; k < K; ++k) {
          num += beta[static_cast<std::size_t>(k)] * th[static_cast<std::size_t>(k)];
          st.wavg[static_cast<std::size_t>(k)].add(num / wden[static_cast<std::size_t>(k)] -
                                                   config.theta0);
        }
      }
      if (n_aitken > 0) {
        const AitkenSequence a = aitken(std::span<const double>(th.data(),
                                                                static_cast<std::size_t>(K)));
        for (int k = 0; k < n_aitken; ++k)
          st.aitk[static_cast<std::size_t>(k)].add(a.values[static_cast<std::size_t>(k)] -
                                                   config.theta0);
      }
      if (config.run_exact) {
        long double sv = 0.0L;
        for (std::size_t l = 0; l < combo.modes.size(); ++l)
          sv += static_cast<long double>(combo.weights[l]) *
                static_cast<long double>(v[static_cast<std::size_t>(combo.modes[l] - 1)]);
        const double est = static_cast<double>(
            (-sv / static_cast<long double>(config.T) - ex_drift) / ex_den);
        st.exact.add(est - config.theta0);
      }
    }
  };

  int n_threads = config.threads;
  if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
  if (n_threads < 1) n_threads = 1;
  n_threads = static_cast<int>(std::min<long long>(n_threads, n_blocks));

  if (n_threads == 1) {
    for (long long b = 0; b < n_blocks; ++b) run_block(b);
  } else {
    std::atomic<long long> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (;;) {
          const long long b = next.fetch_add(1);
          if (b >= n_blocks) return;
          run_block(b);
        }
      });
    for (auto& t : pool) t.join();
  }

  // Merge in block order: identical result for every thread count.
  BlockState total;
  if (config.run_mle) total.mle.resize(static_cast<std::size_t>(K));
  if (scheme) total.wavg.resize(static_cast<std::size_t>(K));
  if (n_aitken > 0) total.aitk.resize(static_cast<std::size_t>(n_aitken));
  for (const BlockState& st : blocks) {
    for (std::size_t k = 0; k < total.mle.size(); ++k) total.mle[k].merge(st.mle[k]);
    for (std::size_t k = 0; k < total.wavg.size(); ++k) total.wavg[k].merge(st.wavg[k]);
    for (std::size_t k = 0; k < total.aitk.size(); ++k) total.aitk[k].merge(st.aitk[k]);
    total.exact.merge(st.exact);
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto make_row = [&](Family f, int k, const MomentAccumulator& acc,
                      std::optional<double> mse_th) {
    EstimatorStats s;
    s.family = f;
    s.k = k;
    s.bias = acc.mean();
    s.mse_empirical = acc.mean_square();
    s.mse_theoretical = mse_th;
    if (acc.count() >= 8 && acc.variance() > 0.0) {
      const NormalityStats ns = normality_stats(acc);
      s.skewness = ns.skewness;
      s.excess_kurtosis = ns.excess_kurtosis;
    } else {
      s.skewness = nan;
      s.excess_kurtosis = nan;
    }
    s.replicates = acc.count();
    return s;
  };

  MCReport report;
  report.config = config;
  if (config.run_exact) report.config.exact_modes = combo.modes;  // echo the resolved modes
  if (config.run_mle)
    for (int k = 1; k <= K; ++k)
      report.rows.push_back(make_row(Family::mle, k, total.mle[static_cast<std::size_t>(k - 1)],
                                     mle_variance(model, k, config.T)));
  if (scheme)
    for (int k = 1; k <= K; ++k)
      report.rows.push_back(make_row(Family::weighted, k,
                                     total.wavg[static_cast<std::size_t>(k - 1)],
                                     weighted_variance(model, *scheme, k, config.T)));
  if (n_aitken > 0)
    for (int k = 1; k <= n_aitken; ++k)
      report.rows.push_back(
          make_row(Family::aitken, k, total.aitk[static_cast<std::size_t>(k - 1)], std::nullopt));
  if (config.run_exact) report.rows.push_back(make_row(Family::exact, 0, total.exact, 0.0));
  return report;
}

void emit_report(const MCReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open report file '" + path + "'");
  out << report_csv_header << '\n';
  for (const EstimatorStats& s : report.rows) {
    out << to_string(s.family) << ',' << s.k << ',' << detail::fmt(s.bias) << ','
        << detail::fmt(s.mse_empirical) << ',';
    if (s.mse_theoretical) out << detail::fmt(*s.mse_theoretical);
    out << ',' << detail::fmt(s.skewness) << ',' << detail::fmt(s.excess_kurtosis) << ','
        << s.replicates << '\n';
  }
  if (!out) fail("failed writing report file '" + path + "'");
  const std::string sidecar = path + ".json";
  std::ofstream side(sidecar, std::ios::binary);
  if (!side) fail("cannot open report sidecar '" + sidecar + "'");
  side << report.config.to_json().dump(2) << '\n';
  if (!side) fail("failed writing report sidecar '" + sidecar + "'");
}

std::vector<EstimatorStats> read_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open report file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != report_csv_header)
    fail("report file '" + path + "' has an unexpected header");
  std::vector<EstimatorStats> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 8) fail("report file '" + path + "' has a malformed row");
    EstimatorStats s;
    s.family = family_from_string(fields[0]);
    s.k = static_cast<int>(detail::parse_int(fields[1], "mode label"));
    s.bias = detail::parse_double(fields[2], "bias");
    s.mse_empirical = detail::parse_double(fields[3], "empirical MSE");
    if (!fields[4].empty()) s.mse_theoretical = detail::parse_double(fields[4], "theoretical MSE");
    s.skewness = detail::parse_double(fields[5], "skewness");
    s.excess_kurtosis = detail::parse_double(fields[6], "excess kurtosis");
    s.replicates = detail::parse_int(fields[7], "replicate count");
    rows.push_back(std::move(s));
  }
  return rows;
}

}  // namespace spde
