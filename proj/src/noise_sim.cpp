#include "spde/noise_sim.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "spde/detail/format.hpp"

namespace spde {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool ObservationSet::has(int k) const {
  for (const auto& m : modes)
    if (m.k == k) return true;
  return false;
}

const ModeObservation& ObservationSet::at(int k) const {
  for (const auto& m : modes)
    if (m.k == k) return m;
  throw std::invalid_argument("mode " + std::to_string(k) + " not in observations");
}

NoiseRealization sample_terminal_noise(std::uint64_t seed, double T, int drivers) {
  if (!(T > 0.0)) throw std::invalid_argument("horizon T must be positive");
  if (drivers < 1) throw std::invalid_argument("driver count must be at least 1");
  NoiseRealization noise;
  noise.T = T;
  noise.seed = seed;
  noise.w_terminal.resize(static_cast<size_t>(drivers));
  GaussianStream stream(seed);
  const double sd = std::sqrt(T);
  for (auto& w : noise.w_terminal) w = sd * stream.next();
  return noise;
}

std::pair<double, double> evolve_mode(const SpectralModel& model, int k, double theta0, double u0,
                                      const NoiseRealization& noise) {
  if (u0 == 0.0) throw std::invalid_argument("u0 must be nonzero");
  const int J = model.noise_dimension();
  if (noise.w_terminal.size() != static_cast<size_t>(J))
    throw std::invalid_argument("noise dimension mismatch: realization has " +
                                std::to_string(noise.w_terminal.size()) + " drivers, model has " +
                                std::to_string(J));
  double v = -(model.rho(k) + theta0 * model.nu(k) + 0.5 * model.total_load(k)) * noise.T;
  for (int j = 1; j <= J; ++j) v += model.mu(j, k) * noise.w_terminal[static_cast<size_t>(j - 1)];
  return {u0 * std::exp(v), v};
}

ObservationSet simulate_observations(const SpectralModel& model, std::span<const int> modes,
                                     double theta0, const std::map<int, double>& u0_overrides,
                                     double T, std::uint64_t seed) {
  if (modes.empty()) throw std::invalid_argument("mode list must be nonempty");
  std::set<int> seen;
  for (int k : modes) {
    if (k < 1 || k > model.k_max())
      throw std::out_of_range("mode " + std::to_string(k) + " out of range (k_max = " +
                              std::to_string(model.k_max()) + ")");
    if (!seen.insert(k).second)
      throw std::invalid_argument("duplicate mode " + std::to_string(k) + " in mode list");
  }
  for (const auto& [k, u0] : u0_overrides) {
    if (!seen.count(k))
      throw std::invalid_argument("u0 override for mode " + std::to_string(k) +
                                  " which is not simulated");
    if (u0 == 0.0)
      throw std::invalid_argument("u0 must be nonzero (mode " + std::to_string(k) + ")");
  }

  ObservationSet obs;
  obs.T = T;
  obs.theta_true = theta0;
  obs.noise = sample_terminal_noise(seed, T, model.noise_dimension());
  obs.modes.reserve(modes.size());
  for (int k : modes) {
    auto it = u0_overrides.find(k);
    const double u0 = (it == u0_overrides.end()) ? 1.0 : it->second;
    const auto [u_T, v] = evolve_mode(model, k, theta0, u0, *obs.noise);
    (void)u_T;
    obs.modes.push_back({k, u0, v});
  }
  return obs;
}

ObservationSet simulate_observations(const SpectralModel& model, std::span<const int> modes,
                                     double theta0, double T, std::uint64_t seed) {
  return simulate_observations(model, modes, theta0, {}, T, seed);
}

ModePath simulate_path(const SpectralModel& model, int k, double theta0, double u0,
                       std::span<const double> time_grid, std::uint64_t seed) {
  if (u0 == 0.0) throw std::invalid_argument("u0 must be nonzero");
  if (time_grid.empty() || time_grid[0] != 0.0)
    throw std::invalid_argument("time grid must start at 0 and strictly increase");
  for (size_t i = 1; i < time_grid.size(); ++i)
    if (!(time_grid[i] > time_grid[i - 1]))
      throw std::invalid_argument("time grid must start at 0 and strictly increase");

  const int J = model.noise_dimension();
  const double drift = -(model.rho(k) + theta0 * model.nu(k) + 0.5 * model.total_load(k));

  ModePath path;
  path.k = k;
  path.seed = seed;
  path.times.assign(time_grid.begin(), time_grid.end());
  path.values.reserve(time_grid.size());
  path.values.push_back(u0);

  GaussianStream stream(seed);
  double v = 0.0;
  for (size_t i = 1; i < time_grid.size(); ++i) {
    const double dt = time_grid[i] - time_grid[i - 1];
    const double sd = std::sqrt(dt);
    double dv = drift * dt;
    for (int j = 1; j <= J; ++j) dv += model.mu(j, k) * (sd * stream.next());
    v += dv;
    path.values.push_back(u0 * std::exp(v));
  }
  return path;
}

void write_observations(const ObservationSet& obs, const std::filesystem::path& path,
                        const nlohmann::json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write observations to " + path.string());
  out << "k,u0,v,T\n";
  for (const auto& m : obs.modes)
    out << m.k << ',' << detail::fmt(m.u0) << ',' << detail::fmt(m.v) << ','
        << detail::fmt(obs.T) << '\n';
  if (!out) throw std::runtime_error("cannot write observations to " + path.string());

  nlohmann::json side = extra.is_object() ? extra : nlohmann::json::object();
  side["T"] = obs.T;
  if (obs.theta_true) side["theta_true"] = *obs.theta_true;
  if (obs.noise) side["seed"] = obs.noise->seed;
  std::ofstream sidecar(path.string() + ".json", std::ios::binary);
  if (!sidecar) throw std::runtime_error("cannot write sidecar for " + path.string());
  sidecar << side.dump(2) << '\n';
}

ObservationSet read_observations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open observations file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "k,u0,v,T")
    throw std::runtime_error("observations file " + path.string() +
                             ": expected header 'k,u0,v,T'");
  ObservationSet obs;
  bool have_T = false;
  std::set<int> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 4)
      throw std::runtime_error("observations file " + path.string() + ": bad row '" + line + "'");
    ModeObservation m;
    m.k = static_cast<int>(detail::parse_int(fields[0], "mode index"));
    m.u0 = detail::parse_double(fields[1], "u0");
    m.v = detail::parse_double(fields[2], "v");
    const double T = detail::parse_double(fields[3], "T");
    if (m.k < 1) throw std::runtime_error("observations file: mode index must be positive");
    if (m.u0 == 0.0) throw std::runtime_error("observations file: u0 must be nonzero");
    if (!seen.insert(m.k).second)
      throw std::runtime_error("observations file: duplicate mode " + std::to_string(m.k));
    if (have_T && T != obs.T)
      throw std::runtime_error("observations file: inconsistent horizon T across rows");
    obs.T = T;
    have_T = true;
    obs.modes.push_back(m);
  }
  if (obs.modes.empty())
    throw std::runtime_error("observations file " + path.string() + " has no data rows");
  return obs;
}

}  // namespace spde
