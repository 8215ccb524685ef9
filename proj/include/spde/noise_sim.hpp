#pragma once

// Exact seeded simulation of the uncoupled mode system.  Each mode is a
// geometric Brownian motion, so its terminal value is an explicit function of
// the shared Wiener terminal values W_j(T): the simulation draws those J
// normals once and evolves every requested mode in closed form.  There is no
// time discretization anywhere, hence no discretization error.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "spde/spectral_model.hpp"

namespace spde {

// 64-bit mixing finalizer (splitmix64 increment step).
std::uint64_t mix64(std::uint64_t x);

// Seed for replicate `index` under a root seed: root ^ mix64(index).  Distinct
// indices give decorrelated engine seedings while staying replayable.
inline std::uint64_t stream_seed(std::uint64_t root, std::uint64_t index) {
  return root ^ mix64(index);
}

// Deterministic standard-normal stream.  Uniforms are built directly from the
// engine's 64-bit output and pushed through Box-Muller, so the draw sequence
// is fixed by this code alone, not by the standard library's
// normal_distribution internals.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  static constexpr double kPi = 3.141592653589793238462643383279502884;
  // 53-bit uniform on (0, 1]; never 0, so log(u1) is finite.
  double uniform() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }
  std::mt19937_64 engine_;
};

// Terminal values W_j(T) of the shared Wiener drivers for one sample path.
struct NoiseRealization {
  double T = 0.0;
  std::vector<double> w_terminal;  // entry j-1 = W_j(T)
  std::uint64_t seed = 0;
};

struct ModeObservation {
  int k = 0;
  double u0 = 0.0;  // u_k(0), nonzero
  double v = 0.0;   // ln(u_k(T) / u_k(0))
};

struct ObservationSet {
  double T = 0.0;
  std::vector<ModeObservation> modes;
  std::optional<double> theta_true;       // synthetic data only
  std::optional<NoiseRealization> noise;  // synthetic data only

  bool has(int k) const;
  const ModeObservation& at(int k) const;  // throws "mode k not in observations"
};

struct ModePath {
  int k = 0;
  std::vector<double> times;   // increasing grid starting at 0
  std::vector<double> values;  // u_k at the grid points; values[0] = u0
  std::uint64_t seed = 0;
};

// J independent Normal(0, T) draws from the stream seeded by `seed`.
NoiseRealization sample_terminal_noise(std::uint64_t seed, double T, int drivers);

// One-step exact evolution of mode k against a fixed realization:
//   v = -(rho_k + theta0*nu_k + M_k/2) * T + sum_j mu_jk * W_j(T)
// Returns (u_T, v) with u_T = u0 * exp(v); the sign of u0 is preserved.
std::pair<double, double> evolve_mode(const SpectralModel& model, int k, double theta0, double u0,
                                      const NoiseRealization& noise);

// Evolve all listed modes against ONE shared noise realization (exactly one
// sample_terminal_noise call).  u0 entries default to 1 for modes not listed
// in the override map.  The returned set carries theta_true and the noise so
// tests can check error identities pathwise.
ObservationSet simulate_observations(const SpectralModel& model, std::span<const int> modes,
                                     double theta0, const std::map<int, double>& u0_overrides,
                                     double T, std::uint64_t seed);
ObservationSet simulate_observations(const SpectralModel& model, std::span<const int> modes,
                                     double theta0, double T, std::uint64_t seed);

// Trajectory of one mode on an explicit time grid (grid[0] must be 0).  Log
// increments are exact: Normal(0, dt) Wiener increments per driver and step.
ModePath simulate_path(const SpectralModel& model, int k, double theta0, double u0,
                       std::span<const double> time_grid, std::uint64_t seed);

// CSV serialization, header `k,u0,v,T`, one row per mode, '\n' endings.  A
// JSON sidecar at path + ".json" records T plus seed/theta_true when present;
// `extra` entries are merged in (used by the CLI for full invocation
// provenance).  Writing is byte-deterministic.
void write_observations(const ObservationSet& obs, const std::filesystem::path& path,
                        const nlohmann::json& extra = nlohmann::json::object());
ObservationSet read_observations(const std::filesystem::path& path);

}  // namespace spde
