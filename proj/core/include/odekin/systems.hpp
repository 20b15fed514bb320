#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odekin/residual.hpp"

namespace odekin {

/// Axis-aligned sampling box.
struct Domain {
  std::vector<double> lower, upper;
  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(std::span<const double> point) const;
  void validate() const;
};

/// A benchmark system with a closed-form right-hand side. The RHS is used
/// only to synthesize data and to score learned models against.
struct TrueSystem {
  std::string name;
  int dim = 0;
  RhsFn rhs;
  Domain default_domain;
  std::vector<double> default_dts;
  std::vector<std::vector<double>> eval_ics;
  double eval_horizon = 0.0;
  double eval_step = 0.0;
};

std::vector<double> rhs_cubic(std::span<const double> state);
std::vector<double> rhs_glycolytic(std::span<const double> state);
std::vector<double> rhs_hopf_augmented(std::span<const double> state);

const TrueSystem& cubic_oscillator();
const TrueSystem& glycolytic_oscillator();
const TrueSystem& hopf_augmented();

/// Lookup by name; accepts the short aliases "cubic" and "hopf".
const TrueSystem& true_system(std::string_view name);
std::vector<std::string> true_system_names();

/// Latin hypercube sample: per dimension the n points occupy the n
/// equal-width strata exactly once; stratum order and within-stratum offsets
/// come from the seeded generator.
std::vector<std::vector<double>> lhs_sample(const Domain& domain, int n, std::uint64_t seed);

/// Classical fixed-step RK4 from t0 to t1 in `substeps` uniform steps.
std::vector<double> reference_integrate(const RhsFn& rhs, std::span<const double> phi0,
                                        double t0, double t1, int substeps);

/// One measured trajectory; `mu` optionally records the parameter values it
/// was generated under.
struct TimeSeries {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  std::vector<double> mu;
  void validate() const;
};

struct PairProvenance {
  std::string system;
  int dim = 0;
  int n = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  int substeps_requested = 0;
  int substeps_used = 0;  // > requested when the accuracy guard escalated
  int rejected = 0;
  Domain domain;
};

struct DataPairSet {
  std::vector<DataPair> pairs;
  PairProvenance provenance;
  int dim() const { return pairs.empty() ? 0 : pairs.front().dim(); }
  void validate() const;
};

/// Default generator resolution: max(200, ceil(500 * dt)) RK4 substeps.
int default_substeps(double dt);

/// Samples n initial states by LHS, advances each by dt with the true model
/// and emits (phi1, 0, phi2, dt) pairs. Every pair is verified against a 4x
/// finer integration (relative change < 1e-8); the substep count escalates
/// until the guard holds. Diverging samples are rejected and resampled; more
/// than 10% rejections aborts generation.
DataPairSet generate_pairs(const TrueSystem& system, const Domain& domain, int n, double dt,
                           std::uint64_t seed, int substeps = 0);

/// Re-organizes measured series into pairs of stride-separated snapshots.
/// Pairs from different series mix freely.
DataPairSet pairs_from_series(std::span<const TimeSeries> series, int stride);

/// CSV persistence (17 significant digits) plus a .meta.json provenance
/// sidecar next to the CSV.
void save_pairs_csv(const DataPairSet& set, const std::string& csv_path);
DataPairSet load_pairs_csv(const std::string& csv_path);

}  // namespace odekin
