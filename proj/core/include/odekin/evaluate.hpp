#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "odekin/network.hpp"
#include "odekin/optimize.hpp"
#include "odekin/systems.hpp"

namespace odekin {

/// States on the uniform evaluation grid 0, step, ..., horizon. A diverged
/// rollout is truncated at the last finite state and flagged.
struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  bool diverged = false;
  double failure_time = std::numeric_limits<double>::quiet_NaN();
};

/// Fixed-step RK4 rollout of an arbitrary RHS on the evaluation grid.
Trajectory rollout_rhs(const RhsFn& rhs, std::span<const double> ic, double horizon,
                       double eval_step);

/// Rollout of a learned model, treating the network as a black-box RHS.
Trajectory rollout_learned(const NetworkParams& params, std::span<const double> ic,
                           double horizon, double eval_step);

/// Frobenius norms over the stacked trajectory (all grid points and
/// components). Relative: ||pred - truth|| / ||truth||; absolute:
/// ||pred - truth|| / sqrt(grid points).
double relative_l2_error(const Trajectory& pred, const Trajectory& truth);
double absolute_l2_error(const Trajectory& pred, const Trajectory& truth);

/// A scored prediction against ground truth on a shared grid.
struct TrajectoryResult {
  Trajectory truth;
  Trajectory predicted;
  double metric_rel = std::numeric_limits<double>::quiet_NaN();
  double metric_abs = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, std::string> provenance;
};

/// CSV columns t,true_1..d,pred_1..d plus a .meta.json sidecar carrying the
/// metrics, provenance and any divergence record.
void export_trajectory(const TrajectoryResult& result, const std::string& csv_path);
TrajectoryResult read_trajectory(const std::string& csv_path);

/// One benchmark-grid reproduction: train a model per (dt, M) cell, roll it
/// out and score it against the true model on the same evaluation grid.
struct TableSpec {
  std::string system;
  std::vector<double> dts;
  std::vector<int> stage_counts;
  SchemeKind scheme = SchemeKind::RecursiveRK4;
  int n_pairs = 1000;
  std::vector<std::vector<double>> ics;  // empty = system defaults
  double horizon = 0.0;                  // 0 = system default
  double eval_step = 0.0;                // 0 = system default
  std::vector<int> hidden = {128};
  TrainConfig training;
  std::uint64_t seed = 0;
  bool use_exact_rhs = false;  // pipeline null mode: no training, roll the true RHS
  int jobs = 1;
  void validate() const;
};

struct TableCell {
  double dt = 0.0;
  int stages = 1;
  std::uint64_t seed = 0;
  double metric_rel = std::numeric_limits<double>::quiet_NaN();
  double metric_abs = std::numeric_limits<double>::quiet_NaN();
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
  bool failed = false;
  std::string error;
};

struct TableResult {
  std::string system;
  SchemeKind scheme = SchemeKind::RecursiveRK4;
  std::vector<double> dts;
  std::vector<int> stage_counts;
  std::vector<TableCell> cells;  // row-major over (dt, stages)
};

/// Runs every cell (optionally across worker threads); a failing cell is
/// recorded as failed and the run continues.
TableResult reproduce_table(const TableSpec& spec);

/// CSV columns: system,scheme,dt,M,seed,metric_rel,metric_abs,final_loss,
/// wall_seconds,status.
void save_table_csv(const TableResult& result, const std::string& csv_path);

/// Human-readable dt x M grid of relative errors.
std::string format_table(const TableResult& result);

/// Canned benchmark grids. Tables 1-3 cover the cubic oscillator, the
/// glycolytic oscillator and the augmented Hopf system; "paper" is the full
/// grid under the full training protocol, "smoke" a reduced grid sized for
/// CI minutes.
TableSpec benchmark_table_spec(int table_id, std::string_view scale);

}  // namespace odekin
