#include "odekin/evaluate.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "csv_util.hpp"
#include "odekin/errors.hpp"
#include "odekin/rng.hpp"

namespace odekin {

namespace {

int grid_steps(double horizon, double eval_step) {
  if (!(eval_step > 0.0)) throw ConfigError("rollout: eval_step must be positive");
  if (!(horizon > 0.0)) throw ConfigError("rollout: horizon must be positive");
  return static_cast<int>(std::floor(horizon / eval_step + 1e-9));
}

}  // namespace

Trajectory rollout_rhs(const RhsFn& rhs, std::span<const double> ic, double horizon,
                       double eval_step) {
  const int steps = grid_steps(horizon, eval_step);
  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.times.push_back(0.0);
  traj.states.emplace_back(ic.begin(), ic.end());

  std::vector<double> state(ic.begin(), ic.end());
  for (int k = 1; k <= steps; ++k) {
    const double t = (k - 1) * eval_step;
    try {
      state = reference_integrate(rhs, state, t, t + eval_step, 1);
    } catch (const DivergenceError&) {
      traj.diverged = true;
      traj.failure_time = k * eval_step;
      break;
    }
    traj.times.push_back(k * eval_step);
    traj.states.push_back(state);
  }
  return traj;
}

Trajectory rollout_learned(const NetworkParams& params, std::span<const double> ic,
                           double horizon, double eval_step) {
  params.validate();
  if (static_cast<int>(ic.size()) != params.state_dim()) {
    throw ConfigError("rollout_learned: initial condition dimension " +
                      std::to_string(ic.size()) + " does not match network state dimension " +
                      std::to_string(params.state_dim()));
  }
  const RhsFn rhs = [&params](std::span<const double> s, double t) {
    return forward(params, s, t);
  };
  return rollout_rhs(rhs, ic, horizon, eval_step);
}

namespace {

void check_same_grid(const Trajectory& pred, const Trajectory& truth) {
  if (pred.times.size() != truth.times.size()) {
    throw DimensionError("metric: trajectory grids have different lengths (" +
                         std::to_string(pred.times.size()) + " vs " +
                         std::to_string(truth.times.size()) + ")");
  }
  for (std::size_t k = 0; k < pred.times.size(); ++k) {
    if (std::abs(pred.times[k] - truth.times[k]) > 1e-12) {
      throw DimensionError("metric: trajectory grids differ at index " + std::to_string(k));
    }
    if (pred.states[k].size() != truth.states[k].size()) {
      throw DimensionError("metric: state dimensions differ at index " + std::to_string(k));
    }
  }
}

struct StackedNorms {
  double diff_sq = 0.0;
  double truth_sq = 0.0;
  std::size_t points = 0;
};

StackedNorms stacked_norms(const Trajectory& pred, const Trajectory& truth) {
  check_same_grid(pred, truth);
  StackedNorms acc;
  for (std::size_t k = 0; k < pred.states.size(); ++k) {
    for (std::size_t i = 0; i < pred.states[k].size(); ++i) {
      const double d = pred.states[k][i] - truth.states[k][i];
      acc.diff_sq += d * d;
      acc.truth_sq += truth.states[k][i] * truth.states[k][i];
    }
  }
  acc.points = pred.states.size();
  return acc;
}

}  // namespace

double relative_l2_error(const Trajectory& pred, const Trajectory& truth) {
  const StackedNorms acc = stacked_norms(pred, truth);
  if (acc.truth_sq == 0.0) {
    throw EvaluationError("relative_l2_error: ground truth is identically zero");
  }
  return std::sqrt(acc.diff_sq / acc.truth_sq);
}

double absolute_l2_error(const Trajectory& pred, const Trajectory& truth) {
  const StackedNorms acc = stacked_norms(pred, truth);
  return std::sqrt(acc.diff_sq / static_cast<double>(acc.points));
}

namespace {

using nlohmann::json;

}  // namespace

void export_trajectory(const TrajectoryResult& result, const std::string& csv_path) {
  check_same_grid(result.predicted, result.truth);
  if (result.truth.times.empty()) throw ConfigError("export_trajectory: empty trajectory");
  const std::size_t d = result.truth.states.front().size();

  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot open trajectory for writing: " + csv_path);
  out << "t";
  for (std::size_t i = 1; i <= d; ++i) out << ",true_" << i;
  for (std::size_t i = 1; i <= d; ++i) out << ",pred_" << i;
  out << '\n';
  for (std::size_t k = 0; k < result.truth.times.size(); ++k) {
    out << detail::format_double(result.truth.times[k]);
    for (double v : result.truth.states[k]) out << ',' << detail::format_double(v);
    for (double v : result.predicted.states[k]) out << ',' << detail::format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("failed writing trajectory: " + csv_path);

  json doc;
  doc["format"] = "odekin-trajectory";
  doc["version"] = 1;
  doc["metric_rel"] = result.metric_rel;
  doc["metric_abs"] = result.metric_abs;
  doc["diverged"] = result.predicted.diverged;
  if (result.predicted.diverged) doc["failure_time"] = result.predicted.failure_time;
  for (const auto& [key, value] : result.provenance) doc["provenance"][key] = value;
  const std::string meta_path = detail::sidecar_path(csv_path);
  std::ofstream meta(meta_path);
  if (!meta) throw IoError("cannot open sidecar for writing: " + meta_path);
  meta << doc.dump(2) << '\n';
  if (!meta) throw IoError("failed writing sidecar: " + meta_path);
}

TrajectoryResult read_trajectory(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open trajectory: " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(csv_path + ": empty file");
  const auto header = detail::split_csv(line);
  if (header.size() < 3 || header.size() % 2 == 0 || header[0] != "t") {
    throw IoError(csv_path + ": row 1: malformed header");
  }
  const std::size_t d = header.size() / 2;

  TrajectoryResult result;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != header.size()) {
      throw IoError(csv_path + ": row " + std::to_string(row) + ": wrong field count");
    }
    std::size_t at = 0;
    const double t = detail::parse_double(fields[at++], csv_path, row);
    result.truth.times.push_back(t);
    result.predicted.times.push_back(t);
    std::vector<double> tv(d), pv(d);
    for (std::size_t i = 0; i < d; ++i) tv[i] = detail::parse_double(fields[at++], csv_path, row);
    for (std::size_t i = 0; i < d; ++i) pv[i] = detail::parse_double(fields[at++], csv_path, row);
    result.truth.states.push_back(std::move(tv));
    result.predicted.states.push_back(std::move(pv));
  }

  const std::string meta_path = detail::sidecar_path(csv_path);
  if (std::filesystem::exists(meta_path)) {
    std::ifstream meta(meta_path);
    json doc;
    try {
      meta >> doc;
      result.metric_rel = doc.value("metric_rel", result.metric_rel);
      result.metric_abs = doc.value("metric_abs", result.metric_abs);
      result.predicted.diverged = doc.value("diverged", false);
      if (doc.contains("failure_time")) {
        result.predicted.failure_time = doc["failure_time"].get<double>();
      }
      if (doc.contains("provenance")) {
        for (const auto& [key, value] : doc["provenance"].items()) {
          result.provenance[key] = value.get<std::string>();
        }
      }
    } catch (const json::exception& e) {
      throw IoError(meta_path + ": malformed sidecar: " + e.what());
    }
  }
  return result;
}

void TableSpec::validate() const {
  true_system(system);  // throws for unknown names
  if (dts.empty()) throw ConfigError("table: empty dt list");
  if (stage_counts.empty()) throw ConfigError("table: empty stage list");
  for (double dt : dts) {
    if (!(dt > 0.0)) throw ConfigError("table: dt values must be positive");
  }
  for (int m : stage_counts) {
    ResidualScheme{scheme, m}.validate();
  }
  if (n_pairs < 1) throw ConfigError("table: need at least one data pair");
  if (jobs < 1) throw ConfigError("table: jobs must be >= 1");
  if (!use_exact_rhs) training.validate();
}

namespace {

struct CellOutcome {
  double metric_rel = 0.0, metric_abs = 0.0, final_loss = 0.0;
  std::string note;
};

CellOutcome run_cell(const TableSpec& spec, const TrueSystem& sys, double dt, int stages,
                     std::uint64_t cell_seed) {
  const Domain& domain = sys.default_domain;
  const DataPairSet data =
      generate_pairs(sys, domain, spec.n_pairs, dt, derive_seed(cell_seed, 0));

  const double horizon = spec.horizon > 0.0 ? spec.horizon : sys.eval_horizon;
  const double eval_step = spec.eval_step > 0.0 ? spec.eval_step : sys.eval_step;
  const auto& ics = spec.ics.empty() ? sys.eval_ics : spec.ics;

  CellOutcome outcome;
  RhsFn model;
  NetworkParams trained;
  if (spec.use_exact_rhs) {
    model = sys.rhs;
  } else {
    NetworkConfig net_cfg;
    net_cfg.widths.push_back(sys.dim);
    net_cfg.widths.insert(net_cfg.widths.end(), spec.hidden.begin(), spec.hidden.end());
    net_cfg.widths.push_back(sys.dim);
    TrainConfig train_cfg = spec.training;
    train_cfg.seed = derive_seed(cell_seed, 1);
    const ResidualScheme cell_scheme{spec.scheme, stages};
    TrainResult result = train(cell_scheme, data.pairs, net_cfg, train_cfg);
    if (result.diverged && !std::isfinite(result.final_loss)) {
      throw DivergenceError("training diverged before any finite loss: " + result.error);
    }
    if (result.diverged) outcome.note = "training diverged, best checkpoint evaluated";
    outcome.final_loss = result.final_loss;
    trained = std::move(result.params);
    model = [&trained](std::span<const double> s, double t) { return forward(trained, s, t); };
  }

  double diff_sq = 0.0, truth_sq = 0.0;
  std::size_t points = 0;
  for (const auto& ic : ics) {
    const Trajectory pred = rollout_rhs(model, ic, horizon, eval_step);
    if (pred.diverged) {
      throw DivergenceError("prediction diverged at t = " + std::to_string(pred.failure_time));
    }
    const Trajectory truth = rollout_rhs(sys.rhs, ic, horizon, eval_step);
    const auto acc = stacked_norms(pred, truth);
    diff_sq += acc.diff_sq;
    truth_sq += acc.truth_sq;
    points += acc.points;
  }
  if (truth_sq == 0.0) throw EvaluationError("table: ground truth identically zero");
  outcome.metric_rel = std::sqrt(diff_sq / truth_sq);
  outcome.metric_abs = std::sqrt(diff_sq / static_cast<double>(points));
  return outcome;
}

}  // namespace

TableResult reproduce_table(const TableSpec& spec) {
  spec.validate();
  const TrueSystem& sys = true_system(spec.system);

  TableResult result;
  result.system = sys.name;
  result.scheme = spec.scheme;
  result.dts = spec.dts;
  result.stage_counts = spec.stage_counts;
  result.cells.resize(spec.dts.size() * spec.stage_counts.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t index = next.fetch_add(1);
      if (index >= result.cells.size()) return;
      const double dt = spec.dts[index / spec.stage_counts.size()];
      const int stages = spec.stage_counts[index % spec.stage_counts.size()];
      const std::uint64_t cell_seed = derive_seed(spec.seed, index);

      TableCell& cell = result.cells[index];
      cell.dt = dt;
      cell.stages = stages;
      cell.seed = cell_seed;
      const auto start = std::chrono::steady_clock::now();
      try {
        const CellOutcome outcome = run_cell(spec, sys, dt, stages, cell_seed);
        cell.metric_rel = outcome.metric_rel;
        cell.metric_abs = outcome.metric_abs;
        cell.final_loss = outcome.final_loss;
        cell.error = outcome.note;
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      cell.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };

  const int jobs = static_cast<int>(
      std::min(static_cast<std::size_t>(spec.jobs), result.cells.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return result;
}

void save_table_csv(const TableResult& result, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot open table for writing: " + csv_path);
  out << "system,scheme,dt,M,seed,metric_rel,metric_abs,final_loss,wall_seconds,status\n";
  for (const TableCell& cell : result.cells) {
    out << result.system << ',' << to_string(result.scheme) << ','
        << detail::format_double(cell.dt) << ',' << cell.stages << ',' << cell.seed << ','
        << detail::format_double(cell.metric_rel) << ',' << detail::format_double(cell.metric_abs)
        << ',' << detail::format_double(cell.final_loss) << ',';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", cell.wall_seconds);
    out << buf << ',' << (cell.failed ? "failed: " + cell.error : std::string("ok")) << '\n';
  }
  if (!out) throw IoError("failed writing table: " + csv_path);
}

std::string format_table(const TableResult& result) {
  std::ostringstream out;
  out << result.system << " / " << to_string(result.scheme) << " (relative l2 error)\n";
  out << "          ";
  for (int m : result.stage_counts) {
    char head[24];
    std::snprintf(head, sizeof(head), "M=%-9d", m);
    out << head;
  }
  out << '\n';
  for (std::size_t r = 0; r < result.dts.size(); ++r) {
    char label[24];
    std::snprintf(label, sizeof(label), "dt=%-7g", result.dts[r]);
    out << label;
    for (std::size_t c = 0; c < result.stage_counts.size(); ++c) {
      const TableCell& cell = result.cells[r * result.stage_counts.size() + c];
      char field[24];
      if (cell.failed) {
        std::snprintf(field, sizeof(field), "%-11s", "failed");
      } else {
        std::snprintf(field, sizeof(field), "%-11.4g", cell.metric_rel);
      }
      out << field;
    }
    out << '\n';
  }
  return out.str();
}

TableSpec benchmark_table_spec(int table_id, std::string_view scale) {
  const bool smoke = scale == "smoke";
  if (!smoke && scale != "paper") {
    throw ConfigError("unknown table scale '" + std::string(scale) +
                      "' (expected paper or smoke)");
  }

  TableSpec spec;
  spec.scheme = SchemeKind::RecursiveRK4;
  switch (table_id) {
    case 1:
      spec.system = "cubic_oscillator";
      spec.dts = smoke ? std::vector<double>{0.2} : std::vector<double>{0.01, 0.05, 0.1, 0.2};
      spec.stage_counts = smoke ? std::vector<int>{1, 5} : std::vector<int>{1, 2, 5, 10};
      break;
    case 2:
      spec.system = "glycolytic";
      spec.dts = smoke ? std::vector<double>{0.2} : std::vector<double>{0.2, 0.5};
      spec.stage_counts = smoke ? std::vector<int>{1, 5} : std::vector<int>{1, 2, 5, 10};
      break;
    case 3:
      spec.system = "hopf_augmented";
      spec.dts = smoke ? std::vector<double>{2.0} : std::vector<double>{0.5, 1.0, 2.0};
      spec.stage_counts = smoke ? std::vector<int>{1, 10} : std::vector<int>{1, 2, 5, 10};
      break;
    default:
      throw ConfigError("unknown table id " + std::to_string(table_id) + " (expected 1, 2 or 3)");
  }
  if (smoke) {
    spec.n_pairs = 500;
    spec.training.adam_steps = 2000;
    spec.training.lbfgs.max_iters = 200;
  }
  return spec;
}

}  // namespace odekin
