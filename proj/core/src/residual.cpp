#include "odekin/residual.hpp"

#include <cmath>
#include <string>

#include "odekin/errors.hpp"

namespace odekin {

std::string to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::EulerForward: return "euler_forward";
    case SchemeKind::EulerBackward: return "euler_backward";
    case SchemeKind::Trapezoid: return "trapezoid";
    case SchemeKind::RecursiveEuler: return "recursive_euler";
    case SchemeKind::RecursiveRK4: return "recursive_rk4";
  }
  return "?";
}

SchemeKind parse_scheme_kind(std::string_view name) {
  if (name == "euler_forward") return SchemeKind::EulerForward;
  if (name == "euler_backward") return SchemeKind::EulerBackward;
  if (name == "trapezoid") return SchemeKind::Trapezoid;
  if (name == "recursive_euler") return SchemeKind::RecursiveEuler;
  if (name == "recursive_rk4") return SchemeKind::RecursiveRK4;
  throw ConfigError("unknown scheme kind '" + std::string(name) +
                    "' (expected euler_forward, euler_backward, trapezoid, recursive_euler "
                    "or recursive_rk4)");
}

bool is_recursive(SchemeKind kind) {
  return kind == SchemeKind::RecursiveEuler || kind == SchemeKind::RecursiveRK4;
}

void ResidualScheme::validate() const {
  if (stages < 1) {
    throw ConfigError("scheme: stages must be >= 1, got " + std::to_string(stages));
  }
  if (!is_recursive(kind) && stages != 1) {
    throw ConfigError("scheme: " + to_string(kind) + " is single-step and requires stages == 1");
  }
}

void DataPair::validate() const {
  if (phi1.empty() || phi1.size() != phi2.size()) {
    throw ConfigError("data pair: snapshot dimensions differ or are empty");
  }
  if (!(t2 > t1)) {
    throw ConfigError("data pair: need t2 > t1, got [" + std::to_string(t1) + ", " +
                      std::to_string(t2) + "]");
  }
}

std::vector<double> partition(double t1, double t2, int segments) {
  if (segments < 1) {
    throw ConfigError("partition: need at least one segment");
  }
  if (!(t2 > t1)) {
    throw ConfigError("partition: need t2 > t1");
  }
  std::vector<double> nodes(segments + 1);
  const double h = (t2 - t1) / segments;
  for (int s = 0; s <= segments; ++s) nodes[s] = t1 + s * h;
  nodes.front() = t1;
  nodes.back() = t2;
  return nodes;
}

namespace {

std::vector<double> eval_rhs(const RhsFn& rhs, std::span<const double> state, double t,
                             std::size_t dim) {
  std::vector<double> f = rhs(state, t);
  if (f.size() != dim) {
    throw DimensionError("rhs returned dimension " + std::to_string(f.size()) +
                         ", expected " + std::to_string(dim));
  }
  return f;
}

void check_finite_state(std::span<const double> state, int segment) {
  for (double v : state) {
    if (!std::isfinite(v)) {
      throw DivergenceError("rollout produced a non-finite state at segment " +
                                std::to_string(segment),
                            segment);
    }
  }
}

}  // namespace

std::vector<double> rollout(const ResidualScheme& scheme, const RhsFn& rhs,
                            std::span<const double> phi1, double t1, double t2) {
  scheme.validate();
  if (!is_recursive(scheme.kind)) {
    throw ConfigError("rollout: " + to_string(scheme.kind) + " is not a recursive scheme");
  }
  if (!(t2 > t1)) throw ConfigError("rollout: need t2 > t1");

  const std::size_t d = phi1.size();
  const int m = scheme.stages;
  const double h = (t2 - t1) / m;
  std::vector<double> state(phi1.begin(), phi1.end());
  std::vector<double> stage(d);

  for (int s = 0; s < m; ++s) {
    const double tau = t1 + s * h;
    if (scheme.kind == SchemeKind::RecursiveEuler) {
      const auto k1 = eval_rhs(rhs, state, tau, d);
      for (std::size_t i = 0; i < d; ++i) state[i] += h * k1[i];
    } else {
      const auto k1 = eval_rhs(rhs, state, tau, d);
      for (std::size_t i = 0; i < d; ++i) stage[i] = state[i] + 0.5 * h * k1[i];
      const auto k2 = eval_rhs(rhs, stage, tau + 0.5 * h, d);
      for (std::size_t i = 0; i < d; ++i) stage[i] = state[i] + 0.5 * h * k2[i];
      const auto k3 = eval_rhs(rhs, stage, tau + 0.5 * h, d);
      for (std::size_t i = 0; i < d; ++i) stage[i] = state[i] + h * k3[i];
      const auto k4 = eval_rhs(rhs, stage, tau + h, d);
      for (std::size_t i = 0; i < d; ++i) {
        state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
    }
    check_finite_state(state, s);
  }
  return state;
}

std::vector<double> residual(const ResidualScheme& scheme, const DataPair& pair,
                             const RhsFn& rhs) {
  scheme.validate();
  pair.validate();
  const std::size_t d = pair.phi1.size();
  const double h = pair.lag();
  std::vector<double> r(d);

  switch (scheme.kind) {
    case SchemeKind::EulerForward: {
      const auto f = eval_rhs(rhs, pair.phi1, pair.t1, d);
      for (std::size_t i = 0; i < d; ++i) r[i] = pair.phi2[i] - pair.phi1[i] - h * f[i];
      break;
    }
    case SchemeKind::EulerBackward: {
      const auto f = eval_rhs(rhs, pair.phi2, pair.t2, d);
      for (std::size_t i = 0; i < d; ++i) r[i] = pair.phi2[i] - pair.phi1[i] - h * f[i];
      break;
    }
    case SchemeKind::Trapezoid: {
      const auto f1 = eval_rhs(rhs, pair.phi1, pair.t1, d);
      const auto f2 = eval_rhs(rhs, pair.phi2, pair.t2, d);
      for (std::size_t i = 0; i < d; ++i) {
        r[i] = pair.phi2[i] - pair.phi1[i] - 0.5 * h * (f1[i] + f2[i]);
      }
      break;
    }
    case SchemeKind::RecursiveEuler:
    case SchemeKind::RecursiveRK4: {
      const auto predicted = rollout(scheme, rhs, pair.phi1, pair.t1, pair.t2);
      for (std::size_t i = 0; i < d; ++i) r[i] = pair.phi2[i] - predicted[i];
      break;
    }
  }
  return r;
}

namespace {

// d x n constant of per-column segment widths scaled by `factor`.
NodeId column_widths(Tape& tape, int d, std::span<const double> h, double factor) {
  Tensor t(d, static_cast<int>(h.size()));
  for (int i = 0; i < d; ++i) {
    double* row = t.row(i);
    for (std::size_t j = 0; j < h.size(); ++j) row[j] = factor * h[j];
  }
  return tape.leaf(std::move(t));
}

void check_batch_times(std::span<const double> t1, std::span<const double> t2, int n) {
  if (static_cast<int>(t1.size()) != n || static_cast<int>(t2.size()) != n) {
    throw DimensionError("batched residual: need one (t1, t2) per state column");
  }
  for (int j = 0; j < n; ++j) {
    if (!(t2[j] > t1[j])) {
      throw ConfigError("batched residual: pair " + std::to_string(j) + " has t2 <= t1");
    }
  }
}

[[noreturn]] void rethrow_divergence(const NonFiniteError& e, int segment, int n) {
  const long pair = static_cast<long>(e.flat_index() % static_cast<std::size_t>(n));
  throw DivergenceError("rollout diverged at segment " + std::to_string(segment) + ", pair " +
                            std::to_string(pair) + ": " + e.what(),
                        segment, pair);
}

}  // namespace

NodeId rollout_on_tape(Tape& tape, const ResidualScheme& scheme, const TapeRhsFn& rhs,
                       NodeId phi1, std::span<const double> t1, std::span<const double> t2) {
  scheme.validate();
  if (!is_recursive(scheme.kind)) {
    throw ConfigError("rollout_on_tape: " + to_string(scheme.kind) + " is not recursive");
  }
  const Tensor& p1 = tape.value(phi1);
  const int d = p1.rows(), n = p1.cols();
  check_batch_times(t1, t2, n);

  const int m = scheme.stages;
  std::vector<double> h(n);
  for (int j = 0; j < n; ++j) h[j] = (t2[j] - t1[j]) / m;

  const NodeId full = column_widths(tape, d, h, 1.0);
  NodeId half = -1, sixth = -1;
  if (scheme.kind == SchemeKind::RecursiveRK4) {
    half = column_widths(tape, d, h, 0.5);
    sixth = column_widths(tape, d, h, 1.0 / 6.0);
  }

  std::vector<double> tau(n), tau_half(n), tau_next(n);
  NodeId state = phi1;
  for (int s = 0; s < m; ++s) {
    for (int j = 0; j < n; ++j) {
      tau[j] = t1[j] + s * h[j];
      tau_half[j] = tau[j] + 0.5 * h[j];
      tau_next[j] = tau[j] + h[j];
    }
    try {
      if (scheme.kind == SchemeKind::RecursiveEuler) {
        state = tape.add(state, tape.hadamard(full, rhs(tape, state, tau)));
      } else {
        const NodeId k1 = rhs(tape, state, tau);
        const NodeId k2 = rhs(tape, tape.add(state, tape.hadamard(half, k1)), tau_half);
        const NodeId k3 = rhs(tape, tape.add(state, tape.hadamard(half, k2)), tau_half);
        const NodeId k4 = rhs(tape, tape.add(state, tape.hadamard(full, k3)), tau_next);
        const NodeId ksum = tape.add(tape.add(k1, k4), tape.scale(tape.add(k2, k3), 2.0));
        state = tape.add(state, tape.hadamard(sixth, ksum));
      }
    } catch (const NonFiniteError& e) {
      rethrow_divergence(e, s, n);
    }
  }
  return state;
}

NodeId residual_on_tape(Tape& tape, const ResidualScheme& scheme, const TapeRhsFn& rhs,
                        NodeId phi1, NodeId phi2, std::span<const double> t1,
                        std::span<const double> t2) {
  scheme.validate();
  const Tensor& p1 = tape.value(phi1);
  const Tensor& p2 = tape.value(phi2);
  if (!p1.same_shape(p2)) {
    throw DimensionError("residual_on_tape: snapshot batches " + p1.shape_str() + " and " +
                         p2.shape_str() + " differ");
  }
  const int d = p1.rows(), n = p1.cols();
  check_batch_times(t1, t2, n);

  if (is_recursive(scheme.kind)) {
    return tape.sub(phi2, rollout_on_tape(tape, scheme, rhs, phi1, t1, t2));
  }

  std::vector<double> h(n);
  for (int j = 0; j < n; ++j) h[j] = t2[j] - t1[j];
  try {
    switch (scheme.kind) {
      case SchemeKind::EulerForward: {
        const NodeId full = column_widths(tape, d, h, 1.0);
        return tape.sub(tape.sub(phi2, phi1), tape.hadamard(full, rhs(tape, phi1, t1)));
      }
      case SchemeKind::EulerBackward: {
        const NodeId full = column_widths(tape, d, h, 1.0);
        return tape.sub(tape.sub(phi2, phi1), tape.hadamard(full, rhs(tape, phi2, t2)));
      }
      case SchemeKind::Trapezoid: {
        const NodeId half = column_widths(tape, d, h, 0.5);
        const NodeId both = tape.add(rhs(tape, phi1, t1), rhs(tape, phi2, t2));
        return tape.sub(tape.sub(phi2, phi1), tape.hadamard(half, both));
      }
      default: break;
    }
  } catch (const NonFiniteError& e) {
    rethrow_divergence(e, 0, n);
  }
  throw ConfigError("residual_on_tape: unsupported scheme");
}

}  // namespace odekin
