#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odekin/tape.hpp"

namespace odekin {

enum class SchemeKind { EulerForward, EulerBackward, Trapezoid, RecursiveEuler, RecursiveRK4 };

std::string to_string(SchemeKind kind);
SchemeKind parse_scheme_kind(std::string_view name);
bool is_recursive(SchemeKind kind);

/// Which integrator residual is used and how many sub-segments M the pair
/// interval is split into. Single-step kinds require stages == 1.
struct ResidualScheme {
  SchemeKind kind = SchemeKind::RecursiveRK4;
  int stages = 1;
  void validate() const;
};

/// One training unit: two snapshots of the same trajectory.
struct DataPair {
  std::vector<double> phi1;
  double t1 = 0.0;
  std::vector<double> phi2;
  double t2 = 0.0;

  int dim() const { return static_cast<int>(phi1.size()); }
  double lag() const { return t2 - t1; }
  void validate() const;  // t2 > t1 and matching dimensions
};

/// Uniform nodes tau_0 .. tau_M over [t1, t2].
std::vector<double> partition(double t1, double t2, int segments);

/// Plain right-hand side callback: (state, t) -> d_state/dt.
using RhsFn = std::function<std::vector<double>(std::span<const double>, double)>;

/// Integrates phi1 over [t1, t2] with the scheme's recursion (recursive
/// kinds only) and returns the final state. Throws DivergenceError naming
/// the segment when an intermediate state goes non-finite.
std::vector<double> rollout(const ResidualScheme& scheme, const RhsFn& rhs,
                            std::span<const double> phi1, double t1, double t2);

/// Residual of one data pair: phi2 minus the scheme's prediction from phi1.
std::vector<double> residual(const ResidualScheme& scheme, const DataPair& pair,
                             const RhsFn& rhs);

/// Tape-side right-hand side: maps a d x N state batch node plus per-column
/// times to a d x N derivative node on the same tape.
using TapeRhsFn = std::function<NodeId(Tape&, NodeId, std::span<const double>)>;

/// Batched tape rollout: phi1 holds one pair's state per column, t1/t2 give
/// the per-column interval. Returns the node holding the integrated states.
NodeId rollout_on_tape(Tape& tape, const ResidualScheme& scheme, const TapeRhsFn& rhs,
                       NodeId phi1, std::span<const double> t1, std::span<const double> t2);

/// Batched tape residual, differentiable through the RHS.
NodeId residual_on_tape(Tape& tape, const ResidualScheme& scheme, const TapeRhsFn& rhs,
                        NodeId phi1, NodeId phi2, std::span<const double> t1,
                        std::span<const double> t2);

}  // namespace odekin
