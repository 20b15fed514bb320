#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "odekin/network.hpp"
#include "odekin/residual.hpp"

namespace odekin {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  void validate() const;
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update, in place.
void adam_step(std::vector<double>& theta, std::span<const double> grad, AdamState& state,
               const AdamConfig& cfg);

struct LbfgsConfig {
  int max_iters = 5000;
  int memory = 10;
  double grad_tol = 1e-9;
  double sufficient_decrease = 1e-4;  // Armijo constant
  double backtrack = 0.5;
  int max_line_search = 60;
  void validate() const;
};

enum class LbfgsStop { GradTolerance, MaxIterations, LineSearchFailure, NonFinite };

std::string to_string(LbfgsStop reason);

struct LbfgsReport {
  int iterations = 0;
  long evaluations = 0;
  double initial_loss = std::numeric_limits<double>::quiet_NaN();
  double best_loss = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  LbfgsStop reason = LbfgsStop::MaxIterations;
};

/// Objective callback: returns the loss at theta and fills *grad when it is
/// non-null. A non-finite return is treated as "reject this point".
using Objective = std::function<double(std::span<const double>, std::vector<double>*)>;

using LbfgsObserver = std::function<void(int iter, double loss, double grad_norm)>;

/// Limited-memory quasi-Newton with two-loop recursion and a backtracking
/// line search under the sufficient-decrease condition. `theta` is updated
/// to the best iterate seen.
LbfgsReport lbfgs_minimize(const Objective& objective, std::vector<double>& theta,
                           const LbfgsConfig& cfg, const LbfgsObserver& observer = {});

struct TrainConfig {
  int adam_steps = 10000;
  AdamConfig adam;
  LbfgsConfig lbfgs;
  std::uint64_t seed = 0;
  int batch = 0;        // 0 = full batch, otherwise mini-batch size
  int history_every = 100;
  // 0 disables: a diverged pair aborts training (best checkpoint is kept).
  // Positive: each diverged pair contributes this penalty to the loss while
  // the remaining pairs keep training.
  double divergence_penalty = 0.0;
  void validate() const;
};

struct LossReport {
  long step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::string phase;  // "adam" | "lbfgs" | "final"
  double seconds = 0.0;
};

struct NetworkConfig {
  std::vector<int> widths;
  bool autonomous = true;
};

struct TrainResult {
  NetworkParams params;  // best-seen parameters
  std::vector<LossReport> history;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
  std::string error;
};

/// Sum of squared residual norms over the data, evaluated on a fresh tape.
double loss(const NetworkParams& params, const ResidualScheme& scheme,
            std::span<const DataPair> data);

/// Loss plus its gradient with respect to the flattened parameters.
double loss_and_gradient(const NetworkParams& params, const ResidualScheme& scheme,
                         std::span<const DataPair> data, std::vector<double>& grad);

/// Full training protocol: Adam phase followed directly by the quasi-Newton
/// fine-tune. Deterministic given (seed, config, data).
TrainResult train(const ResidualScheme& scheme, std::span<const DataPair> data,
                  const NetworkConfig& net_cfg, const TrainConfig& cfg);

/// History CSV: step,loss,grad_norm,phase,seconds.
void save_history_csv(std::span<const LossReport> history, const std::string& path);

}  // namespace odekin
