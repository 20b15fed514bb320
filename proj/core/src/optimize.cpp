#include "odekin/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numeric>

#include "odekin/errors.hpp"
#include "odekin/rng.hpp"

namespace odekin {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in (0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

void LbfgsConfig::validate() const {
  if (max_iters < 0) throw ConfigError("lbfgs: max_iters must be >= 0");
  if (memory < 1) throw ConfigError("lbfgs: memory must be >= 1");
  if (!(grad_tol > 0.0)) throw ConfigError("lbfgs: grad_tol must be positive");
  if (!(sufficient_decrease > 0.0 && sufficient_decrease < 1.0)) {
    throw ConfigError("lbfgs: sufficient_decrease must lie in (0, 1)");
  }
  if (!(backtrack > 0.0 && backtrack < 1.0)) {
    throw ConfigError("lbfgs: backtrack factor must lie in (0, 1)");
  }
  if (max_line_search < 1) throw ConfigError("lbfgs: max_line_search must be >= 1");
}

void TrainConfig::validate() const {
  if (adam_steps < 0) throw ConfigError("train: adam_steps must be >= 0");
  adam.validate();
  lbfgs.validate();
  if (batch < 0) throw ConfigError("train: batch must be >= 0 (0 = full batch)");
  if (history_every < 1) throw ConfigError("train: history_every must be >= 1");
  if (divergence_penalty < 0.0) throw ConfigError("train: divergence_penalty must be >= 0");
}

void adam_step(std::vector<double>& theta, std::span<const double> grad, AdamState& state,
               const AdamConfig& cfg) {
  if (theta.size() != grad.size() || theta.size() != state.m.size() ||
      theta.size() != state.v.size()) {
    throw DimensionError("adam_step: parameter, gradient and state sizes differ");
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    theta[i] -= cfg.lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.eps);
  }
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

std::string to_string(LbfgsStop reason) {
  switch (reason) {
    case LbfgsStop::GradTolerance: return "gradient_tolerance";
    case LbfgsStop::MaxIterations: return "max_iterations";
    case LbfgsStop::LineSearchFailure: return "line_search_failure";
    case LbfgsStop::NonFinite: return "non_finite";
  }
  return "?";
}

namespace {

LbfgsReport minimize_impl(const Objective& objective, std::vector<double>& theta,
                              const LbfgsConfig& cfg, const LbfgsObserver& observer) {
  const std::size_t n = theta.size();
  LbfgsReport report;

  std::vector<double> grad(n, 0.0);
  double f = objective(theta, &grad);
  report.evaluations = 1;
  report.initial_loss = f;
  if (!std::isfinite(f)) {
    report.reason = LbfgsStop::NonFinite;
    report.best_loss = f;
    return report;
  }

  std::vector<double> best_x = theta;
  double best_f = f;

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  double gamma = 1.0;

  std::vector<double> dir(n), x_new(n), g_new(n), alpha_stack;

  report.reason = LbfgsStop::MaxIterations;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const double gnorm = norm2(grad);
    if (observer) observer(iter, f, gnorm);
    if (gnorm <= cfg.grad_tol) {
      report.reason = LbfgsStop::GradTolerance;
      break;
    }

    // Two-loop recursion for dir = -H * grad.
    for (std::size_t i = 0; i < n; ++i) dir[i] = -grad[i];
    alpha_stack.assign(s_hist.size(), 0.0);
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      const double a = rho_hist[i] * dot(s_hist[i], dir);
      alpha_stack[i] = a;
      for (std::size_t j = 0; j < n; ++j) dir[j] -= a * y_hist[i][j];
    }
    if (!s_hist.empty()) {
      for (std::size_t j = 0; j < n; ++j) dir[j] *= gamma;
      for (std::size_t i = 0; i < s_hist.size(); ++i) {
        const double b = rho_hist[i] * dot(y_hist[i], dir);
        for (std::size_t j = 0; j < n; ++j) dir[j] += (alpha_stack[i] - b) * s_hist[i][j];
      }
    }

    double gd = dot(grad, dir);
    bool fresh = s_hist.empty();
    if (!(gd < 0.0)) {
      // Not a descent direction; restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) dir[i] = -grad[i];
      gd = -gnorm * gnorm;
      fresh = true;
    }

    double alpha = fresh ? std::min(1.0, 1.0 / gnorm) : 1.0;
    bool accepted = false;
    bool have_grad = false;
    double f_new = f;
    for (int ls = 0; ls < cfg.max_line_search; ++ls) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = theta[i] + alpha * dir[i];
      // First trial usually sticks, so take the gradient along with it.
      have_grad = (ls == 0);
      f_new = objective(x_new, have_grad ? &g_new : nullptr);
      ++report.evaluations;
      if (std::isfinite(f_new) && f_new <= f + cfg.sufficient_decrease * alpha * gd) {
        accepted = true;
        break;
      }
      alpha *= cfg.backtrack;
    }
    if (!accepted) {
      report.reason = LbfgsStop::LineSearchFailure;
      break;
    }
    if (!have_grad) {
      objective(x_new, &g_new);
      ++report.evaluations;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - theta[i];
      y[i] = g_new[i] - grad[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-10 * norm2(s) * norm2(y)) {
      gamma = sy / dot(y, y);
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > cfg.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    theta.swap(x_new);
    grad.swap(g_new);
    f = f_new;
    report.iterations = iter + 1;
    if (f < best_f) {
      best_f = f;
      best_x = theta;
    }
  }

  theta = std::move(best_x);
  report.best_loss = best_f;
  report.grad_norm = norm2(grad);
  return report;
}

}  // namespace

LbfgsReport lbfgs_minimize(const Objective& objective, std::vector<double>& theta,
                           const LbfgsConfig& cfg, const LbfgsObserver& observer) {
  cfg.validate();
  if (theta.empty()) throw ConfigError("lbfgs: empty parameter vector");
  return minimize_impl(objective, theta, cfg, observer);
}

namespace {

struct Batch {
  Tensor phi1, phi2;
  std::vector<double> t1, t2;
};

Batch make_batch(std::span<const DataPair> data, std::span<const int> subset) {
  const int d = data.front().dim();
  const int n = subset.empty() ? static_cast<int>(data.size()) : static_cast<int>(subset.size());
  Batch batch{Tensor(d, n), Tensor(d, n), std::vector<double>(n), std::vector<double>(n)};
  for (int j = 0; j < n; ++j) {
    const DataPair& pair = data[subset.empty() ? j : subset[j]];
    pair.validate();
    if (pair.dim() != d) {
      throw ConfigError("loss: pair " + std::to_string(j) + " has dimension " +
                        std::to_string(pair.dim()) + ", expected " + std::to_string(d));
    }
    for (int i = 0; i < d; ++i) {
      batch.phi1(i, j) = pair.phi1[i];
      batch.phi2(i, j) = pair.phi2[i];
    }
    batch.t1[j] = pair.t1;
    batch.t2[j] = pair.t2;
  }
  return batch;
}

// Shared tape evaluation. `subset` empty means the full data set; `grad`
// null skips the backward pass. Column j of the batch is pair subset[j], so a
// DivergenceError's pair index is translated back to the data set.
double loss_impl(const NetworkParams& params, const ResidualScheme& scheme,
                 std::span<const DataPair> data, std::span<const int> subset,
                 std::vector<double>* grad) {
  scheme.validate();
  if (data.empty()) throw ConfigError("loss: empty data set");
  const int d = data.front().dim();
  if (params.state_dim() != d) {
    throw ConfigError("loss: network state dimension " + std::to_string(params.state_dim()) +
                      " does not match data dimension " + std::to_string(d));
  }

  const Batch batch = make_batch(data, subset);
  Tape tape;
  const StagedNetwork net = stage(tape, params);
  const NodeId phi1 = tape.leaf(batch.phi1);
  const NodeId phi2 = tape.leaf(batch.phi2);
  const TapeRhsFn rhs = [&net](Tape& t, NodeId states, std::span<const double> times) {
    return forward_on_tape(t, net, states, times);
  };

  NodeId root;
  try {
    const NodeId r = residual_on_tape(tape, scheme, rhs, phi1, phi2, batch.t1, batch.t2);
    root = tape.sum(tape.square(r));
  } catch (const DivergenceError& e) {
    const long local = e.pair_index();
    const long original =
        (local >= 0 && !subset.empty()) ? subset[static_cast<std::size_t>(local)] : local;
    throw DivergenceError(std::string("loss: ") + e.what(), e.segment(), original);
  }

  if (grad) {
    const auto ids = net.parameter_ids();
    const auto tensors = tape.backward(root, ids);
    grad->clear();
    grad->reserve(params.parameter_count());
    for (const Tensor& t : tensors) {
      grad->insert(grad->end(), t.values().begin(), t.values().end());
    }
  }
  return tape.value(root)(0, 0);
}

}  // namespace

double loss(const NetworkParams& params, const ResidualScheme& scheme,
            std::span<const DataPair> data) {
  return loss_impl(params, scheme, data, {}, nullptr);
}

double loss_and_gradient(const NetworkParams& params, const ResidualScheme& scheme,
                         std::span<const DataPair> data, std::vector<double>& grad) {
  return loss_impl(params, scheme, data, {}, &grad);
}

namespace {

class TrainRun {
 public:
  TrainRun(const ResidualScheme& scheme, std::span<const DataPair> data,
           const NetworkConfig& net_cfg, const TrainConfig& cfg)
      : scheme_(scheme), data_(data), cfg_(cfg), start_(std::chrono::steady_clock::now()) {
    work_ = init_network(net_cfg.widths, derive_seed(cfg.seed, 0), net_cfg.autonomous);
    theta_ = flatten(work_);
  }

  TrainResult run() {
    TrainResult result;
    best_theta_ = theta_;

    try {
      adam_phase(result);
      lbfgs_phase(result);
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.error = e.what();
    }

    unflatten_into(best_theta_, work_);
    result.params = work_;
    result.final_loss = best_loss_;
    push(result, history_step_, best_loss_, 0.0, "final");
    return result;
  }

 private:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  void push(TrainResult& result, long step, double value, double gnorm, const char* phase) {
    result.history.push_back(LossReport{step, value, gnorm, phase, seconds()});
  }

  void consider_best(double value) {
    if (value < best_loss_) {
      best_loss_ = value;
      best_theta_ = theta_;
    }
  }

  // Loss/gradient at theta_ over `subset` (empty = full batch). With a
  // divergence penalty configured, diverged pairs are dropped from the
  // evaluation and charged the penalty instead; without one the error
  // propagates and aborts training.
  double evaluate(std::span<const int> subset, std::vector<double>* grad) {
    unflatten_into(theta_, work_);
    if (cfg_.divergence_penalty <= 0.0) {
      return loss_impl(work_, scheme_, data_, subset, grad);
    }
    std::vector<int> kept(subset.begin(), subset.end());
    if (kept.empty()) {
      kept.resize(data_.size());
      std::iota(kept.begin(), kept.end(), 0);
    }
    const std::size_t total = kept.size();
    std::size_t dropped = 0;
    for (;;) {
      try {
        const double value = loss_impl(work_, scheme_, data_, kept, grad);
        return value + cfg_.divergence_penalty * static_cast<double>(dropped);
      } catch (const DivergenceError& e) {
        if (e.pair_index() < 0) throw;
        kept.erase(std::remove(kept.begin(), kept.end(), static_cast<int>(e.pair_index())),
                   kept.end());
        ++dropped;
        if (kept.empty() || dropped * 10 > total) {
          throw DivergenceError("training diverged on more than 10% of pairs", e.segment(),
                                e.pair_index());
        }
      }
    }
  }

  void adam_phase(TrainResult& result) {
    std::vector<double> grad;
    AdamState state(theta_.size());
    Rng batch_rng(derive_seed(cfg_.seed, 1));
    std::vector<int> all(data_.size());
    std::iota(all.begin(), all.end(), 0);
    const bool full = cfg_.batch == 0 || cfg_.batch >= static_cast<int>(data_.size());

    for (int step = 1; step <= cfg_.adam_steps; ++step) {
      std::span<const int> subset;
      if (!full) {
        // Partial Fisher-Yates: the first `batch` entries form the sample.
        for (int i = 0; i < cfg_.batch; ++i) {
          const std::size_t j = i + batch_rng.below(all.size() - i);
          std::swap(all[i], all[j]);
        }
        subset = std::span<const int>(all.data(), cfg_.batch);
      }
      const double value = evaluate(subset, &grad);
      const double gnorm = norm2(grad);
      if (full) consider_best(value);
      if (step == 1 || step % cfg_.history_every == 0) {
        push(result, step, value, gnorm, "adam");
      }
      adam_step(theta_, grad, state, cfg_.adam);
      history_step_ = step;
    }

    // Loss at the phase's final iterate, which the fine-tune starts from.
    const double value = evaluate({}, nullptr);
    consider_best(value);
    if (cfg_.adam_steps > 0) push(result, ++history_step_, value, 0.0, "adam");
  }

  void lbfgs_phase(TrainResult& result) {
    if (cfg_.lbfgs.max_iters == 0) return;
    const long base = history_step_;
    const Objective objective = [this](std::span<const double> x, std::vector<double>* g) {
      std::copy(x.begin(), x.end(), theta_.begin());
      try {
        return evaluate({}, g);
      } catch (const DivergenceError&) {
        if (g) std::fill(g->begin(), g->end(), 0.0);
        return std::numeric_limits<double>::infinity();
      }
    };
    const LbfgsObserver observer = [&](int iter, double value, double gnorm) {
      history_step_ = base + iter + 1;
      if (iter % cfg_.history_every == 0) push(result, history_step_, value, gnorm, "lbfgs");
    };
    std::vector<double> theta = theta_;
    const LbfgsReport report = lbfgs_minimize(objective, theta, cfg_.lbfgs, observer);
    theta_ = theta;
    consider_best(report.best_loss);
    push(result, ++history_step_, report.best_loss, report.grad_norm, "lbfgs");
  }

  const ResidualScheme& scheme_;
  std::span<const DataPair> data_;
  const TrainConfig& cfg_;
  std::chrono::steady_clock::time_point start_;

  NetworkParams work_;
  std::vector<double> theta_, best_theta_;
  double best_loss_ = std::numeric_limits<double>::infinity();
  long history_step_ = 0;
};

}  // namespace

TrainResult train(const ResidualScheme& scheme, std::span<const DataPair> data,
                  const NetworkConfig& net_cfg, const TrainConfig& cfg) {
  scheme.validate();
  cfg.validate();
  if (data.empty()) throw ConfigError("train: empty data set");
  TrainRun run(scheme, data, net_cfg, cfg);
  return run.run();
}

void save_history_csv(std::span<const LossReport> history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open history for writing: " + path);
  out << "step,loss,grad_norm,phase,seconds\n";
  char line[256];
  for (const LossReport& r : history) {
    std::snprintf(line, sizeof(line), "%ld,%.17g,%.17g,%s,%.3f\n", r.step, r.loss, r.grad_norm,
                  r.phase.c_str(), r.seconds);
    out << line;
  }
  if (!out) throw IoError("failed writing history: " + path);
}

}  // namespace odekin
