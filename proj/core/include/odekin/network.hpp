#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "odekin/tape.hpp"
#include "odekin/tensor.hpp"

namespace odekin {

/// Feed-forward tanh network approximating an ODE right-hand side.
///
/// Hidden layers apply tanh; the output layer is affine so the network can
/// represent unbounded kinetics. An autonomous network takes the state alone;
/// otherwise time is appended as a trailing input component.
struct NetworkParams {
  std::vector<int> widths;      // n_1 .. n_L, input through output
  std::vector<Tensor> weights;  // weights[k]: widths[k+1] x widths[k]
  std::vector<Tensor> biases;   // biases[k]:  widths[k+1] x 1
  bool autonomous = true;
  std::uint64_t seed = 0;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int state_dim() const { return autonomous ? widths.front() : widths.front() - 1; }
  std::size_t parameter_count() const;
  void validate() const;
};

/// Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero biases,
/// fully determined by the seed.
NetworkParams init_network(std::vector<int> widths, std::uint64_t seed, bool autonomous = true);

/// Plain evaluation off the tape.
std::vector<double> forward(const NetworkParams& params, std::span<const double> state,
                            double t = 0.0);

/// Parameter vector layout, fixed and relied on by checkpoints and the
/// optimizer: W^(2) row-major, b^(2), W^(3), b^(3), ...
std::vector<double> flatten(const NetworkParams& params);
NetworkParams unflatten(std::span<const double> flat, const std::vector<int>& widths,
                        bool autonomous = true);
/// Overwrites the weights/biases of `out` in place (hot path of training).
void unflatten_into(std::span<const double> flat, NetworkParams& out);

/// Network parameters staged on a tape as differentiable leaves.
struct StagedNetwork {
  std::vector<int> widths;
  bool autonomous = true;
  std::vector<NodeId> weight_ids;
  std::vector<NodeId> bias_ids;

  /// Leaf ids in flatten() order: W^(2), b^(2), W^(3), b^(3), ...
  std::vector<NodeId> parameter_ids() const;
};

StagedNetwork stage(Tape& tape, const NetworkParams& params);

/// Batched forward pass: `states` is a d x N node holding one state per
/// column; `times` gives the per-column time (only read by non-autonomous
/// networks). Returns the d_out x N output node.
NodeId forward_on_tape(Tape& tape, const StagedNetwork& net, NodeId states,
                       std::span<const double> times = {});

/// Checkpoint files: JSON with widths, flat parameter vector, autonomous
/// flag, seed and the training scheme. Round-trips are lossless.
struct Checkpoint {
  NetworkParams params;
  std::string scheme_kind;
  int scheme_stages = 1;
};

void save_checkpoint(const NetworkParams& params, const std::string& scheme_kind,
                     int scheme_stages, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace odekin
