#include "odekin/network.hpp"

#include <cmath>
#include <fstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "odekin/errors.hpp"
#include "odekin/rng.hpp"

namespace odekin {

std::size_t NetworkParams::parameter_count() const {
  std::size_t count = 0;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    count += static_cast<std::size_t>(widths[k + 1]) * widths[k] + widths[k + 1];
  }
  return count;
}

void NetworkParams::validate() const {
  if (widths.size() < 2) {
    throw ConfigError("network: need at least input and output widths");
  }
  for (int w : widths) {
    if (w <= 0) throw ConfigError("network: widths must be positive");
  }
  const int d = state_dim();
  if (d <= 0) throw ConfigError("network: non-autonomous input width must exceed 1");
  if (widths.back() != d) {
    throw ConfigError("network: output width " + std::to_string(widths.back()) +
                      " must equal the state dimension " + std::to_string(d));
  }
  if (weights.size() != widths.size() - 1 || biases.size() != widths.size() - 1) {
    throw ConfigError("network: layer count does not match widths");
  }
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    if (weights[k].rows() != widths[k + 1] || weights[k].cols() != widths[k] ||
        biases[k].rows() != widths[k + 1] || biases[k].cols() != 1) {
      throw ConfigError("network: layer " + std::to_string(k + 2) + " shapes inconsistent");
    }
  }
}

NetworkParams init_network(std::vector<int> widths, std::uint64_t seed, bool autonomous) {
  NetworkParams params;
  params.widths = std::move(widths);
  params.autonomous = autonomous;
  params.seed = seed;
  if (params.widths.size() < 2) {
    throw ConfigError("init_network: need at least input and output widths");
  }
  Rng rng(seed);
  for (std::size_t k = 0; k + 1 < params.widths.size(); ++k) {
    const int fan_in = params.widths[k], fan_out = params.widths[k + 1];
    if (fan_in <= 0 || fan_out <= 0) throw ConfigError("init_network: widths must be positive");
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor w(fan_out, fan_in);
    for (double& v : w.values()) v = rng.uniform(-limit, limit);
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(fan_out, 1);
  }
  params.validate();
  return params;
}

std::vector<double> forward(const NetworkParams& params, std::span<const double> state,
                            double t) {
  const std::size_t expect = static_cast<std::size_t>(params.state_dim());
  if (state.size() != expect) {
    throw DimensionError("forward: state dimension " + std::to_string(state.size()) +
                         " does not match network input " + std::to_string(expect));
  }
  std::vector<double> a(state.begin(), state.end());
  if (!params.autonomous) a.push_back(t);

  std::vector<double> z;
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    const Tensor& w = params.weights[k];
    const Tensor& b = params.biases[k];
    z.assign(w.rows(), 0.0);
    for (int i = 0; i < w.rows(); ++i) {
      const double* wr = w.row(i);
      double acc = b(i, 0);
      for (int j = 0; j < w.cols(); ++j) acc += wr[j] * a[j];
      z[i] = acc;
    }
    if (k + 1 < params.weights.size()) {
      for (double& v : z) v = std::tanh(v);
    }
    a = z;
  }
  return a;
}

std::vector<double> flatten(const NetworkParams& params) {
  std::vector<double> flat;
  flat.reserve(params.parameter_count());
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    auto wv = params.weights[k].values();
    flat.insert(flat.end(), wv.begin(), wv.end());
    auto bv = params.biases[k].values();
    flat.insert(flat.end(), bv.begin(), bv.end());
  }
  return flat;
}

NetworkParams unflatten(std::span<const double> flat, const std::vector<int>& widths,
                        bool autonomous) {
  NetworkParams params;
  params.widths = widths;
  params.autonomous = autonomous;
  if (widths.size() < 2) throw ConfigError("unflatten: need at least two widths");
  std::size_t expect = 0;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    expect += static_cast<std::size_t>(widths[k + 1]) * widths[k] + widths[k + 1];
  }
  if (flat.size() != expect) {
    throw DimensionError("unflatten: flat length " + std::to_string(flat.size()) +
                         " does not match parameter count " + std::to_string(expect));
  }
  std::size_t at = 0;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const std::size_t wn = static_cast<std::size_t>(widths[k + 1]) * widths[k];
    params.weights.emplace_back(widths[k + 1], widths[k],
                                std::vector<double>(flat.begin() + at, flat.begin() + at + wn));
    at += wn;
    params.biases.emplace_back(widths[k + 1], 1,
                               std::vector<double>(flat.begin() + at,
                                                   flat.begin() + at + widths[k + 1]));
    at += widths[k + 1];
  }
  params.validate();
  return params;
}

void unflatten_into(std::span<const double> flat, NetworkParams& out) {
  if (flat.size() != out.parameter_count()) {
    throw DimensionError("unflatten_into: flat length " + std::to_string(flat.size()) +
                         " does not match parameter count " +
                         std::to_string(out.parameter_count()));
  }
  std::size_t at = 0;
  for (std::size_t k = 0; k < out.weights.size(); ++k) {
    auto wv = out.weights[k].values();
    for (double& v : wv) v = flat[at++];
    auto bv = out.biases[k].values();
    for (double& v : bv) v = flat[at++];
  }
}

std::vector<NodeId> StagedNetwork::parameter_ids() const {
  std::vector<NodeId> ids;
  ids.reserve(2 * weight_ids.size());
  for (std::size_t k = 0; k < weight_ids.size(); ++k) {
    ids.push_back(weight_ids[k]);
    ids.push_back(bias_ids[k]);
  }
  return ids;
}

StagedNetwork stage(Tape& tape, const NetworkParams& params) {
  params.validate();
  StagedNetwork net;
  net.widths = params.widths;
  net.autonomous = params.autonomous;
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    net.weight_ids.push_back(tape.leaf(params.weights[k]));
    net.bias_ids.push_back(tape.leaf(params.biases[k]));
  }
  return net;
}

NodeId forward_on_tape(Tape& tape, const StagedNetwork& net, NodeId states,
                       std::span<const double> times) {
  const int d = net.autonomous ? net.widths.front() : net.widths.front() - 1;
  const Tensor& sv = tape.value(states);
  if (sv.rows() != d) {
    throw DimensionError("forward_on_tape: state rows " + std::to_string(sv.rows()) +
                         " do not match network input " + std::to_string(d));
  }
  const int n = sv.cols();

  NodeId a = states;
  if (!net.autonomous) {
    if (static_cast<int>(times.size()) != n) {
      throw DimensionError("forward_on_tape: need one time per state column");
    }
    // Append the time row through constant leaves: [state; t] = P*state + T.
    Tensor proj(d + 1, d);
    for (int i = 0; i < d; ++i) proj(i, i) = 1.0;
    Tensor trow(d + 1, n);
    for (int j = 0; j < n; ++j) trow(d, j) = times[j];
    a = tape.add(tape.matmul(tape.leaf(std::move(proj)), states), tape.leaf(std::move(trow)));
  }

  const NodeId ones_row = tape.leaf(Tensor::filled(1, n, 1.0));
  for (std::size_t k = 0; k < net.weight_ids.size(); ++k) {
    const NodeId z =
        tape.add(tape.matmul(net.weight_ids[k], a), tape.matmul(net.bias_ids[k], ones_row));
    a = (k + 1 < net.weight_ids.size()) ? tape.tanh(z) : z;
  }
  return a;
}

namespace {

using nlohmann::json;

}  // namespace

void save_checkpoint(const NetworkParams& params, const std::string& scheme_kind,
                     int scheme_stages, const std::string& path) {
  params.validate();
  json doc;
  doc["format"] = "odekin-checkpoint";
  doc["version"] = 1;
  doc["widths"] = params.widths;
  doc["autonomous"] = params.autonomous;
  doc["seed"] = params.seed;
  doc["scheme"] = {{"kind", scheme_kind}, {"stages", scheme_stages}};
  doc["parameters"] = flatten(params);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint " + path + ": " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "odekin-checkpoint") {
      throw ConfigError("unrecognized checkpoint format in " + path);
    }
    const auto widths = doc.at("widths").get<std::vector<int>>();
    const auto flat = doc.at("parameters").get<std::vector<double>>();
    Checkpoint ck;
    ck.params = unflatten(flat, widths, doc.at("autonomous").get<bool>());
    ck.params.seed = doc.at("seed").get<std::uint64_t>();
    ck.scheme_kind = doc.at("scheme").at("kind").get<std::string>();
    ck.scheme_stages = doc.at("scheme").at("stages").get<int>();
    return ck;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint " + path + " is missing fields: " + e.what());
  }
}

}  // namespace odekin
