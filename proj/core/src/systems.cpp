#include "odekin/systems.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "csv_util.hpp"
#include "odekin/errors.hpp"
#include "odekin/rng.hpp"

namespace odekin {

bool Domain::contains(std::span<const double> point) const {
  if (point.size() != lower.size()) return false;
  for (std::size_t i = 0; i < point.size(); ++i) {
    if (point[i] < lower[i] || point[i] > upper[i]) return false;
  }
  return true;
}

void Domain::validate() const {
  if (lower.empty() || lower.size() != upper.size()) {
    throw ConfigError("domain: bounds are empty or of different dimensions");
  }
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!(lower[i] < upper[i])) {
      throw ConfigError("domain: need lower < upper in every dimension");
    }
  }
}

namespace {

void check_dim(std::span<const double> state, std::size_t expect, const char* who) {
  if (state.size() != expect) {
    throw DimensionError(std::string(who) + ": expected state dimension " +
                         std::to_string(expect) + ", got " + std::to_string(state.size()));
  }
}

// Glycolytic oscillator constants (yeast glycolysis, seven species).
namespace glyc {
constexpr double J0 = 2.5, k1 = 100.0, k2 = 6.0, k3 = 16.0, k4 = 100.0, k5 = 1.28, k6 = 12.0;
constexpr double k = 1.8, kappa = 13.0, K1 = 0.52, psi = 0.1, N = 1.0, A = 4.0;
// q = 4: the gate below spells out the fourth power.
}  // namespace glyc

}  // namespace

std::vector<double> rhs_cubic(std::span<const double> state) {
  check_dim(state, 2, "rhs_cubic");
  const double x3 = state[0] * state[0] * state[0];
  const double y3 = state[1] * state[1] * state[1];
  return {-0.1 * x3 + 2.0 * y3, -2.0 * x3 - 0.1 * y3};
}

std::vector<double> rhs_glycolytic(std::span<const double> s) {
  check_dim(s, 7, "rhs_glycolytic");
  using namespace glyc;
  const double u = s[5] / K1;
  const double gate = 1.0 + (u * u) * (u * u);
  const double flux = k1 * s[0] * s[5] / gate;
  const double phosphorylation = k2 * s[1] * (N - s[4]);
  const double exchange = k3 * s[2] * (A - s[5]);
  return {
      J0 - flux,
      2.0 * flux - phosphorylation - k6 * s[1] * s[4],
      phosphorylation - exchange,
      exchange - k4 * s[3] * s[4] - kappa * (s[3] - s[6]),
      phosphorylation - k4 * s[3] * s[4] - k6 * s[1] * s[4],
      -2.0 * flux + 2.0 * exchange - k5 * s[5],
      psi * kappa * (s[3] - s[6]) - k * s[6],
  };
}

std::vector<double> rhs_hopf_augmented(std::span<const double> s) {
  check_dim(s, 3, "rhs_hopf_augmented");
  const double mu = s[0], x = s[1], y = s[2];
  const double r2 = x * x + y * y;
  return {0.0, mu * x + y - x * r2, -x + mu * y - y * r2};
}

const TrueSystem& cubic_oscillator() {
  static const TrueSystem sys{
      "cubic_oscillator",
      2,
      [](std::span<const double> s, double) { return rhs_cubic(s); },
      Domain{{-2.5, -2.5}, {2.5, 2.5}},
      {0.01, 0.05, 0.1, 0.2},
      {{2.0, 0.0}},
      25.0,
      0.01,
  };
  return sys;
}

const TrueSystem& glycolytic_oscillator() {
  static const TrueSystem sys{
      "glycolytic",
      7,
      [](std::span<const double> s, double) { return rhs_glycolytic(s); },
      Domain{{0.0, 0.0, 0.0, 0.0, 0.0, 0.14, 0.05}, {2.0, 3.0, 0.5, 0.5, 0.5, 2.67, 0.15}},
      {0.2, 0.5},
      {{1.1, 1.0, 0.075, 0.175, 0.25, 0.9, 0.095}},
      5.0,
      0.01,
  };
  return sys;
}

const TrueSystem& hopf_augmented() {
  static const TrueSystem sys{
      "hopf_augmented",
      3,
      [](std::span<const double> s, double) { return rhs_hopf_augmented(s); },
      Domain{{-1.0, -2.0, -1.0}, {1.0, 2.0, 1.0}},
      {0.5, 1.0, 2.0},
      {{-0.2, 2.0, 0.0},
       {-0.1, 2.0, 0.0},
       {0.2, 2.0, 0.0},
       {0.3, 2.0, 0.0},
       {0.5, 2.0, 0.0},
       {0.7, 2.0, 0.0}},
      75.0,
      0.05,
  };
  return sys;
}

const TrueSystem& true_system(std::string_view name) {
  if (name == "cubic_oscillator" || name == "cubic") return cubic_oscillator();
  if (name == "glycolytic") return glycolytic_oscillator();
  if (name == "hopf_augmented" || name == "hopf") return hopf_augmented();
  throw ConfigError("unknown system '" + std::string(name) +
                    "' (expected cubic_oscillator, glycolytic or hopf_augmented)");
}

std::vector<std::string> true_system_names() {
  return {"cubic_oscillator", "glycolytic", "hopf_augmented"};
}

std::vector<std::vector<double>> lhs_sample(const Domain& domain, int n, std::uint64_t seed) {
  domain.validate();
  if (n < 1) throw ConfigError("lhs_sample: need n >= 1");
  const int d = domain.dim();
  Rng rng(seed);
  std::vector<std::vector<double>> points(n, std::vector<double>(d));
  std::vector<int> strata(n);
  for (int dim = 0; dim < d; ++dim) {
    std::iota(strata.begin(), strata.end(), 0);
    rng.shuffle(strata);
    const double width = (domain.upper[dim] - domain.lower[dim]) / n;
    for (int i = 0; i < n; ++i) {
      points[i][dim] = domain.lower[dim] + (strata[i] + rng.uniform()) * width;
    }
  }
  return points;
}

std::vector<double> reference_integrate(const RhsFn& rhs, std::span<const double> phi0,
                                        double t0, double t1, int substeps) {
  if (substeps < 1) throw ConfigError("reference_integrate: need substeps >= 1");
  const std::size_t d = phi0.size();
  const double h = (t1 - t0) / substeps;
  std::vector<double> state(phi0.begin(), phi0.end());
  std::vector<double> stage(d);
  for (int s = 0; s < substeps; ++s) {
    const double t = t0 + s * h;
    const auto k1 = rhs(state, t);
    for (std::size_t i = 0; i < d; ++i) stage[i] = state[i] + 0.5 * h * k1[i];
    const auto k2 = rhs(stage, t + 0.5 * h);
    for (std::size_t i = 0; i < d; ++i) stage[i] = state[i] + 0.5 * h * k2[i];
    const auto k3 = rhs(stage, t + 0.5 * h);
    for (std::size_t i = 0; i < d; ++i) stage[i] = state[i] + h * k3[i];
    const auto k4 = rhs(stage, t + h);
    bool finite = true;
    for (std::size_t i = 0; i < d; ++i) {
      state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      finite = finite && std::isfinite(state[i]);
    }
    if (!finite) {
      throw DivergenceError("reference_integrate: non-finite state at substep " +
                                std::to_string(s),
                            s);
    }
  }
  return state;
}

void TimeSeries::validate() const {
  if (times.size() != states.size()) {
    throw ConfigError("time series: times and states lengths differ");
  }
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    if (!(times[i] < times[i + 1])) {
      throw ConfigError("time series: times must be strictly increasing");
    }
  }
  for (std::size_t i = 1; i < states.size(); ++i) {
    if (states[i].size() != states[0].size()) {
      throw ConfigError("time series: state dimensions differ");
    }
  }
}

void DataPairSet::validate() const {
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    pairs[j].validate();
    if (pairs[j].dim() != pairs.front().dim()) {
      throw ConfigError("data set: pair " + std::to_string(j) + " has a different dimension");
    }
  }
}

int default_substeps(double dt) {
  return std::max(200, static_cast<int>(std::ceil(500.0 * dt)));
}

namespace {

double relative_distance(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

constexpr double kGuardTolerance = 1e-8;
constexpr int kMaxEscalations = 6;

// Smallest substep count (starting from `base`, escalating 4x) whose solution
// agrees with a 4x finer one to the guard tolerance.
int required_substeps(const RhsFn& rhs, std::span<const double> phi0, double dt, int base) {
  int s = base;
  std::vector<double> coarse = reference_integrate(rhs, phi0, 0.0, dt, s);
  for (int escalation = 0; escalation < kMaxEscalations; ++escalation) {
    std::vector<double> fine = reference_integrate(rhs, phi0, 0.0, dt, 4 * s);
    if (relative_distance(coarse, fine) < kGuardTolerance) return 4 * s;
    coarse = std::move(fine);
    s *= 4;
  }
  throw DivergenceError("reference solution did not converge within the substep budget");
}

}  // namespace

DataPairSet generate_pairs(const TrueSystem& system, const Domain& domain, int n, double dt,
                           std::uint64_t seed, int substeps) {
  domain.validate();
  if (domain.dim() != system.dim) {
    throw ConfigError("generate_pairs: domain dimension " + std::to_string(domain.dim()) +
                      " does not match system dimension " + std::to_string(system.dim));
  }
  if (n < 1) throw ConfigError("generate_pairs: need n >= 1");
  if (!(dt > 0.0)) throw ConfigError("generate_pairs: need dt > 0");
  const int base = substeps > 0 ? substeps : default_substeps(dt);

  auto points = lhs_sample(domain, n, derive_seed(seed, 0));
  Rng resample_rng(derive_seed(seed, 1));

  // Pass 1: find the substep count every pair needs; replace samples whose
  // integration diverges outright.
  int rejected = 0;
  int needed = base;
  for (int i = 0; i < n; ++i) {
    for (;;) {
      try {
        needed = std::max(needed, required_substeps(system.rhs, points[i], dt, base));
        break;
      } catch (const DivergenceError&) {
        ++rejected;
        if (rejected * 10 > n) {
          throw ConfigError("generate_pairs: more than 10% of samples rejected (" +
                            std::to_string(rejected) + " of " + std::to_string(n) + ")");
        }
        for (int k = 0; k < domain.dim(); ++k) {
          points[i][k] = resample_rng.uniform(domain.lower[k], domain.upper[k]);
        }
      }
    }
  }

  // Pass 2: generate every pair at the shared resolution.
  DataPairSet set;
  set.pairs.reserve(n);
  for (int i = 0; i < n; ++i) {
    DataPair pair;
    pair.phi1 = points[i];
    pair.t1 = 0.0;
    pair.phi2 = reference_integrate(system.rhs, points[i], 0.0, dt, needed);
    pair.t2 = dt;
    set.pairs.push_back(std::move(pair));
  }
  set.provenance = PairProvenance{system.name, system.dim, n,        dt,
                                  seed,        base,       needed,   rejected,
                                  domain};
  set.validate();
  return set;
}

DataPairSet pairs_from_series(std::span<const TimeSeries> series, int stride) {
  if (stride < 1) throw ConfigError("pairs_from_series: need stride >= 1");
  DataPairSet set;
  for (const TimeSeries& ts : series) {
    ts.validate();
    if (ts.times.size() < static_cast<std::size_t>(stride) + 1) {
      throw ConfigError("pairs_from_series: a series has fewer than stride+1 entries");
    }
    for (std::size_t j = 0; j + stride < ts.times.size(); ++j) {
      DataPair pair;
      pair.phi1 = ts.states[j];
      pair.t1 = ts.times[j];
      pair.phi2 = ts.states[j + stride];
      pair.t2 = ts.times[j + stride];
      set.pairs.push_back(std::move(pair));
    }
  }
  set.provenance.system = "time_series";
  set.provenance.dim = set.dim();
  set.provenance.n = static_cast<int>(set.pairs.size());
  set.validate();
  return set;
}

namespace {

using nlohmann::json;

}  // namespace

void save_pairs_csv(const DataPairSet& set, const std::string& csv_path) {
  set.validate();
  if (set.pairs.empty()) throw ConfigError("save_pairs_csv: empty data set");
  const int d = set.dim();

  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot open data set for writing: " + csv_path);
  out << "t1";
  for (int i = 1; i <= d; ++i) out << ",phi1_" << i;
  out << ",t2";
  for (int i = 1; i <= d; ++i) out << ",phi2_" << i;
  out << '\n';
  for (const DataPair& pair : set.pairs) {
    out << detail::format_double(pair.t1);
    for (double v : pair.phi1) out << ',' << detail::format_double(v);
    out << ',' << detail::format_double(pair.t2);
    for (double v : pair.phi2) out << ',' << detail::format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("failed writing data set: " + csv_path);

  const PairProvenance& p = set.provenance;
  json doc;
  doc["format"] = "odekin-pairs";
  doc["version"] = 1;
  doc["system"] = p.system;
  doc["dim"] = d;
  doc["n"] = static_cast<int>(set.pairs.size());
  doc["dt"] = p.dt;
  doc["seed"] = p.seed;
  doc["substeps_requested"] = p.substeps_requested;
  doc["substeps_used"] = p.substeps_used;
  doc["rejected"] = p.rejected;
  if (!p.domain.lower.empty()) {
    doc["domain"] = {{"lower", p.domain.lower}, {"upper", p.domain.upper}};
  }
  std::ofstream meta(detail::sidecar_path(csv_path));
  if (!meta) throw IoError("cannot open sidecar for writing: " + detail::sidecar_path(csv_path));
  meta << doc.dump(2) << '\n';
  if (!meta) throw IoError("failed writing sidecar: " + detail::sidecar_path(csv_path));
}

DataPairSet load_pairs_csv(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open data set: " + csv_path);

  std::string line;
  if (!std::getline(in, line)) throw IoError(csv_path + ": empty file");
  const auto header = detail::split_csv(line);
  if (header.size() < 4 || header.size() % 2 != 0 || header[0] != "t1") {
    throw IoError(csv_path + ": row 1: malformed header");
  }
  const int d = static_cast<int>(header.size() / 2 - 1);

  DataPairSet set;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != header.size()) {
      throw IoError(csv_path + ": row " + std::to_string(row) + ": expected " +
                    std::to_string(header.size()) + " fields, got " +
                    std::to_string(fields.size()));
    }
    DataPair pair;
    std::size_t at = 0;
    pair.t1 = detail::parse_double(fields[at++], csv_path, row);
    pair.phi1.resize(d);
    for (int i = 0; i < d; ++i) pair.phi1[i] = detail::parse_double(fields[at++], csv_path, row);
    pair.t2 = detail::parse_double(fields[at++], csv_path, row);
    pair.phi2.resize(d);
    for (int i = 0; i < d; ++i) pair.phi2[i] = detail::parse_double(fields[at++], csv_path, row);
    pair.validate();
    set.pairs.push_back(std::move(pair));
  }
  if (set.pairs.empty()) throw IoError(csv_path + ": no data rows");

  const std::string meta_path = detail::sidecar_path(csv_path);
  if (std::filesystem::exists(meta_path)) {
    std::ifstream meta(meta_path);
    json doc;
    try {
      meta >> doc;
      PairProvenance& p = set.provenance;
      p.system = doc.value("system", std::string());
      p.dim = doc.value("dim", d);
      p.n = doc.value("n", static_cast<int>(set.pairs.size()));
      p.dt = doc.value("dt", 0.0);
      p.seed = doc.value("seed", std::uint64_t{0});
      p.substeps_requested = doc.value("substeps_requested", 0);
      p.substeps_used = doc.value("substeps_used", 0);
      p.rejected = doc.value("rejected", 0);
      if (doc.contains("domain")) {
        p.domain.lower = doc["domain"]["lower"].get<std::vector<double>>();
        p.domain.upper = doc["domain"]["upper"].get<std::vector<double>>();
      }
    } catch (const json::exception& e) {
      throw IoError(meta_path + ": malformed sidecar: " + e.what());
    }
  } else {
    set.provenance.dim = d;
    set.provenance.n = static_cast<int>(set.pairs.size());
  }
  set.validate();
  return set;
}

}  // namespace odekin
