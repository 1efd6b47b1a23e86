#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "attnmixer/errors.hpp"

namespace attnmixer {

/// Timestamped multivariate monitoring log: N steps of D feature channels
/// plus one KPI column. Immutable after construction in practice; all
/// consumers copy or read.
struct SeriesFrame {
  std::vector<std::string> timestamps;    // strictly increasing ISO-8601
  std::vector<std::string> feature_names; // size D
  std::vector<double> features;           // N x D row-major
  std::vector<double> kpi;                // size N

  int steps() const { return static_cast<int>(timestamps.size()); }
  int variates() const { return static_cast<int>(feature_names.size()); }
  double feature(int row, int col) const {
    return features[static_cast<size_t>(row) * feature_names.size() + col];
  }

  /// Consistency checks: matching lengths, finite values, unique feature
  /// names, strictly increasing timestamps. Throws DataError.
  void validate() const;
};

/// Reads `timestamp,v1,...,vD,kpi` CSV. First column is an ISO-8601
/// timestamp, last column the KPI, the rest features. Rejects rows with
/// unparsable numbers and non-increasing timestamps, naming the row.
SeriesFrame load_csv(const std::string& path);

/// Writes CSV in the load_csv format with round-trip-exact doubles.
void save_csv(const SeriesFrame& frame, const std::string& path);

/// Directed variate dependencies of a synthetic system: (source, target)
/// pairs where source influences target.
struct GroundTruthGraph {
  int variates = 0;
  std::vector<std::pair<int, int>> edges;

  bool has_edge(int source, int target) const;
};

void save_graph(const GroundTruthGraph& graph, const std::string& path);
GroundTruthGraph load_graph(const std::string& path);

/// Linear stochastic system x_t = A x_{t-1} + B u_t + eps_t with a shared
/// scalar driver u following an AR(1) process with occasional positive
/// shocks, and kpi_t = c^T x_t. Channel 0 is the driver's observable home:
/// by convention driver_inject[0] exposes u on channel 0, and the
/// remaining nonzero injections are recorded as edges 0 -> d.
struct SynthSpec {
  int variates = 8;
  int steps = 4000;
  std::vector<double> coupling;       // D x D row-major; coupling[t][s]: s -> t at lag 1
  std::vector<double> driver_inject;  // size D, contemporaneous driver weights
  double driver_rho = 0.9;            // AR(1) coefficient of the driver
  double shock_prob = 0.02;           // per-step probability of a positive shock
  double shock_scale = 1.0;
  double driver_noise = 0.02;         // driver innovation stddev
  double noise_sigma = 0.05;          // per-channel noise stddev
  std::vector<double> kpi_weights;    // size D
  double init_value = 0.0;            // initial state of every channel

  /// Default desk-scale benchmark: 8 channels, 6 lag couplings, 3 driver
  /// injections, tuned so the KPI is forecastable from the channels but
  /// not from its own history alone.
  static SynthSpec g1();

  /// Shape checks plus the stationarity guard spectral_radius(A) < 1.
  void validate() const;

  /// Edge set: nonzero off-diagonal couplings (s -> t) plus driver
  /// injections (0 -> d) for d != 0.
  GroundTruthGraph ground_truth() const;
};

/// Spectral radius of a dense n x n matrix, estimated by normalized
/// repeated squaring (Gelfand's formula); accurate to ~1e-9 here.
double spectral_radius(const std::vector<double>& a, int n);

struct SynthResult {
  SeriesFrame frame;
  GroundTruthGraph graph;
};

/// Simulates the system for 100 burn-in steps plus spec.steps recorded
/// steps. Deterministic for a given (spec, seed). Throws DataError if the
/// state leaves [-1e6, 1e6].
SynthResult gen_synthetic(const SynthSpec& spec, std::uint64_t seed);

}  // namespace attnmixer
