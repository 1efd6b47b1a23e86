#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnmixer/data.hpp"
#include "attnmixer/metrics.hpp"
#include "attnmixer/model.hpp"
#include "attnmixer/train.hpp"

namespace attnmixer {

/// Empirical q-quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> values, double q);

/// Residual-based anomaly flags: the threshold is the q-quantile of the
/// calibration residuals (typically validation-split |y - yhat|); test
/// steps with |y - yhat| strictly above it are flagged.
struct AnomalyVerdict {
  std::vector<double> residuals;
  double threshold = 0.0;
  std::vector<bool> flags;
};

AnomalyVerdict anomaly_score(const std::vector<double>& actual,
                             const std::vector<double>& forecast,
                             const std::vector<double>& calibration_residuals,
                             double quantile);

/// Concentration summary of one attention matrix.
struct MatrixStats {
  double mean_row_entropy = 0.0;  // in [0, log n]
  double gini = 0.0;              // of all entries; 0 for uniform
  double top_mass = 0.0;          // mean share of the k largest entries per row
};

struct SparsityStats {
  std::vector<MatrixStats> spatial;   // per round (skips disabled blocks)
  std::vector<MatrixStats> temporal;  // per round
  /// Mean first-round spatial attention on ground-truth edges divided by
  /// the mean on non-edges, diagonal excluded; set when a graph is given.
  std::optional<double> true_edge_mass_ratio;
};

SparsityStats attention_stats(const AttentionRecord& record,
                              const GroundTruthGraph* graph = nullptr, int top_k = 1);

/// Writes {version, config:{T,D,K}, rounds:[{m_s, m_t}]} JSON with
/// round-trip-exact numbers. Disabled blocks export empty arrays.
void export_attention(const AttentionRecord& record, const MixerConfig& config,
                      const std::string& path);

/// Forward pass over every sample (no capture); predictions in order.
std::vector<double> predict_all(const WindowedDataset& split, const MixerParams& params,
                                const MixerConfig& config);

std::vector<double> targets_of(const WindowedDataset& split);

/// Attention averaged entrywise over every sample of a split (averages of
/// row-stochastic matrices stay row-stochastic). Returned record holds
/// leaf tensors.
AttentionRecord average_attention(const WindowedDataset& split, const MixerParams& params,
                                  const MixerConfig& config);

/// Direct autoregressive baseline: OLS of the KPI H steps ahead on its
/// most recent `order` values plus an intercept.
class ArModel {
 public:
  static ArModel fit(const std::vector<double>& kpi, int order, int horizon);

  /// Prediction from history ending at (and including) forecast origin.
  double predict(std::span<const double> history) const;

  int order() const { return order_; }
  int horizon() const { return horizon_; }
  /// weights()[0] is the intercept, weights()[k] the coefficient of lag k-1.
  const std::vector<double>& weights() const { return weights_; }

 private:
  int order_ = 0;
  int horizon_ = 1;
  std::vector<double> weights_;
};

/// Trailing-mean baseline over the last `window` KPI values.
class MaModel {
 public:
  explicit MaModel(int window);
  double predict(std::span<const double> history) const;
  int window() const { return window_; }

 private:
  int window_ = 1;
};

/// Ridge regression on flattened T x D windows: solves
/// (X^T X + alpha I) w = X^T y. alpha = 0 falls back to plain least
/// squares and reports singular systems.
class RidgeModel {
 public:
  static RidgeModel fit(const WindowedDataset& train, double alpha);
  double predict(const WindowedDataset& split, int i) const;
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
};

/// Dense symmetric solve used by the baselines; throws NumericError on a
/// (numerically) singular system.
std::vector<double> solve_linear_system(std::vector<double> a, std::vector<double> b, int n);

}  // namespace attnmixer
