#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "attnmixer/data.hpp"
#include "attnmixer/metrics.hpp"
#include "attnmixer/model.hpp"

namespace attnmixer {

/// Sliding windows over a frame: sample i covers rows [start, start+T) and
/// is labeled with the KPI at row start + T + H - 1 (the window's last
/// step plus the forecast horizon). Samples are chronologically ordered.
struct WindowedDataset {
  std::shared_ptr<const SeriesFrame> frame;
  int window = 0;   // T
  int horizon = 0;  // H
  std::vector<int> starts;

  int size() const { return static_cast<int>(starts.size()); }
  Tensor input(int i) const;    ///< T x D leaf tensor
  double target(int i) const;   ///< KPI label
  int target_row(int i) const { return starts[i] + window + horizon - 1; }
};

/// Builds all N - T - H + 1 windows. Throws DataError if the frame is too
/// short for even one sample.
WindowedDataset make_windows(const SeriesFrame& frame, int window, int horizon);
WindowedDataset make_windows(std::shared_ptr<const SeriesFrame> frame, int window, int horizon);

struct SplitRatios {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
};

struct Splits {
  WindowedDataset train, val, test;
};

/// Contiguous chronological segments: floor(n * train) samples, then
/// floor(n * val), remainder to test. No shuffling. Throws ConfigError on
/// ratios not summing to 1, DataError when a segment would be empty.
Splits chrono_split(const WindowedDataset& dataset, SplitRatios ratios = {});

/// Per-column min-max scaler fit on the training segment only (feature
/// columns and KPI over the rows touched by training windows and their
/// targets). Columns map to (x - min) / (max - min); constant columns map
/// to 0.
class Scaler {
 public:
  static Scaler fit(const WindowedDataset& train);

  SeriesFrame apply(const SeriesFrame& frame) const;
  SeriesFrame inverse(const SeriesFrame& frame) const;
  double scale_kpi(double v) const;
  double unscale_kpi(double v) const;

  const std::vector<double>& feature_min() const { return feat_min_; }
  const std::vector<double>& feature_max() const { return feat_max_; }
  double kpi_min() const { return kpi_min_; }
  double kpi_max() const { return kpi_max_; }

 private:
  std::vector<double> feat_min_, feat_max_;
  double kpi_min_ = 0.0, kpi_max_ = 0.0;
};

/// Sparsity penalty over captured attention, as a graph scalar.
/// Literal mode: sum of |entries| of every captured matrix (constant
/// K*(D+T) on row-stochastic attention, gradient-free). Entropy mode: sum
/// over matrices of the mean row entropy -sum_j p_j log(p_j + 1e-12).
Tensor smpr_loss(const AttentionRecord& record, SmprMode mode);

/// (y - yhat)^2 + lambda * smpr. target and prediction are 1x1.
Tensor total_loss(const Tensor& target, const Tensor& prediction,
                  const AttentionRecord& record, double lambda, SmprMode mode);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter moment accumulators, laid out in parameter-list order.
struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void init(const std::vector<Parameter>& params);
  bool initialized() const { return !m.empty(); }
};

/// One bias-corrected Adam update from the gradients currently stored in
/// the parameters.
void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamOptions& options);

struct TrainOptions {
  int horizon = 1;
  int max_epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int patience = 15;
  SplitRatios ratios;
};

struct TrainReport {
  std::vector<double> train_loss;  ///< mean per-sample total loss per epoch
  std::vector<double> val_mse;     ///< validation MSE per epoch (scaled space)
  int best_epoch = -1;
  int stop_epoch = -1;
  double best_val_mse = 0.0;
  Metrics test_metrics;            ///< on the test split, scaled space
  double wall_seconds = 0.0;
};

struct TrainResult {
  MixerParams params;  ///< best-validation parameters
  Scaler scaler;
  TrainReport report;
};

/// Full pipeline: window, chronologically split, min-max scale (fit on
/// train only), then minibatch Adam with per-epoch validation
/// checkpointing and early stopping after `patience` epochs without
/// improvement. Deterministic for a given config.seed. Throws TrainError
/// (with the epoch) if the loss becomes non-finite.
TrainResult train(const MixerConfig& config, const TrainOptions& options,
                  const SeriesFrame& frame);

}  // namespace attnmixer
