#include "attnmixer/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "attnmixer/rng.hpp"

namespace attnmixer {

Tensor WindowedDataset::input(int i) const {
  const int d = frame->variates();
  const int start = starts[i];
  std::vector<double> v(static_cast<size_t>(window) * d);
  std::copy_n(frame->features.data() + static_cast<size_t>(start) * d, v.size(), v.data());
  return Tensor(window, d, std::move(v));
}

double WindowedDataset::target(int i) const { return frame->kpi[target_row(i)]; }

WindowedDataset make_windows(std::shared_ptr<const SeriesFrame> frame, int window, int horizon) {
  if (window < 1) throw ConfigError("window must be >= 1");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  const int n = frame->steps();
  const int count = n - window - horizon + 1;
  if (count < 1) {
    throw DataError("frame with " + std::to_string(n) + " steps is too short for window " +
                    std::to_string(window) + " and horizon " + std::to_string(horizon));
  }
  WindowedDataset ds;
  ds.frame = std::move(frame);
  ds.window = window;
  ds.horizon = horizon;
  ds.starts.resize(count);
  for (int i = 0; i < count; ++i) ds.starts[i] = i;
  return ds;
}

WindowedDataset make_windows(const SeriesFrame& frame, int window, int horizon) {
  return make_windows(std::make_shared<SeriesFrame>(frame), window, horizon);
}

Splits chrono_split(const WindowedDataset& dataset, SplitRatios ratios) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
  }
  const int n = dataset.size();
  const int n_train = static_cast<int>(std::floor(n * ratios.train));
  const int n_val = static_cast<int>(std::floor(n * ratios.val));
  const int n_test = n - n_train - n_val;
  if (n_train < 1 || n_val < 1 || n_test < 1) {
    throw DataError("split of " + std::to_string(n) + " samples produces an empty segment (" +
                    std::to_string(n_train) + "/" + std::to_string(n_val) + "/" +
                    std::to_string(n_test) + ")");
  }
  const auto segment = [&dataset](int begin, int count) {
    WindowedDataset part;
    part.frame = dataset.frame;
    part.window = dataset.window;
    part.horizon = dataset.horizon;
    part.starts.assign(dataset.starts.begin() + begin, dataset.starts.begin() + begin + count);
    return part;
  };
  return {segment(0, n_train), segment(n_train, n_val), segment(n_train + n_val, n_test)};
}

namespace {

double scale_value(double v, double lo, double hi) {
  return hi > lo ? (v - lo) / (hi - lo) : 0.0;
}

double unscale_value(double v, double lo, double hi) {
  return hi > lo ? v * (hi - lo) + lo : lo;
}

}  // namespace

Scaler Scaler::fit(const WindowedDataset& train) {
  if (train.size() == 0) throw DataError("cannot fit scaler on an empty split");
  const auto& frame = *train.frame;
  const int d = frame.variates();
  // Rows covered by the training segment: every window row plus every
  // target row. Later splits contribute nothing.
  const int first_row = train.starts.front();
  const int last_row = train.starts.back() + train.window + train.horizon - 1;

  Scaler s;
  s.feat_min_.assign(d, std::numeric_limits<double>::infinity());
  s.feat_max_.assign(d, -std::numeric_limits<double>::infinity());
  s.kpi_min_ = std::numeric_limits<double>::infinity();
  s.kpi_max_ = -std::numeric_limits<double>::infinity();
  for (int row = first_row; row <= last_row; ++row) {
    for (int c = 0; c < d; ++c) {
      const double v = frame.feature(row, c);
      s.feat_min_[c] = std::min(s.feat_min_[c], v);
      s.feat_max_[c] = std::max(s.feat_max_[c], v);
    }
    s.kpi_min_ = std::min(s.kpi_min_, frame.kpi[row]);
    s.kpi_max_ = std::max(s.kpi_max_, frame.kpi[row]);
  }
  return s;
}

SeriesFrame Scaler::apply(const SeriesFrame& frame) const {
  const int d = frame.variates();
  if (static_cast<size_t>(d) != feat_min_.size()) {
    throw DimensionError("scaler fit on " + std::to_string(feat_min_.size()) +
                         " columns, frame has " + std::to_string(d));
  }
  SeriesFrame out = frame;
  for (int row = 0; row < frame.steps(); ++row) {
    for (int c = 0; c < d; ++c) {
      out.features[static_cast<size_t>(row) * d + c] =
          scale_value(frame.feature(row, c), feat_min_[c], feat_max_[c]);
    }
    out.kpi[row] = scale_value(frame.kpi[row], kpi_min_, kpi_max_);
  }
  return out;
}

SeriesFrame Scaler::inverse(const SeriesFrame& frame) const {
  const int d = frame.variates();
  if (static_cast<size_t>(d) != feat_min_.size()) {
    throw DimensionError("scaler fit on " + std::to_string(feat_min_.size()) +
                         " columns, frame has " + std::to_string(d));
  }
  SeriesFrame out = frame;
  for (int row = 0; row < frame.steps(); ++row) {
    for (int c = 0; c < d; ++c) {
      out.features[static_cast<size_t>(row) * d + c] =
          unscale_value(frame.feature(row, c), feat_min_[c], feat_max_[c]);
    }
    out.kpi[row] = unscale_value(frame.kpi[row], kpi_min_, kpi_max_);
  }
  return out;
}

double Scaler::scale_kpi(double v) const { return scale_value(v, kpi_min_, kpi_max_); }
double Scaler::unscale_kpi(double v) const { return unscale_value(v, kpi_min_, kpi_max_); }

Tensor smpr_loss(const AttentionRecord& record, SmprMode mode) {
  if (record.empty()) throw ConfigError("smpr_loss needs a captured attention record");
  Tensor acc;
  const auto add_matrix = [&acc, mode](const Tensor& m) {
    if (!m.defined()) return;
    Tensor term;
    if (mode == SmprMode::kLiteral) {
      term = sum(abs_t(m));
    } else {
      // mean row entropy: -sum_ij p log(p + 1e-12) / rows
      Tensor ent = neg(sum(mul(m, log_t(add_scalar(m, 1e-12)))));
      term = scale(ent, 1.0 / m.rows());
    }
    acc = acc.defined() ? add(acc, term) : term;
  };
  for (const auto& round : record.rounds) {
    add_matrix(round.spatial);
    add_matrix(round.temporal);
  }
  if (!acc.defined()) throw ConfigError("attention record has no captured matrices");
  return acc;
}

Tensor total_loss(const Tensor& target, const Tensor& prediction,
                  const AttentionRecord& record, double lambda, SmprMode mode) {
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  Tensor err = square(sub(target, prediction));
  if (lambda == 0.0) return err;
  return add(err, scale(smpr_loss(record, mode), lambda));
}

void AdamState::init(const std::vector<Parameter>& params) {
  step = 0;
  m.clear();
  v.clear();
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.emplace_back(p.tensor.values().size(), 0.0);
    v.emplace_back(p.tensor.values().size(), 0.0);
  }
}

void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamOptions& options) {
  if (!state.initialized()) state.init(params);
  if (state.m.size() != params.size()) {
    throw ConfigError("adam state tracks " + std::to_string(state.m.size()) +
                      " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double bias1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& values = params[i].tensor.mutable_values();
    const auto& grad = params[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t j = 0; j < values.size(); ++j) {
      const double g = grad[j];
      m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * g;
      v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * g * g;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      values[j] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

namespace {

double validation_mse(const WindowedDataset& split, const MixerParams& params,
                      const MixerConfig& config) {
  double acc = 0.0;
  for (int i = 0; i < split.size(); ++i) {
    const double pred = mixer_forward(split.input(i), params, config, false).prediction.value();
    const double err = split.target(i) - pred;
    acc += err * err;
  }
  return acc / split.size();
}

std::vector<std::vector<double>> snapshot_values(const std::vector<Parameter>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor.values());
  return out;
}

void restore_values(std::vector<Parameter>& params,
                    const std::vector<std::vector<double>>& snap) {
  for (size_t i = 0; i < params.size(); ++i) params[i].tensor.mutable_values() = snap[i];
}

}  // namespace

TrainResult train(const MixerConfig& config, const TrainOptions& options,
                  const SeriesFrame& frame) {
  config.validate();
  if (options.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (options.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (options.patience < 0) throw ConfigError("patience must be >= 0");
  if (frame.variates() != config.variates) {
    throw ConfigError("config expects " + std::to_string(config.variates) +
                      " variates, frame has " + std::to_string(frame.variates()));
  }
  const auto t0 = std::chrono::steady_clock::now();

  // Window before scaling so the scaler sees only training rows.
  auto raw_windows = make_windows(frame, config.window, options.horizon);
  auto raw_splits = chrono_split(raw_windows, options.ratios);
  Scaler scaler = Scaler::fit(raw_splits.train);
  auto scaled = std::make_shared<SeriesFrame>(scaler.apply(frame));
  auto splits = chrono_split(make_windows(scaled, config.window, options.horizon),
                             options.ratios);

  MixerParams params = init_params(config);
  auto param_list = params.parameters();
  AdamState adam;
  adam.init(param_list);
  const AdamOptions adam_options{options.learning_rate};
  const bool capture = config.lambda > 0.0;

  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<int> order(splits.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  TrainReport report;
  report.best_val_mse = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_values = snapshot_values(param_list);

  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    // Fisher-Yates with the seeded stream; deterministic epoch order.
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.below(i + 1)]);
    }
    double epoch_loss = 0.0;
    for (size_t begin = 0; begin < order.size(); begin += options.batch_size) {
      const size_t end = std::min(order.size(), begin + options.batch_size);
      const double batch_n = static_cast<double>(end - begin);
      for (auto& p : param_list) p.tensor.zero_grad();
      double batch_loss = 0.0;
      for (size_t i = begin; i < end; ++i) {
        const int sample = order[i];
        MixerOutput out = mixer_forward(splits.train.input(sample), params, config, capture);
        Tensor loss = total_loss(Tensor::scalar(splits.train.target(sample)), out.prediction,
                                 out.record, config.lambda, config.smpr_mode);
        batch_loss += loss.value();
        backward(loss);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainError("training diverged at epoch " + std::to_string(epoch));
      }
      // Mean-over-batch loss: scale accumulated gradients by 1/batch.
      for (auto& p : param_list) {
        for (auto& g : p.tensor.mutable_grad()) g /= batch_n;
      }
      adam_step(param_list, adam, adam_options);
      epoch_loss += batch_loss;
    }
    report.train_loss.push_back(epoch_loss / splits.train.size());
    const double val = validation_mse(splits.val, params, config);
    if (!std::isfinite(val)) {
      throw TrainError("validation diverged at epoch " + std::to_string(epoch));
    }
    report.val_mse.push_back(val);
    report.stop_epoch = epoch;
    if (val < report.best_val_mse) {
      report.best_val_mse = val;
      report.best_epoch = epoch;
      best_values = snapshot_values(param_list);
    } else if (epoch - report.best_epoch >= options.patience) {
      break;
    }
  }
  restore_values(param_list, best_values);

  std::vector<double> actual, predicted;
  actual.reserve(splits.test.size());
  predicted.reserve(splits.test.size());
  for (int i = 0; i < splits.test.size(); ++i) {
    actual.push_back(splits.test.target(i));
    predicted.push_back(mixer_forward(splits.test.input(i), params, config, false)
                            .prediction.value());
  }
  report.test_metrics = compute_metrics(actual, predicted);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(params), std::move(scaler), std::move(report)};
}

}  // namespace attnmixer
