#include "attnmixer/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace attnmixer {

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  if (q <= 0.0 || q >= 1.0) throw ConfigError("quantile must be in (0,1)");
  std::sort(values.begin(), values.end());
  const double pos = q * (static_cast<double>(values.size()) - 1.0);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

AnomalyVerdict anomaly_score(const std::vector<double>& actual,
                             const std::vector<double>& forecast,
                             const std::vector<double>& calibration_residuals,
                             double quantile) {
  if (actual.size() != forecast.size()) {
    throw DimensionError("anomaly_score input lengths differ");
  }
  AnomalyVerdict verdict;
  verdict.threshold = empirical_quantile(calibration_residuals, quantile);
  verdict.residuals.reserve(actual.size());
  verdict.flags.reserve(actual.size());
  for (size_t i = 0; i < actual.size(); ++i) {
    const double r = std::fabs(actual[i] - forecast[i]);
    verdict.residuals.push_back(r);
    verdict.flags.push_back(r > verdict.threshold);
  }
  return verdict;
}

namespace {

MatrixStats matrix_stats(const Tensor& m, int top_k) {
  const int rows = m.rows(), cols = m.cols();
  MatrixStats stats;
  double entropy_sum = 0.0, top_sum = 0.0;
  std::vector<double> row(cols);
  for (int i = 0; i < rows; ++i) {
    double ent = 0.0, row_sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double p = m(i, j);
      row[j] = p;
      if (p > 0.0) ent -= p * std::log(p);
      row_sum += p;
    }
    entropy_sum += ent;
    const int k = std::min(top_k, cols);
    std::partial_sort(row.begin(), row.begin() + k, row.end(), std::greater<>());
    double mass = 0.0;
    for (int j = 0; j < k; ++j) mass += row[j];
    top_sum += row_sum > 0.0 ? mass / row_sum : 0.0;
  }
  stats.mean_row_entropy = entropy_sum / rows;
  stats.top_mass = top_sum / rows;

  // Gini over all entries: sort ascending, G = sum_i (2i - n - 1) x_i / (n sum x).
  std::vector<double> flat = m.values();
  std::sort(flat.begin(), flat.end());
  const double n = static_cast<double>(flat.size());
  double total = 0.0, weighted = 0.0;
  for (size_t i = 0; i < flat.size(); ++i) {
    total += flat[i];
    weighted += (2.0 * (static_cast<double>(i) + 1.0) - n - 1.0) * flat[i];
  }
  stats.gini = total > 0.0 ? weighted / (n * total) : 0.0;
  return stats;
}

}  // namespace

SparsityStats attention_stats(const AttentionRecord& record, const GroundTruthGraph* graph,
                              int top_k) {
  if (record.empty()) throw DataError("attention_stats needs a captured record");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  SparsityStats stats;
  for (const auto& round : record.rounds) {
    if (round.spatial.defined()) stats.spatial.push_back(matrix_stats(round.spatial, top_k));
    if (round.temporal.defined()) stats.temporal.push_back(matrix_stats(round.temporal, top_k));
  }
  if (graph != nullptr) {
    const Tensor* first_spatial = nullptr;
    for (const auto& round : record.rounds) {
      if (round.spatial.defined()) {
        first_spatial = &round.spatial;
        break;
      }
    }
    if (first_spatial == nullptr) {
      throw DataError("no spatial attention captured for edge statistics");
    }
    const Tensor& m = *first_spatial;
    if (m.rows() != graph->variates) {
      throw DimensionError("graph has " + std::to_string(graph->variates) +
                           " variates, attention is " + std::to_string(m.rows()) + "x" +
                           std::to_string(m.cols()));
    }
    // Attention entry [t, s] is node t's weight on node s, so an edge
    // s -> t should light up m(t, s). Self-loops are excluded.
    double edge_sum = 0.0, non_sum = 0.0;
    int edge_n = 0, non_n = 0;
    for (int t = 0; t < m.rows(); ++t) {
      for (int s = 0; s < m.cols(); ++s) {
        if (s == t) continue;
        if (graph->has_edge(s, t)) {
          edge_sum += m(t, s);
          ++edge_n;
        } else {
          non_sum += m(t, s);
          ++non_n;
        }
      }
    }
    if (edge_n > 0 && non_n > 0 && non_sum > 0.0) {
      stats.true_edge_mass_ratio = (edge_sum / edge_n) / (non_sum / non_n);
    }
  }
  return stats;
}

namespace {

nlohmann::json matrix_json(const Tensor& m) {
  nlohmann::json rows = nlohmann::json::array();
  if (!m.defined()) return rows;
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void export_attention(const AttentionRecord& record, const MixerConfig& config,
                      const std::string& path) {
  if (record.empty()) throw DataError("cannot export an empty attention record");
  nlohmann::json j;
  j["version"] = "attnmixer-attn-v1";
  j["config"] = {{"T", config.window}, {"D", config.variates}, {"K", config.rounds}};
  j["rounds"] = nlohmann::json::array();
  for (const auto& round : record.rounds) {
    j["rounds"].push_back({{"m_s", matrix_json(round.spatial)},
                           {"m_t", matrix_json(round.temporal)}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::vector<double> predict_all(const WindowedDataset& split, const MixerParams& params,
                                const MixerConfig& config) {
  std::vector<double> out;
  out.reserve(split.size());
  for (int i = 0; i < split.size(); ++i) {
    out.push_back(mixer_forward(split.input(i), params, config, false).prediction.value());
  }
  return out;
}

std::vector<double> targets_of(const WindowedDataset& split) {
  std::vector<double> out;
  out.reserve(split.size());
  for (int i = 0; i < split.size(); ++i) out.push_back(split.target(i));
  return out;
}

AttentionRecord average_attention(const WindowedDataset& split, const MixerParams& params,
                                  const MixerConfig& config) {
  if (split.size() == 0) throw DataError("cannot average attention over an empty split");
  std::vector<AttentionRound> acc(config.rounds);
  std::vector<std::vector<double>> spatial_sum(config.rounds), temporal_sum(config.rounds);
  for (int i = 0; i < split.size(); ++i) {
    MixerOutput out = mixer_forward(split.input(i), params, config, true);
    for (int k = 0; k < config.rounds; ++k) {
      const auto& round = out.record.rounds[k];
      if (round.spatial.defined()) {
        auto& s = spatial_sum[k];
        if (s.empty()) s.assign(round.spatial.values().size(), 0.0);
        for (size_t j = 0; j < s.size(); ++j) s[j] += round.spatial.values()[j];
      }
      if (round.temporal.defined()) {
        auto& s = temporal_sum[k];
        if (s.empty()) s.assign(round.temporal.values().size(), 0.0);
        for (size_t j = 0; j < s.size(); ++j) s[j] += round.temporal.values()[j];
      }
    }
  }
  AttentionRecord record;
  const double inv = 1.0 / split.size();
  for (int k = 0; k < config.rounds; ++k) {
    AttentionRound round;
    if (!spatial_sum[k].empty()) {
      for (auto& v : spatial_sum[k]) v *= inv;
      round.spatial = Tensor(config.variates, config.variates, std::move(spatial_sum[k]));
    }
    if (!temporal_sum[k].empty()) {
      for (auto& v : temporal_sum[k]) v *= inv;
      round.temporal = Tensor(config.window, config.window, std::move(temporal_sum[k]));
    }
    record.rounds.push_back(std::move(round));
  }
  return record;
}

std::vector<double> solve_linear_system(std::vector<double> a, std::vector<double> b, int n) {
  // Gaussian elimination with partial pivoting.
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    double best = std::fabs(a[static_cast<size_t>(col) * n + col]);
    for (int r = col + 1; r < n; ++r) {
      const double v = std::fabs(a[static_cast<size_t>(r) * n + col]);
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (best < 1e-12) throw NumericError("singular linear system (pivot " +
                                         std::to_string(best) + " at column " +
                                         std::to_string(col) + ")");
    if (pivot != col) {
      for (int c = 0; c < n; ++c) {
        std::swap(a[static_cast<size_t>(col) * n + c], a[static_cast<size_t>(pivot) * n + c]);
      }
      std::swap(b[col], b[pivot]);
    }
    const double diag = a[static_cast<size_t>(col) * n + col];
    for (int r = col + 1; r < n; ++r) {
      const double factor = a[static_cast<size_t>(r) * n + col] / diag;
      if (factor == 0.0) continue;
      for (int c = col; c < n; ++c) {
        a[static_cast<size_t>(r) * n + c] -= factor * a[static_cast<size_t>(col) * n + c];
      }
      b[r] -= factor * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= a[static_cast<size_t>(r) * n + c] * x[c];
    x[r] = acc / a[static_cast<size_t>(r) * n + r];
  }
  return x;
}

ArModel ArModel::fit(const std::vector<double>& kpi, int order, int horizon) {
  if (order < 1) throw ConfigError("AR order must be >= 1");
  if (horizon < 1) throw ConfigError("AR horizon must be >= 1");
  const int n = static_cast<int>(kpi.size());
  const int first_target = order - 1 + horizon;  // origin needs `order` lags
  const int rows = n - first_target;
  if (rows < order + 1) {
    throw DataError("not enough history to fit AR(" + std::to_string(order) + ")");
  }
  const int dim = order + 1;  // intercept + lags
  std::vector<double> xtx(static_cast<size_t>(dim) * dim, 0.0);
  std::vector<double> xty(dim, 0.0);
  std::vector<double> row(dim);
  for (int t = first_target; t < n; ++t) {
    row[0] = 1.0;
    const int origin = t - horizon;
    for (int k = 0; k < order; ++k) row[k + 1] = kpi[origin - k];
    const double y = kpi[t];
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) xtx[static_cast<size_t>(i) * dim + j] += row[i] * row[j];
      xty[i] += row[i] * y;
    }
  }
  ArModel model;
  model.order_ = order;
  model.horizon_ = horizon;
  model.weights_ = solve_linear_system(std::move(xtx), std::move(xty), dim);
  return model;
}

double ArModel::predict(std::span<const double> history) const {
  if (static_cast<int>(history.size()) < order_) {
    throw DataError("AR prediction needs " + std::to_string(order_) + " history values");
  }
  double y = weights_[0];
  for (int k = 0; k < order_; ++k) {
    y += weights_[k + 1] * history[history.size() - 1 - k];
  }
  return y;
}

MaModel::MaModel(int window) : window_(window) {
  if (window < 1) throw ConfigError("MA window must be >= 1");
}

double MaModel::predict(std::span<const double> history) const {
  if (static_cast<int>(history.size()) < window_) {
    throw DataError("MA prediction needs " + std::to_string(window_) + " history values");
  }
  double acc = 0.0;
  for (int k = 0; k < window_; ++k) acc += history[history.size() - 1 - k];
  return acc / window_;
}

RidgeModel RidgeModel::fit(const WindowedDataset& train, double alpha) {
  if (alpha < 0.0) throw ConfigError("ridge alpha must be >= 0");
  const int n = train.size();
  if (n < 1) throw DataError("ridge needs a non-empty training split");
  const int dim = train.window * train.frame->variates();
  std::vector<double> xtx(static_cast<size_t>(dim) * dim, 0.0);
  std::vector<double> xty(dim, 0.0);
  for (int i = 0; i < n; ++i) {
    const Tensor x = train.input(i);
    const auto& flat = x.values();
    const double y = train.target(i);
    for (int a = 0; a < dim; ++a) {
      const double va = flat[a];
      if (va == 0.0) continue;
      for (int b = 0; b < dim; ++b) xtx[static_cast<size_t>(a) * dim + b] += va * flat[b];
      xty[a] += va * y;
    }
  }
  for (int a = 0; a < dim; ++a) xtx[static_cast<size_t>(a) * dim + a] += alpha;
  RidgeModel model;
  model.weights_ = solve_linear_system(std::move(xtx), std::move(xty), dim);
  return model;
}

double RidgeModel::predict(const WindowedDataset& split, int i) const {
  const Tensor x = split.input(i);
  const auto& flat = x.values();
  if (flat.size() != weights_.size()) {
    throw DimensionError("ridge fit on " + std::to_string(weights_.size()) +
                         " inputs, sample has " + std::to_string(flat.size()));
  }
  double y = 0.0;
  for (size_t j = 0; j < flat.size(); ++j) y += weights_[j] * flat[j];
  return y;
}

}  // namespace attnmixer
