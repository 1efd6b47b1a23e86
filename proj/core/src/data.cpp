#include "attnmixer/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "attnmixer/rng.hpp"

namespace attnmixer {

namespace {

using nlohmann::json;

struct TimestampParts {
  int year, month, day, hour, minute, second;
  auto tie() const { return std::tie(year, month, day, hour, minute, second); }
};

TimestampParts parse_timestamp(const std::string& s, int line) {
  TimestampParts p{};
  char trailing = 0;
  const int n = std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &p.year, &p.month,
                            &p.day, &p.hour, &p.minute, &p.second, &trailing);
  if (n != 6) {
    throw DataError("line " + std::to_string(line) + ": bad timestamp '" + s +
                    "' (expected YYYY-MM-DDTHH:MM:SS)");
  }
  return p;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, int line, const std::string& column) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(v)) {
    throw DataError("line " + std::to_string(line) + ": unparsable number '" + s +
                    "' in column " + column);
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void SeriesFrame::validate() const {
  const size_t n = timestamps.size();
  const size_t d = feature_names.size();
  if (kpi.size() != n || features.size() != n * d) {
    throw DataError("frame size mismatch: " + std::to_string(n) + " timestamps, " +
                    std::to_string(kpi.size()) + " kpi values, " +
                    std::to_string(features.size()) + " feature cells for " +
                    std::to_string(d) + " columns");
  }
  std::unordered_set<std::string> names(feature_names.begin(), feature_names.end());
  if (names.size() != d) throw DataError("duplicate feature column names");
  for (double v : features) {
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }
  for (double v : kpi) {
    if (!std::isfinite(v)) throw DataError("non-finite kpi value");
  }
  for (size_t i = 1; i < n; ++i) {
    const auto prev = parse_timestamp(timestamps[i - 1], static_cast<int>(i));
    const auto cur = parse_timestamp(timestamps[i], static_cast<int>(i) + 1);
    if (!(prev.tie() < cur.tie())) {
      throw DataError("timestamps not strictly increasing at row " + std::to_string(i + 1));
    }
  }
}

SeriesFrame load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line);
  if (header.size() < 3) {
    throw DataError("header must be timestamp,<features...>,kpi; got " +
                    std::to_string(header.size()) + " columns");
  }

  SeriesFrame frame;
  frame.feature_names.assign(header.begin() + 1, header.end() - 1);
  const size_t ncols = header.size();

  int lineno = 1;
  TimestampParts prev{};
  bool have_prev = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != ncols) {
      throw DataError("line " + std::to_string(lineno) + ": expected " +
                      std::to_string(ncols) + " columns, got " + std::to_string(cells.size()));
    }
    const TimestampParts ts = parse_timestamp(cells[0], lineno);
    if (have_prev && !(prev.tie() < ts.tie())) {
      throw DataError("line " + std::to_string(lineno) +
                      ": timestamp not strictly increasing ('" + cells[0] + "')");
    }
    prev = ts;
    have_prev = true;
    frame.timestamps.push_back(cells[0]);
    for (size_t c = 1; c + 1 < ncols; ++c) {
      frame.features.push_back(parse_double(cells[c], lineno, header[c]));
    }
    frame.kpi.push_back(parse_double(cells.back(), lineno, "kpi"));
  }
  if (frame.timestamps.empty()) throw DataError("'" + path + "' has no data rows");
  return frame;
}

void save_csv(const SeriesFrame& frame, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "timestamp";
  for (const auto& name : frame.feature_names) out << ',' << name;
  out << ",kpi\n";
  const int d = frame.variates();
  for (int i = 0; i < frame.steps(); ++i) {
    out << frame.timestamps[i];
    for (int c = 0; c < d; ++c) out << ',' << format_double(frame.feature(i, c));
    out << ',' << format_double(frame.kpi[i]) << '\n';
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

bool GroundTruthGraph::has_edge(int source, int target) const {
  return std::find(edges.begin(), edges.end(), std::make_pair(source, target)) != edges.end();
}

void save_graph(const GroundTruthGraph& graph, const std::string& path) {
  json j;
  j["version"] = "attnmixer-graph-v1";
  j["variates"] = graph.variates;
  j["edges"] = json::array();
  for (const auto& [s, t] : graph.edges) j["edges"].push_back({s, t});
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

GroundTruthGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed graph file '" + path + "': " + e.what());
  }
  if (j.value("version", "") != "attnmixer-graph-v1") {
    throw DataError("graph file '" + path + "' has unsupported version");
  }
  GroundTruthGraph g;
  g.variates = j.at("variates").get<int>();
  for (const auto& e : j.at("edges")) {
    g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  }
  return g;
}

double spectral_radius(const std::vector<double>& a, int n) {
  if (static_cast<int>(a.size()) != n * n) throw DimensionError("matrix size mismatch");
  // rho(A) = lim ||A^m||^(1/m); square 40 times with normalization, which
  // evaluates m = 2^40 without overflow.
  std::vector<double> m = a;
  std::vector<double> next(static_cast<size_t>(n) * n);
  // log||A^(2^40)|| / 2^40 = sum_i 2^-i log f_i + 2^-40 log||M_40||
  // where f_i is the Frobenius norm stripped before squaring step i.
  double log_radius = 0.0;
  double scale_factor = 1.0;
  for (int iter = 0; iter < 40; ++iter) {
    double norm = 0.0;
    for (double v : m) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    log_radius += scale_factor * std::log(norm);
    scale_factor *= 0.5;
    const double inv = 1.0 / norm;
    for (auto& v : m) v *= inv;
    std::fill(next.begin(), next.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        const double mik = m[static_cast<size_t>(i) * n + k];
        if (mik == 0.0) continue;
        for (int j = 0; j < n; ++j) {
          next[static_cast<size_t>(i) * n + j] += mik * m[static_cast<size_t>(k) * n + j];
        }
      }
    }
    m.swap(next);
  }
  double norm = 0.0;
  for (double v : m) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) log_radius += scale_factor * std::log(norm);
  return std::exp(log_radius);
}

SynthSpec SynthSpec::g1() {
  // Channel layout: 0 observes the driver; 2/4/6 take the driver
  // contemporaneously; 3/5/7 sit one lag downstream and carry the KPI; 1
  // is an autonomous channel feeding 2 and 4. The KPI reads only the
  // downstream channels, so its next value is determined by upstream
  // channels that its own history reveals only indirectly.
  SynthSpec s;
  s.variates = 8;
  s.steps = 4000;
  s.coupling.assign(64, 0.0);
  const auto at = [&s](int target, int source) -> double& {
    return s.coupling[static_cast<size_t>(target) * s.variates + source];
  };
  for (int d = 1; d < 8; ++d) at(d, d) = 0.3;  // fast mean reversion
  at(2, 1) = -0.30;
  at(4, 1) = 0.30;
  at(3, 2) = -0.50;
  at(5, 4) = 0.50;
  at(7, 6) = 0.50;
  at(7, 3) = 0.25;
  s.driver_inject.assign(8, 0.0);
  s.driver_inject[0] = 1.0;  // driver observed on channel 0
  s.driver_inject[2] = 0.6;
  s.driver_inject[4] = 0.6;
  s.driver_inject[6] = 0.6;
  s.driver_rho = 0.55;
  s.shock_prob = 0.02;
  s.shock_scale = 1.5;
  s.driver_noise = 0.05;
  s.noise_sigma = 0.05;
  s.kpi_weights = {0.0, 0.0, 0.0, 0.35, 0.0, 0.35, 0.0, 0.30};
  return s;
}

void SynthSpec::validate() const {
  if (variates < 1) throw ConfigError("synthetic spec needs at least one variate");
  if (steps < 1) throw ConfigError("synthetic spec needs at least one step");
  if (coupling.size() != static_cast<size_t>(variates) * variates) {
    throw ConfigError("coupling matrix must be " + std::to_string(variates) + "x" +
                      std::to_string(variates));
  }
  if (driver_inject.size() != static_cast<size_t>(variates)) {
    throw ConfigError("driver_inject must have one entry per variate");
  }
  if (kpi_weights.size() != static_cast<size_t>(variates)) {
    throw ConfigError("kpi_weights must have one entry per variate");
  }
  if (shock_prob < 0.0 || shock_prob > 1.0) throw ConfigError("shock_prob must be in [0,1]");
  if (noise_sigma < 0.0 || driver_noise < 0.0) throw ConfigError("noise levels must be >= 0");
  if (std::fabs(driver_rho) >= 1.0) {
    throw ConfigError("driver AR coefficient must satisfy |rho| < 1");
  }
  const double radius = spectral_radius(coupling, variates);
  if (radius >= 1.0) {
    throw ConfigError("coupling matrix is unstable: spectral radius " +
                      std::to_string(radius) + " >= 1");
  }
}

GroundTruthGraph SynthSpec::ground_truth() const {
  GroundTruthGraph g;
  g.variates = variates;
  for (int t = 0; t < variates; ++t) {
    for (int s = 0; s < variates; ++s) {
      if (s != t && coupling[static_cast<size_t>(t) * variates + s] != 0.0) {
        g.edges.emplace_back(s, t);
      }
    }
  }
  for (int d = 1; d < variates; ++d) {
    if (driver_inject[d] != 0.0) g.edges.emplace_back(0, d);
  }
  return g;
}

SynthResult gen_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  constexpr int kBurnIn = 100;
  const int d = spec.variates;

  Rng rng(seed);
  std::vector<double> state(d, spec.init_value);
  std::vector<double> next(d);
  double driver = 0.0;

  SeriesFrame frame;
  frame.feature_names.reserve(d);
  for (int c = 0; c < d; ++c) frame.feature_names.push_back("v" + std::to_string(c + 1));
  frame.features.reserve(static_cast<size_t>(spec.steps) * d);
  frame.kpi.reserve(spec.steps);
  frame.timestamps.reserve(spec.steps);

  // Fixed 5-minute sampling grid starting 2020-01-01T00:00:00.
  const auto timestamp_at = [](long step) {
    const long total_minutes = step * 5;
    const long minutes_per_day = 24 * 60;
    long day = total_minutes / minutes_per_day;
    const long rem = total_minutes % minutes_per_day;
    // Day counting keeps months at bay: roll through a synthetic calendar
    // of 30-day months, 12-month years; only ordering matters.
    const long year = 2020 + day / 360;
    day %= 360;
    const long month = 1 + day / 30;
    const long dom = 1 + day % 30;
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%04ld-%02ld-%02ldT%02ld:%02ld:00", year, month, dom,
                  rem / 60, rem % 60);
    return std::string(buf);
  };

  for (int step = 0; step < kBurnIn + spec.steps; ++step) {
    const double shock = rng.bernoulli(spec.shock_prob) ? spec.shock_scale : 0.0;
    driver = spec.driver_rho * driver + shock + spec.driver_noise * rng.normal();
    for (int t = 0; t < d; ++t) {
      double v = spec.driver_inject[t] * driver + spec.noise_sigma * rng.normal();
      const double* row = spec.coupling.data() + static_cast<size_t>(t) * d;
      for (int s = 0; s < d; ++s) v += row[s] * state[s];
      next[t] = v;
    }
    state.swap(next);
    for (double v : state) {
      if (!std::isfinite(v) || std::fabs(v) > 1e6) {
        throw DataError("synthetic system left the stable range at step " +
                        std::to_string(step));
      }
    }
    if (step >= kBurnIn) {
      const int rec = step - kBurnIn;
      frame.timestamps.push_back(timestamp_at(rec));
      frame.features.insert(frame.features.end(), state.begin(), state.end());
      double y = 0.0;
      for (int c = 0; c < d; ++c) y += spec.kpi_weights[c] * state[c];
      frame.kpi.push_back(y);
    }
  }
  return {std::move(frame), spec.ground_truth()};
}

}  // namespace attnmixer
