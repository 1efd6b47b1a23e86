#include "attnmixer/model.hpp"

#include <cmath>

#include "attnmixer/rng.hpp"

namespace attnmixer {

std::string to_string(SmprMode mode) {
  return mode == SmprMode::kLiteral ? "literal" : "entropy";
}

SmprMode smpr_mode_from_string(const std::string& s) {
  if (s == "literal") return SmprMode::kLiteral;
  if (s == "entropy") return SmprMode::kEntropy;
  throw ConfigError("unknown smpr mode '" + s + "' (expected literal or entropy)");
}

void MixerConfig::validate() const {
  if (window < 2) throw ConfigError("window must be >= 2, got " + std::to_string(window));
  if (variates < 2) throw ConfigError("variates must be >= 2, got " + std::to_string(variates));
  if (rounds < 1) throw ConfigError("rounds must be >= 1, got " + std::to_string(rounds));
  if (gru_hidden < 1) throw ConfigError("gru_hidden must be >= 1");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0, got " + std::to_string(lambda));
}

namespace {

Tensor uniform_init(Rng& rng, int rows, int cols, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(rows, cols);
  auto& v = t.mutable_values();
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return t;
}

AffineParams init_affine(Rng& rng, int d_in, int d_out) {
  return {uniform_init(rng, d_in, d_out, d_in), Tensor(1, d_out)};
}

BlockParams init_block(Rng& rng, int dim, bool tie_qk) {
  BlockParams b;
  b.query = init_affine(rng, dim, dim);
  b.key = tie_qk ? b.query : init_affine(rng, dim, dim);
  b.value = init_affine(rng, dim, dim);
  b.norm_gain = Tensor::constant(1, dim, 1.0);
  b.norm_bias = Tensor(1, dim);
  return b;
}

GruGate init_gate(Rng& rng, int input_dim, int hidden) {
  return {uniform_init(rng, input_dim, hidden, input_dim),
          uniform_init(rng, hidden, hidden, hidden), Tensor(1, hidden)};
}

void push_block(std::vector<Parameter>& out, const std::string& prefix,
                BlockParams& b, bool tie_qk) {
  out.push_back({prefix + ".q.weight", b.query.weight});
  out.push_back({prefix + ".q.bias", b.query.bias});
  if (!tie_qk) {
    out.push_back({prefix + ".k.weight", b.key.weight});
    out.push_back({prefix + ".k.bias", b.key.bias});
  }
  out.push_back({prefix + ".v.weight", b.value.weight});
  out.push_back({prefix + ".v.bias", b.value.bias});
  out.push_back({prefix + ".norm.gain", b.norm_gain});
  out.push_back({prefix + ".norm.bias", b.norm_bias});
}

}  // namespace

std::vector<Parameter> MixerParams::parameters() {
  std::vector<Parameter> out;
  for (size_t k = 0; k < samp.size(); ++k) {
    push_block(out, "samp." + std::to_string(k), samp[k], tie_qk);
  }
  for (size_t k = 0; k < tamp.size(); ++k) {
    push_block(out, "tamp." + std::to_string(k), tamp[k], tie_qk);
  }
  const auto push_gate = [&out](const std::string& name, GruGate& g) {
    out.push_back({"gru." + name + ".w", g.input_weight});
    out.push_back({"gru." + name + ".u", g.hidden_weight});
    out.push_back({"gru." + name + ".b", g.bias});
  };
  push_gate("update", gru.update);
  push_gate("reset", gru.reset);
  push_gate("cand", gru.candidate);
  out.push_back({"head.weight", head.weight});
  out.push_back({"head.bias", head.bias});
  return out;
}

MixerParams init_params(const MixerConfig& config) {
  config.validate();
  Rng rng(config.seed);
  MixerParams p;
  p.tie_qk = config.tie_qk;
  p.samp.reserve(config.rounds);
  p.tamp.reserve(config.rounds);
  for (int k = 0; k < config.rounds; ++k) {
    p.samp.push_back(init_block(rng, config.window, config.tie_qk));
  }
  for (int k = 0; k < config.rounds; ++k) {
    p.tamp.push_back(init_block(rng, config.variates, config.tie_qk));
  }
  p.gru.update = init_gate(rng, config.variates, config.gru_hidden);
  p.gru.reset = init_gate(rng, config.variates, config.gru_hidden);
  p.gru.candidate = init_gate(rng, config.variates, config.gru_hidden);
  p.head = init_affine(rng, config.gru_hidden, 1);
  return p;
}

namespace {

BlockOutput block_forward(const Tensor& state_in, const BlockParams& params,
                          double attn_scale) {
  Tensor q = affine(state_in, params.query.weight, params.query.bias);
  Tensor k = affine(state_in, params.key.weight, params.key.bias);
  Tensor v = affine(state_in, params.value.weight, params.value.bias);
  Tensor logits = scale(matmul(q, transpose(k)), 1.0 / attn_scale);
  Tensor attention = softmax_rows(logits);
  Tensor incoming = matmul(attention, v);
  Tensor state = layer_norm(add(state_in, incoming), params.norm_gain,
                            params.norm_bias, kLayerNormEps);
  return {state, attention, logits};
}

}  // namespace

BlockOutput samp_forward(const Tensor& state_in, const BlockParams& params,
                         double attn_scale) {
  return block_forward(state_in, params, attn_scale);
}

BlockOutput tamp_forward(const Tensor& state_in, const BlockParams& params,
                         double attn_scale) {
  return block_forward(state_in, params, attn_scale);
}

Tensor gru_decode(const Tensor& sequence, const GruParams& gru, const AffineParams& head) {
  const int steps = sequence.rows();
  const int hidden = gru.update.hidden_weight.rows();
  Tensor h(1, hidden);  // zero initial state
  for (int t = 0; t < steps; ++t) {
    Tensor x = slice_row(sequence, t);
    Tensor z = sigmoid(add(add(matmul(x, gru.update.input_weight),
                               matmul(h, gru.update.hidden_weight)),
                           gru.update.bias));
    Tensor r = sigmoid(add(add(matmul(x, gru.reset.input_weight),
                               matmul(h, gru.reset.hidden_weight)),
                           gru.reset.bias));
    Tensor cand = tanh_t(add(add(matmul(x, gru.candidate.input_weight),
                                 matmul(mul(r, h), gru.candidate.hidden_weight)),
                             gru.candidate.bias));
    // h' = (1-z) o h + z o cand
    h = add(h, mul(z, sub(cand, h)));
  }
  return affine(h, head.weight, head.bias);
}

MixerOutput mixer_forward(const Tensor& input, const MixerParams& params,
                          const MixerConfig& config, bool capture) {
  config.validate();
  if (input.rows() != config.window || input.cols() != config.variates) {
    throw DimensionError("mixer input must be " + std::to_string(config.window) + "x" +
                         std::to_string(config.variates) + ", got " +
                         std::to_string(input.rows()) + "x" + std::to_string(input.cols()));
  }
  if (static_cast<int>(params.samp.size()) != config.rounds ||
      static_cast<int>(params.tamp.size()) != config.rounds) {
    throw ConfigError("parameter set has " + std::to_string(params.samp.size()) +
                      " rounds, config wants " + std::to_string(config.rounds));
  }
  const double samp_scale = std::sqrt(static_cast<double>(config.window));
  const double tamp_scale = std::sqrt(static_cast<double>(config.variates));

  MixerOutput out;
  Tensor spatial = transpose(input);  // D x T
  Tensor temporal;
  for (int k = 0; k < config.rounds; ++k) {
    AttentionRound round;
    if (!config.disable_samp) {
      BlockOutput b = samp_forward(spatial, params.samp[k], samp_scale);
      spatial = b.state;
      round.spatial = b.attention;
      round.spatial_logits = b.logits;
    }
    temporal = transpose(spatial);  // T x D
    if (!config.disable_tamp) {
      BlockOutput b = tamp_forward(temporal, params.tamp[k], tamp_scale);
      temporal = b.state;
      round.temporal = b.attention;
      round.temporal_logits = b.logits;
    }
    if (k + 1 < config.rounds) spatial = transpose(temporal);
    if (capture) out.record.rounds.push_back(std::move(round));
  }
  out.prediction = gru_decode(temporal, params.gru, params.head);
  return out;
}

FlopReport count_flops(const MixerConfig& config) {
  config.validate();
  const std::uint64_t t = config.window;
  const std::uint64_t d = config.variates;
  const std::uint64_t k = config.rounds;
  const std::uint64_t h = config.gru_hidden;
  FlopReport report;
  if (!config.disable_samp) report.samp = k * (6 * d * t * t + 4 * t * d * d);
  if (!config.disable_tamp) report.tamp = k * (6 * t * d * d + 4 * d * t * t);
  report.decoder = t * (6 * d * h + 6 * h * h) + 2 * h;
  report.total = report.samp + report.tamp + report.decoder;
  return report;
}

}  // namespace attnmixer
