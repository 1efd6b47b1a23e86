#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnmixer/tensor.hpp"

namespace attnmixer {

/// Penalty applied to the captured attention matrices during training.
/// kLiteral sums absolute attention entries; on row-stochastic matrices
/// this is the constant K*(D+T) and carries no gradient. kEntropy sums
/// mean row entropies, which shrinks as rows concentrate, so minimizing
/// it drives attention toward sparse (near one-hot) rows.
enum class SmprMode { kLiteral, kEntropy };

std::string to_string(SmprMode mode);
SmprMode smpr_mode_from_string(const std::string& s);

inline constexpr double kLayerNormEps = 1e-5;

/// Structural hyperparameters and ablation switches of the mixer.
struct MixerConfig {
  int window = 16;    ///< T: time steps per input window
  int variates = 8;   ///< D: input channels
  int rounds = 2;     ///< K: message-passing rounds
  int gru_hidden = 32;
  SmprMode smpr_mode = SmprMode::kEntropy;
  double lambda = 1e-3;  ///< regularizer strength; 0 disables
  bool tie_qk = false;   ///< share query/key maps (undirected attention)
  bool disable_samp = false;
  bool disable_tamp = false;
  std::uint64_t seed = 0;

  void validate() const;  ///< throws ConfigError on invalid combinations
};

struct AffineParams {
  Tensor weight;
  Tensor bias;
};

/// Parameters of one attention block (either spatial or temporal).
struct BlockParams {
  AffineParams query, key, value;
  Tensor norm_gain, norm_bias;
};

struct GruGate {
  Tensor input_weight;   // input_dim x hidden
  Tensor hidden_weight;  // hidden x hidden
  Tensor bias;           // 1 x hidden
};

struct GruParams {
  GruGate update, reset, candidate;
};

/// All learnable weights. When tie_qk is set, each block's key shares the
/// query's tensors (same graph nodes), so they receive one accumulated
/// gradient and one optimizer update.
struct MixerParams {
  std::vector<BlockParams> samp;  // one per round; spatial maps are TxT
  std::vector<BlockParams> tamp;  // one per round; temporal maps are DxD
  GruParams gru;
  AffineParams head;  // gru_hidden -> 1
  bool tie_qk = false;

  /// Named parameters in a fixed order (tied keys are not repeated).
  std::vector<Parameter> parameters();
};

/// Seeded initialization: weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)],
/// biases 0, layer-norm gain 1 / bias 0.
MixerParams init_params(const MixerConfig& config);

struct BlockOutput {
  Tensor state;      ///< same shape as the block input
  Tensor attention;  ///< row-stochastic n x n
  Tensor logits;     ///< pre-softmax scores n x n
};

/// One round of spatial message passing over a D x T state (variates as
/// nodes). attn_scale is the square root of the inner-product dimension,
/// sqrt(T) here.
BlockOutput samp_forward(const Tensor& state_in, const BlockParams& params, double attn_scale);

/// One round of temporal message passing over a T x D state (steps as
/// nodes); attn_scale = sqrt(D).
BlockOutput tamp_forward(const Tensor& state_in, const BlockParams& params, double attn_scale);

/// GRU over the rows of a T x D sequence, zero initial hidden state,
/// followed by the scalar output head on the last hidden state.
Tensor gru_decode(const Tensor& sequence, const GruParams& gru, const AffineParams& head);

/// Attention matrices captured during one forward pass. Tensors of a
/// disabled block are left undefined.
struct AttentionRound {
  Tensor spatial;          // D x D
  Tensor temporal;         // T x T
  Tensor spatial_logits;   // D x D
  Tensor temporal_logits;  // T x T
};

struct AttentionRecord {
  std::vector<AttentionRound> rounds;
  bool empty() const { return rounds.empty(); }
};

struct MixerOutput {
  Tensor prediction;  // 1 x 1
  AttentionRecord record;
};

/// Full cascade: input T x D is transposed into the spatial view, then per
/// round SAMP -> transpose -> TAMP -> transpose, and the last temporal
/// state feeds the GRU decoder. Disabled blocks are identity maps;
/// disabling both leaves a plain GRU over the raw window.
MixerOutput mixer_forward(const Tensor& input, const MixerParams& params,
                          const MixerConfig& config, bool capture);

/// Matmul FLOPs of one single-sample forward pass.
struct FlopReport {
  std::uint64_t samp = 0;
  std::uint64_t tamp = 0;
  std::uint64_t decoder = 0;
  std::uint64_t total = 0;
};

/// Closed-form matmul FLOP count per sample. Per round, SAMP costs
/// 6*D*T^2 (three affine maps) + 4*T*D^2 (score and aggregation products);
/// TAMP swaps the roles of T and D. The decoder costs T*(6*D*h + 6*h^2)
/// for the three gates plus 2*h for the output head. Equals the
/// instrumented flop_count() of a forward pass exactly.
FlopReport count_flops(const MixerConfig& config);

}  // namespace attnmixer
