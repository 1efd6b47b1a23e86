#pragma once

#include <optional>
#include <string>

#include "attnmixer/model.hpp"
#include "attnmixer/train.hpp"

namespace attnmixer {

inline constexpr const char* kCheckpointVersion = "attnmixer-ckpt-v1";

struct Checkpoint {
  MixerConfig config;
  MixerParams params;
  std::optional<AdamState> adam;
};

/// JSON checkpoint: version, config, named parameter arrays (row-major,
/// round-trip-exact decimals), optional Adam state. load(save(p))
/// reproduces every value bitwise.
void save_checkpoint(const std::string& path, const MixerConfig& config,
                     MixerParams& params, const AdamState* adam = nullptr);

/// Throws ConfigError on version mismatch, DimensionError on tampered
/// shapes, DataError on malformed JSON.
Checkpoint load_checkpoint(const std::string& path);

/// Verifies the structural fields (window, variates, rounds, gru_hidden)
/// of a loaded checkpoint against an expected configuration.
void require_compatible(const MixerConfig& loaded, const MixerConfig& expected);

}  // namespace attnmixer
