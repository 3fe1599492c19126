#pragma once

#include "convret/aggregation.hpp"
#include "convret/masking.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace convret {

enum class EmbedKind { kTemb, kVlad, kFv };

struct RnConfig {
  bool enabled = true;
  bool whiten = true;
  /// Output dimension; 0 keeps the embedding dimension.
  std::uint32_t dim = 0;
  double epsilon = 1e-6;
};

struct PipelineConfig {
  MaskKind mask = MaskKind::kMax;
  /// Tensor file suffixes stacked as a hyper-column; empty means one "<name>.cft" per image.
  std::vector<std::string> layers;
  EmbedKind embed = EmbedKind::kTemb;
  std::uint32_t dim = 32;            // local descriptor dim after PCA
  std::uint32_t codebook_size = 20;  // |C|
  std::uint32_t drop = 128;          // leading T-emb eigen-directions removed
  AggregationConfig agg;
  double alpha = 0.5;
  RnConfig rn;
  /// ITQ code length; 0 disables hashing.
  std::uint32_t bits = 0;
  int itq_iterations = 50;
  std::uint64_t seed = 0;
  /// Worker threads for corpus encoding; 0 picks hardware concurrency.
  unsigned threads = 0;

  /// Per-descriptor embedding (= aggregated) dimension.
  std::uint64_t embedding_dim() const;
  /// Dimension of the final real-valued global descriptor.
  std::uint64_t final_dim() const;

  /// Throws ConfigError on any inconsistent setting.
  void validate() const;
};

/// Named final-dimensionality presets D512, D1024, D2048, D4096, D8064 (T-emb, drop 128).
PipelineConfig apply_preset(PipelineConfig base, std::string_view name);
std::vector<std::string> preset_names();

/// Sets one option by its long name ("mask", "embed", "agg", "alpha", "dim",
/// "codebook-size", "drop", "bits", "whiten", "seed", "preset", "layers",
/// "rn", "rn-dim", "sinkhorn-iterations", "sinkhorn-exponent", "clamp-gram",
/// "itq-iterations", "threads"). Throws ConfigError on unknown keys or bad values.
void apply_setting(PipelineConfig& cfg, std::string_view key, std::string_view value);

/// "key = value" lines; '#' starts a comment. Applied on top of `base`.
PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base = {});

std::string to_string(MaskKind k);
std::string to_string(EmbedKind k);
std::string to_string(AggregationMode m);
MaskKind parse_mask_kind(std::string_view s);
EmbedKind parse_embed_kind(std::string_view s);
AggregationMode parse_aggregation_mode(std::string_view s);

/// Canonical "key = value" rendering, accepted back by apply_setting.
std::string to_key_values(const PipelineConfig& cfg);

}  // namespace convret
