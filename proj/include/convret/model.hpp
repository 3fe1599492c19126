#pragma once

#include "convret/codebooks.hpp"
#include "convret/config.hpp"
#include "convret/embedding.hpp"
#include "convret/hashing.hpp"
#include "convret/postprocessing.hpp"
#include "convret/preprocessing.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace convret {

inline constexpr std::string_view kModelFormatVersion = "convret-model/1";

/// Every fitted stage of the pipeline plus the configuration that produced it.
struct PipelineModel {
  PipelineConfig config;
  std::uint32_t input_channels = 0;  // K of the (stacked) input tensors
  PcaModel pca;
  std::optional<Codebook> codebook;     // temb, vlad
  std::optional<DiagonalGmm> gmm;       // fv
  std::optional<TembProjection> temb;   // temb
  std::optional<RnModel> rn;
  std::optional<ItqModel> itq;
};

enum class ModelErrorKind { kMissingBlob, kShapeMismatch, kVersionMismatch, kManifest };

class ModelError : public DataError {
 public:
  ModelError(ModelErrorKind kind, const std::string& what) : DataError(what), kind_(kind) {}
  ModelErrorKind kind() const noexcept { return kind_; }

 private:
  ModelErrorKind kind_;
};

/// Writes manifest.json and one "<blob>.mat" per matrix into dir (created if
/// needed). Returns the manifest path.
std::filesystem::path save_model(const PipelineModel& m, const std::filesystem::path& dir);

/// Loads and cross-checks every blob against the manifest and config.
PipelineModel load_model(const std::filesystem::path& dir);

}  // namespace convret
