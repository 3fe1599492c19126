#pragma once

#include "convret/model.hpp"
#include "convret/retrieval_eval.hpp"
#include "convret/tensor_store.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace convret {

/// One image's inputs: a tensor per configured layer and optional keypoints.
struct ImageInput {
  std::string name;
  std::vector<FeatureTensor> layers;
  std::optional<KeypointList> keypoints;
};

/// Image names in a corpus directory, sorted. With no layers an image is
/// "<name>.cft"; otherwise "<name>.<layer>.cft" must exist for every layer.
/// Keypoints live in "<name>.kpt".
std::vector<std::string> list_corpus(const std::filesystem::path& dir, const std::vector<std::string>& layers);
ImageInput load_image(const std::filesystem::path& dir, const std::string& name, const PipelineConfig& cfg);
std::vector<ImageInput> load_corpus(const std::filesystem::path& dir, const PipelineConfig& cfg);

/// Wall-clock seconds spent per pipeline stage, summed over images.
struct StageTimings {
  double load = 0;
  double mask = 0;
  double pca = 0;
  double embed = 0;
  double aggregate = 0;
  double postprocess = 0;
  double hash = 0;
  double search = 0;

  StageTimings& operator+=(const StageTimings& o);
  std::string summary() const;
};

/// Stacked, masked K-dim local descriptors of one image. A SIFT mask with no
/// keypoints falls back to every location with a warning.
DescriptorSet masked_descriptors(const ImageInput& image, const PipelineConfig& cfg);

/// Fits every stage in order: PCA, codebook, T-emb projection, RN, ITQ.
/// Model matrices are rounded to float precision as each stage is fitted, so
/// a saved and reloaded model encodes bit-identically.
PipelineModel fit_pipeline(std::span<const ImageInput> train, const PipelineConfig& cfg);
PipelineModel fit_pipeline(const std::filesystem::path& train_dir, const PipelineConfig& cfg);

struct EncodedImage {
  Vector descriptor;  // final unit-norm global descriptor
  std::optional<BinaryCode> code;
};

EncodedImage encode_image(const PipelineModel& model, const ImageInput& image, StageTimings* timings = nullptr);

struct EncodedCorpus {
  GlobalDescriptorFile descriptors;
  std::optional<BinaryCodeFile> codes;
  StageTimings timings;
};

/// Encodes images with a bounded worker pool; output order follows input order.
EncodedCorpus encode_corpus(const PipelineModel& model, std::span<const ImageInput> images);
/// Loads and encodes every image of a corpus directory.
EncodedCorpus encode_corpus(const PipelineModel& model, const std::filesystem::path& dir);

enum class SearchMode { kReal, kBinary };

struct EvalReport {
  std::vector<std::pair<std::string, double>> per_query;  // sorted by query name
  double mean_ap = 0.0;
  StageTimings timings;

  /// "<query>\t<AP>" lines, then "mAP\t<value>".
  std::string tsv() const;
};

/// Ranks the whole database for every query and scores it against gt.
EvalReport evaluate(const EncodedCorpus& db, const EncodedCorpus& queries, const GroundTruth& gt, SearchMode mode);

EvalReport run_eval(const PipelineModel& model, const std::filesystem::path& db_dir,
                    const std::filesystem::path& query_dir, const std::filesystem::path& gt_dir, SearchMode mode);

/// Merges descriptor files into one index sorted by name; duplicate names are rejected.
GlobalDescriptorFile merge_descriptors(std::span<const GlobalDescriptorFile> parts);
BinaryCodeFile merge_codes(std::span<const BinaryCodeFile> parts);

}  // namespace convret
