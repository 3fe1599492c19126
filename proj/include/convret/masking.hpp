#pragma once

#include "convret/common.hpp"
#include "convret/tensor_store.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace convret {

struct GridCoord {
  std::uint32_t x = 1;
  std::uint32_t y = 1;
  auto operator<=>(const GridCoord& o) const {
    if (auto c = y <=> o.y; c != 0) return c;
    return x <=> o.x;
  }
  bool operator==(const GridCoord&) const = default;
};

/// Duplicate-free grid coordinates to retain, sorted row-major (by y, then x).
class SelectionMask {
 public:
  SelectionMask() = default;
  /// Sorts and deduplicates `coords`; throws PreconditionError on out-of-grid entries.
  SelectionMask(std::uint32_t width, std::uint32_t height, std::vector<GridCoord> coords);

  std::uint32_t width() const noexcept { return width_; }
  std::uint32_t height() const noexcept { return height_; }
  const std::vector<GridCoord>& coords() const noexcept { return coords_; }
  std::size_t size() const noexcept { return coords_.size(); }
  bool empty() const noexcept { return coords_.empty(); }
  bool operator==(const SelectionMask&) const = default;

 private:
  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::vector<GridCoord> coords_;
};

enum class MaskKind { kNone, kSift, kSum, kMax };

/// Thrown by compute_sift_mask when there are no keypoints; callers fall back to no mask.
class EmptyMaskError : public DataError {
 public:
  using DataError::DataError;
};

/// Round half away from zero.
std::int64_t round_half_away(double v);

/// Keypoint (x, y) maps to cell (round(x*W/W_I), round(y*H/H_I)) clamped into the grid.
SelectionMask compute_sift_mask(const FeatureTensor& t, const KeypointList& kp);

/// Union over channels of the per-channel argmax cell; ties go to the smallest row-major index.
SelectionMask compute_max_mask(const FeatureTensor& t);

/// Cells whose channel sum is >= the lower median of all W*H sums.
SelectionMask compute_sum_mask(const FeatureTensor& t);

/// One K-dim row per masked cell in mask order, or every cell in row-major order when mask is empty.
DescriptorSet apply_mask(const FeatureTensor& t, const std::optional<SelectionMask>& mask);

/// Channel-concatenates tensors with identical W and H.
FeatureTensor stack_hypercolumn(std::span<const FeatureTensor> tensors);

struct MaskStats {
  double retained_fraction = 0.0;
  /// Mean fraction of l2-normalized retained-descriptor pairs with dot product in [-0.15, 0.15].
  double uncorrelated_fraction = 0.0;
  std::size_t images = 0;
};

struct MaskStatsOptions {
  std::size_t pair_cap = 10000;
  std::uint64_t seed = 0;
  double band = 0.15;
};

/// keypoints may be empty unless kind == kSift; an image with no keypoints
/// falls back to the full grid, like the pipeline does.
MaskStats mask_stats(std::span<const FeatureTensor> corpus, MaskKind kind,
                     std::span<const KeypointList> keypoints = {}, const MaskStatsOptions& options = {});

/// Computes the mask of the requested kind; kNone yields nullopt.
std::optional<SelectionMask> compute_mask(const FeatureTensor& t, MaskKind kind, const KeypointList* kp);

/// Text dump: "# W H" header, then one "x y" line per coordinate.
void write_mask_text(const SelectionMask& m, std::ostream& os);
SelectionMask read_mask_text(std::istream& is);

}  // namespace convret
