#pragma once

#include "convret/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace convret {

/// W x H x K activation grid of one conv layer.
///
/// Storage is row-major over (y, x, k): the channel vector of grid cell (x, y)
/// (1-based) is the contiguous slice starting at ((y-1)*W + (x-1))*K.
class FeatureTensor {
 public:
  FeatureTensor() = default;
  /// Zero-filled tensor. Throws ParseError(kInvalidDimensions) if any extent is 0.
  FeatureTensor(std::uint32_t width, std::uint32_t height, std::uint32_t channels);
  FeatureTensor(std::uint32_t width, std::uint32_t height, std::uint32_t channels,
                std::vector<float> data);

  std::uint32_t width() const noexcept { return width_; }
  std::uint32_t height() const noexcept { return height_; }
  std::uint32_t channels() const noexcept { return channels_; }
  std::size_t cells() const noexcept { return std::size_t{width_} * height_; }

  float& at(std::uint32_t x, std::uint32_t y, std::uint32_t k) { return data_[offset(x, y) + (k - 1)]; }
  float at(std::uint32_t x, std::uint32_t y, std::uint32_t k) const {
    return data_[offset(x, y) + (k - 1)];
  }

  /// Channel vector at 1-based grid cell (x, y).
  std::span<const float> cell(std::uint32_t x, std::uint32_t y) const {
    return {data_.data() + offset(x, y), channels_};
  }

  const std::vector<float>& data() const noexcept { return data_; }
  std::vector<float>& data() noexcept { return data_; }

  bool operator==(const FeatureTensor&) const = default;

 private:
  std::size_t offset(std::uint32_t x, std::uint32_t y) const {
    return (std::size_t{y - 1} * width_ + (x - 1)) * channels_;
  }

  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::uint32_t channels_ = 0;
  std::vector<float> data_;
};

struct Keypoint {
  float x = 0;
  float y = 0;
  bool operator==(const Keypoint&) const = default;
};

/// Keypoint locations in 1-based pixel coordinates of a W_I x H_I image.
struct KeypointList {
  std::uint32_t image_width = 0;
  std::uint32_t image_height = 0;
  std::vector<Keypoint> points;
  bool operator==(const KeypointList&) const = default;
};

/// Named real-valued global descriptors (GDF1).
struct GlobalDescriptorFile {
  std::uint32_t dim = 0;
  std::vector<std::string> names;
  std::vector<std::vector<float>> vectors;

  std::size_t size() const noexcept { return names.size(); }
  bool operator==(const GlobalDescriptorFile&) const = default;
};

/// Packed L-bit code; bit i lives in word i / 64 at position i % 64.
using BinaryCode = std::vector<std::uint64_t>;

inline std::size_t words_for_bits(std::uint32_t bits) { return (std::size_t{bits} + 63) / 64; }

/// Named binary codes (BCF1).
struct BinaryCodeFile {
  std::uint32_t bits = 0;
  std::vector<std::string> names;
  std::vector<BinaryCode> codes;

  std::size_t size() const noexcept { return names.size(); }
  bool operator==(const BinaryCodeFile&) const = default;
};

std::size_t write_tensor(const FeatureTensor& t, std::ostream& sink);
FeatureTensor read_tensor(std::istream& source);

std::size_t write_keypoints(const KeypointList& kp, std::ostream& sink);
KeypointList read_keypoints(std::istream& source);

std::size_t write_descriptors(const GlobalDescriptorFile& f, std::ostream& sink);
GlobalDescriptorFile read_descriptors(std::istream& source);

std::size_t write_codes(const BinaryCodeFile& f, std::ostream& sink);
BinaryCodeFile read_codes(std::istream& source);

/// MAT1 blob: u32 rows, u32 cols, row-major f32. Values are narrowed to float.
std::size_t write_matrix(const Matrix& m, std::ostream& sink);
Matrix read_matrix(std::istream& source);

// File-path conveniences; they wrap I/O failures in ParseError(kIo).
void save_tensor(const FeatureTensor& t, const std::filesystem::path& path);
FeatureTensor load_tensor(const std::filesystem::path& path);
void save_keypoints(const KeypointList& kp, const std::filesystem::path& path);
KeypointList load_keypoints(const std::filesystem::path& path);
void save_descriptors(const GlobalDescriptorFile& f, const std::filesystem::path& path);
GlobalDescriptorFile load_descriptors(const std::filesystem::path& path);
void save_codes(const BinaryCodeFile& f, const std::filesystem::path& path);
BinaryCodeFile load_codes(const std::filesystem::path& path);
void save_matrix(const Matrix& m, const std::filesystem::path& path);
Matrix load_matrix(const std::filesystem::path& path);

/// Reads the 4-byte magic of a file without consuming the rest.
std::string peek_magic(const std::filesystem::path& path);

}  // namespace convret
