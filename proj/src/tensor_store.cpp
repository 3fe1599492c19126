#include "convret/tensor_store.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace convret {

namespace {

constexpr std::string_view kTensorMagic = "CFT1";
constexpr std::string_view kKeypointMagic = "KPT1";
constexpr std::string_view kDescriptorMagic = "GDF1";
constexpr std::string_view kCodeMagic = "BCF1";
constexpr std::string_view kMatrixMagic = "MAT1";

// Little-endian encoding independent of host byte order.
class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void magic(std::string_view m) { bytes(m.data(), m.size()); }

  void u16(std::uint16_t v) {
    const std::array<char, 2> b{static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    bytes(b.data(), b.size());
  }

  void u32(std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b.data(), b.size());
  }

  void u64(std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b.data(), b.size());
  }

  void f32(float v) {
    if (!std::isfinite(v)) throw ParseError(ParseErrorKind::kNonFinite, "refusing to write non-finite value");
    u32(std::bit_cast<std::uint32_t>(v));
  }

  void bytes(const char* p, std::size_t n) {
    os_.write(p, static_cast<std::streamsize>(n));
    if (!os_) throw ParseError(ParseErrorKind::kIo, "write failed");
    count_ += n;
  }

  std::size_t count() const noexcept { return count_; }

 private:
  std::ostream& os_;
  std::size_t count_ = 0;
};

class Reader {
 public:
  Reader(std::istream& is, std::string_view what) : is_(is), what_(what) {}

  void expect_magic(std::string_view m) {
    std::array<char, 4> b{};
    is_.read(b.data(), 4);
    if (is_.gcount() != 4 || std::string_view(b.data(), 4) != m)
      throw ParseError(ParseErrorKind::kBadMagic, std::string(what_) + ": bad magic, expected " + std::string(m));
  }

  std::uint16_t u16() {
    std::array<unsigned char, 2> b{};
    read(b.data(), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  std::uint32_t u32() {
    std::array<unsigned char, 4> b{};
    read(b.data(), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    std::array<unsigned char, 8> b{};
    read(b.data(), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
    return v;
  }

  float f32() {
    const float v = std::bit_cast<float>(u32());
    if (!std::isfinite(v)) throw ParseError(ParseErrorKind::kNonFinite, std::string(what_) + ": non-finite value");
    return v;
  }

  std::string string(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

 private:
  void read(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw ParseError(ParseErrorKind::kTruncated, std::string(what_) + ": truncated payload");
  }

  std::istream& is_;
  std::string_view what_;
};

void check_name(const std::string& name) {
  if (name.size() > 0xffff) throw DataError("item name longer than 65535 bytes: " + name.substr(0, 32) + "...");
}

template <typename Fn>
void with_output(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ParseError(ParseErrorKind::kIo, "cannot open for writing: " + path.string());
  fn(os);
  os.flush();
  if (!os) throw ParseError(ParseErrorKind::kIo, "write failed: " + path.string());
}

template <typename Fn>
auto with_input(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(ParseErrorKind::kIo, "cannot open: " + path.string());
  try {
    return fn(is);
  } catch (const ParseError& e) {
    throw ParseError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace

FeatureTensor::FeatureTensor(std::uint32_t width, std::uint32_t height, std::uint32_t channels)
    : FeatureTensor(width, height, channels,
                    std::vector<float>(std::size_t{width} * height * channels, 0.0f)) {}

FeatureTensor::FeatureTensor(std::uint32_t width, std::uint32_t height, std::uint32_t channels,
                             std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width == 0 || height == 0 || channels == 0)
    throw ParseError(ParseErrorKind::kInvalidDimensions, "tensor dimensions must be positive");
  if (data_.size() != std::size_t{width} * height * channels)
    throw ParseError(ParseErrorKind::kInvalidDimensions, "tensor data length does not match W*H*K");
}

std::size_t write_tensor(const FeatureTensor& t, std::ostream& sink) {
  if (t.width() == 0) throw ParseError(ParseErrorKind::kInvalidDimensions, "cannot write an empty tensor");
  Writer w(sink);
  w.magic(kTensorMagic);
  w.u32(t.width());
  w.u32(t.height());
  w.u32(t.channels());
  for (float v : t.data()) w.f32(v);
  return w.count();
}

FeatureTensor read_tensor(std::istream& source) {
  Reader r(source, "tensor");
  r.expect_magic(kTensorMagic);
  const std::uint32_t w = r.u32();
  const std::uint32_t h = r.u32();
  const std::uint32_t k = r.u32();
  if (w == 0 || h == 0 || k == 0)
    throw ParseError(ParseErrorKind::kInvalidDimensions, "tensor: dimensions must be positive");
  std::vector<float> data(std::size_t{w} * h * k);
  for (float& v : data) v = r.f32();
  return FeatureTensor(w, h, k, std::move(data));
}

std::size_t write_keypoints(const KeypointList& kp, std::ostream& sink) {
  if (kp.image_width == 0 || kp.image_height == 0)
    throw ParseError(ParseErrorKind::kInvalidDimensions, "keypoints: image dimensions must be positive");
  Writer w(sink);
  w.magic(kKeypointMagic);
  w.u32(kp.image_width);
  w.u32(kp.image_height);
  w.u32(static_cast<std::uint32_t>(kp.points.size()));
  for (const auto& p : kp.points) {
    w.f32(p.x);
    w.f32(p.y);
  }
  return w.count();
}

KeypointList read_keypoints(std::istream& source) {
  Reader r(source, "keypoints");
  r.expect_magic(kKeypointMagic);
  KeypointList kp;
  kp.image_width = r.u32();
  kp.image_height = r.u32();
  if (kp.image_width == 0 || kp.image_height == 0)
    throw ParseError(ParseErrorKind::kInvalidDimensions, "keypoints: image dimensions must be positive");
  const std::uint32_t n = r.u32();
  kp.points.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Keypoint p;
    p.x = r.f32();
    p.y = r.f32();
    if (p.x < 1.0f || p.y < 1.0f || p.x > static_cast<float>(kp.image_width) ||
        p.y > static_cast<float>(kp.image_height))
      throw ParseError(ParseErrorKind::kInvalidDimensions, "keypoints: point outside [1,W_I]x[1,H_I]");
    kp.points.push_back(p);
  }
  return kp;
}

std::size_t write_descriptors(const GlobalDescriptorFile& f, std::ostream& sink) {
  if (f.names.size() != f.vectors.size()) throw DataError("descriptor file: names/vectors length mismatch");
  Writer w(sink);
  w.magic(kDescriptorMagic);
  w.u32(static_cast<std::uint32_t>(f.size()));
  w.u32(f.dim);
  for (std::size_t i = 0; i < f.size(); ++i) {
    check_name(f.names[i]);
    if (f.vectors[i].size() != f.dim) throw DataError("descriptor file: vector length != D for " + f.names[i]);
    w.u16(static_cast<std::uint16_t>(f.names[i].size()));
    w.bytes(f.names[i].data(), f.names[i].size());
    for (float v : f.vectors[i]) w.f32(v);
  }
  return w.count();
}

GlobalDescriptorFile read_descriptors(std::istream& source) {
  Reader r(source, "descriptors");
  r.expect_magic(kDescriptorMagic);
  GlobalDescriptorFile f;
  const std::uint32_t n = r.u32();
  f.dim = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    f.names.push_back(r.string(r.u16()));
    std::vector<float> v(f.dim);
    for (float& x : v) x = r.f32();
    f.vectors.push_back(std::move(v));
  }
  return f;
}

std::size_t write_codes(const BinaryCodeFile& f, std::ostream& sink) {
  if (f.names.size() != f.codes.size()) throw DataError("code file: names/codes length mismatch");
  const std::size_t words = words_for_bits(f.bits);
  Writer w(sink);
  w.magic(kCodeMagic);
  w.u32(static_cast<std::uint32_t>(f.size()));
  w.u32(f.bits);
  for (std::size_t i = 0; i < f.size(); ++i) {
    check_name(f.names[i]);
    const auto& code = f.codes[i];
    if (code.size() != words) throw DataError("code file: wrong word count for " + f.names[i]);
    if (f.bits % 64 != 0 && (code.back() >> (f.bits % 64)) != 0)
      throw DataError("code file: unused high bits set for " + f.names[i]);
    w.u16(static_cast<std::uint16_t>(f.names[i].size()));
    w.bytes(f.names[i].data(), f.names[i].size());
    for (std::uint64_t word : code) w.u64(word);
  }
  return w.count();
}

BinaryCodeFile read_codes(std::istream& source) {
  Reader r(source, "codes");
  r.expect_magic(kCodeMagic);
  BinaryCodeFile f;
  const std::uint32_t n = r.u32();
  f.bits = r.u32();
  const std::size_t words = words_for_bits(f.bits);
  for (std::uint32_t i = 0; i < n; ++i) {
    f.names.push_back(r.string(r.u16()));
    BinaryCode code(words);
    for (auto& word : code) word = r.u64();
    if (f.bits % 64 != 0 && (code.back() >> (f.bits % 64)) != 0)
      throw ParseError(ParseErrorKind::kInvalidDimensions, "codes: unused high bits set for " + f.names.back());
    f.codes.push_back(std::move(code));
  }
  return f;
}

std::size_t write_matrix(const Matrix& m, std::ostream& sink) {
  Writer w(sink);
  w.magic(kMatrixMagic);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.f32(static_cast<float>(m(i, j)));
  return w.count();
}

Matrix read_matrix(std::istream& source) {
  Reader r(source, "matrix");
  r.expect_magic(kMatrixMagic);
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  Matrix m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32();
  return m;
}

void save_tensor(const FeatureTensor& t, const std::filesystem::path& path) {
  with_output(path, [&](std::ostream& os) { write_tensor(t, os); });
}
FeatureTensor load_tensor(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& is) { return read_tensor(is); });
}
void save_keypoints(const KeypointList& kp, const std::filesystem::path& path) {
  with_output(path, [&](std::ostream& os) { write_keypoints(kp, os); });
}
KeypointList load_keypoints(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& is) { return read_keypoints(is); });
}
void save_descriptors(const GlobalDescriptorFile& f, const std::filesystem::path& path) {
  with_output(path, [&](std::ostream& os) { write_descriptors(f, os); });
}
GlobalDescriptorFile load_descriptors(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& is) { return read_descriptors(is); });
}
void save_codes(const BinaryCodeFile& f, const std::filesystem::path& path) {
  with_output(path, [&](std::ostream& os) { write_codes(f, os); });
}
BinaryCodeFile load_codes(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& is) { return read_codes(is); });
}
void save_matrix(const Matrix& m, const std::filesystem::path& path) {
  with_output(path, [&](std::ostream& os) { write_matrix(m, os); });
}
Matrix load_matrix(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& is) { return read_matrix(is); });
}

std::string peek_magic(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(ParseErrorKind::kIo, "cannot open: " + path.string());
  std::string m(4, '\0');
  is.read(m.data(), 4);
  if (is.gcount() != 4) throw ParseError(ParseErrorKind::kTruncated, path.string() + ": shorter than a magic");
  return m;
}

}  // namespace convret
