#include "convret/tensor_store.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

using namespace convret;

namespace {

std::string bytes_of(const FeatureTensor& t) {
  std::ostringstream os;
  write_tensor(t, os);
  return os.str();
}

template <typename Fn>
ParseErrorKind parse_error_kind(Fn&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.kind();
  }
  FAIL("expected a ParseError");
  return ParseErrorKind::kIo;
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& s, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(s, v);
}

}  // namespace

TEST_CASE("tensor layout is row-major over (y, x, k) with 1-based coordinates") {
  std::vector<float> data(2 * 3 * 2);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(i);
  const FeatureTensor t(2, 3, 2, data);
  for (std::uint32_t y = 1; y <= 3; ++y)
    for (std::uint32_t x = 1; x <= 2; ++x)
      for (std::uint32_t k = 1; k <= 2; ++k)
        CHECK(t.at(x, y, k) == static_cast<float>(((y - 1) * 2 + (x - 1)) * 2 + (k - 1)));
  const auto cell = t.cell(2, 3);
  CHECK(cell.size() == 2);
  CHECK(cell[0] == 10.0f);
  CHECK(cell[1] == 11.0f);
}

TEST_CASE("2x2x2 tensor of 1..8 round-trips") {
  const FeatureTensor t(2, 2, 2, {1, 2, 3, 4, 5, 6, 7, 8});
  std::stringstream ss;
  CHECK(write_tensor(t, ss) == 4 + 12 + 32);
  CHECK(read_tensor(ss) == t);
}

TEST_CASE("tensor bytes are little-endian with the CFT1 header") {
  std::string expected = "CFT1";
  put_u32(expected, 1);
  put_u32(expected, 1);
  put_u32(expected, 2);
  put_f32(expected, 1.5f);
  put_f32(expected, -2.0f);
  CHECK(bytes_of(FeatureTensor(1, 1, 2, {1.5f, -2.0f})) == expected);
}

TEST_CASE("random tensors round-trip bit-exactly") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::uint32_t> side(1, 9);
  std::normal_distribution<float> g(0.0f, 100.0f);
  for (int i = 0; i < 50; ++i) {
    FeatureTensor t(side(rng), side(rng), side(rng));
    for (auto& v : t.data()) v = g(rng);
    std::stringstream ss;
    write_tensor(t, ss);
    const FeatureTensor back = read_tensor(ss);
    REQUIRE(back.data().size() == t.data().size());
    CHECK(std::memcmp(back.data().data(), t.data().data(), t.data().size() * sizeof(float)) == 0);
  }
}

TEST_CASE("tensor reader errors are distinct") {
  SUBCASE("truncated payload") {
    std::string s = "CFT1";
    put_u32(s, 2);
    put_u32(s, 2);
    put_u32(s, 2);
    for (int i = 0; i < 7; ++i) put_f32(s, 1.0f);
    std::istringstream is(s);
    CHECK(parse_error_kind([&] { read_tensor(is); }) == ParseErrorKind::kTruncated);
  }
  SUBCASE("truncated header") {
    std::istringstream is(std::string("CFT1\x02\x00", 6));
    CHECK(parse_error_kind([&] { read_tensor(is); }) == ParseErrorKind::kTruncated);
  }
  SUBCASE("bad magic") {
    std::string s = bytes_of(FeatureTensor(1, 1, 1, {1.0f}));
    s[3] = '2';
    std::istringstream is(s);
    CHECK(parse_error_kind([&] { read_tensor(is); }) == ParseErrorKind::kBadMagic);
  }
  SUBCASE("zero width in the header") {
    std::string s = "CFT1";
    put_u32(s, 0);
    put_u32(s, 2);
    put_u32(s, 2);
    std::istringstream is(s);
    CHECK(parse_error_kind([&] { read_tensor(is); }) == ParseErrorKind::kInvalidDimensions);
  }
  SUBCASE("non-finite value") {
    std::string s = "CFT1";
    put_u32(s, 1);
    put_u32(s, 1);
    put_u32(s, 2);
    put_f32(s, 1.0f);
    put_f32(s, std::numeric_limits<float>::quiet_NaN());
    std::istringstream is(s);
    CHECK(parse_error_kind([&] { read_tensor(is); }) == ParseErrorKind::kNonFinite);
  }
}

TEST_CASE("W = 0 is an invalid-dimensions error") {
  CHECK(parse_error_kind([] { FeatureTensor(0, 2, 2); }) == ParseErrorKind::kInvalidDimensions);
  CHECK(parse_error_kind([] { FeatureTensor(2, 2, 2, std::vector<float>(7)); }) ==
        ParseErrorKind::kInvalidDimensions);
}

TEST_CASE("writers refuse non-finite values") {
  FeatureTensor t(1, 1, 1, {std::numeric_limits<float>::infinity()});
  std::ostringstream os;
  CHECK(parse_error_kind([&] { write_tensor(t, os); }) == ParseErrorKind::kNonFinite);
}

TEST_CASE("keypoints round-trip and are bounds-checked") {
  KeypointList kp{1024, 768, {{512.0f, 384.0f}, {1.0f, 1.0f}, {1024.0f, 768.0f}}};
  std::stringstream ss;
  CHECK(write_keypoints(kp, ss) == 4 + 12 + 3 * 8);
  CHECK(read_keypoints(ss) == kp);

  KeypointList empty{640, 480, {}};
  std::stringstream es;
  write_keypoints(empty, es);
  CHECK(read_keypoints(es) == empty);

  std::string s = "KPT1";
  put_u32(s, 10);
  put_u32(s, 10);
  put_u32(s, 1);
  put_f32(s, 11.0f);
  put_f32(s, 5.0f);
  std::istringstream bad(s);
  CHECK_THROWS_AS(read_keypoints(bad), DataError);
}

TEST_CASE("descriptor files round-trip with names") {
  GlobalDescriptorFile f;
  f.dim = 3;
  f.names = {"all_souls_000013", "radcliffe", "\xc3\xa9t\xc3\xa9"};
  f.vectors = {{1, 2, 3}, {-0.5f, 0, 0.25f}, {7, 8, 9}};
  std::stringstream ss;
  write_descriptors(f, ss);
  CHECK(read_descriptors(ss) == f);

  f.vectors[1].pop_back();
  std::ostringstream os;
  CHECK_THROWS_AS(write_descriptors(f, os), DataError);
}

TEST_CASE("code files pack ceil(L/64) words and keep unused bits zero") {
  BinaryCodeFile f;
  f.bits = 70;
  f.names = {"a", "b"};
  f.codes = {{0xffffffffffffffffULL, 0x3fULL}, {0x1ULL, 0x0ULL}};
  std::stringstream ss;
  const std::size_t n = write_codes(f, ss);
  CHECK(n == 4 + 8 + 2 * (2 + 1 + 16));
  CHECK(read_codes(ss) == f);

  CHECK(words_for_bits(1) == 1);
  CHECK(words_for_bits(64) == 1);
  CHECK(words_for_bits(65) == 2);
  CHECK(words_for_bits(512) == 8);

  f.codes[0][1] = 0x40ULL;  // bit 70 is beyond L
  std::ostringstream os;
  CHECK_THROWS_AS(write_codes(f, os), DataError);

  std::string raw = "BCF1";
  put_u32(raw, 1);
  put_u32(raw, 4);
  raw += std::string("\x01\x00x", 3);
  raw += std::string("\x10\x00\x00\x00\x00\x00\x00\x00", 8);
  std::istringstream is(raw);
  CHECK_THROWS_AS(read_codes(is), DataError);
}

TEST_CASE("matrix blobs round-trip at float precision") {
  Matrix m(2, 3);
  m << 1, 2, 3, 4.5, -5.25, 6;
  std::stringstream ss;
  CHECK(write_matrix(m, ss) == 4 + 8 + 24);
  CHECK(read_matrix(ss) == m);

  // Row-major payload.
  std::ostringstream os;
  write_matrix(m, os);
  float second;
  std::memcpy(&second, os.str().data() + 12 + 4, 4);
  CHECK(second == 2.0f);
}

TEST_CASE("file helpers and magic peeking") {
  fixtures::TempDir dir("store");
  const FeatureTensor t(2, 1, 1, {3, 4});
  save_tensor(t, dir / "a.cft");
  CHECK(load_tensor(dir / "a.cft") == t);
  CHECK(peek_magic(dir / "a.cft") == "CFT1");
  CHECK(parse_error_kind([&] { load_tensor(dir / "missing.cft"); }) == ParseErrorKind::kIo);
}
