#include "convret/pipeline.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace convret;
namespace fs = std::filesystem;

namespace {

fixtures::ClusteredScenes scenes(std::uint64_t seed) {
  fixtures::ClusteredScenes::Options o;
  o.channels = 16;
  return fixtures::ClusteredScenes(o, seed);
}

std::vector<ImageInput> corpus(const fixtures::ClusteredScenes& sc, int per_scene, std::uint64_t seed,
                               const std::string& prefix = "img") {
  std::mt19937_64 rng(seed);
  std::vector<ImageInput> out;
  for (int s = 0; s < sc.options().scenes; ++s)
    for (int i = 0; i < per_scene; ++i)
      out.push_back({prefix + std::to_string(s) + "_" + std::to_string(i), {sc.image(s, rng)}, {}});
  return out;
}

PipelineConfig config() {
  PipelineConfig cfg;
  cfg.dim = 8;
  cfg.codebook_size = 10;
  cfg.drop = 8;
  cfg.bits = 64;
  cfg.rn.whiten = false;
  cfg.seed = 11;
  cfg.threads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("codes separate scenes") {
  const auto sc = scenes(1);
  const auto model = fit_pipeline(corpus(sc, 30, 2), config());
  CHECK(model.config.final_dim() == 72);
  const auto test = corpus(sc, 8, 3);
  const auto enc = encode_corpus(model, test);
  REQUIRE(enc.codes);
  CHECK(enc.descriptors.dim == 72);
  CHECK(enc.codes->bits == 64);
  CHECK(enc.descriptors.names == enc.codes->names);

  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  for (std::size_t a = 0; a < test.size(); ++a)
    for (std::size_t b = a + 1; b < test.size(); ++b) {
      const double d = oracle::hamming_bits(enc.codes->codes[a], enc.codes->codes[b], 64);
      if (a / 8 == b / 8) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  MESSAGE("mean intra " << intra / n_intra << ", inter " << inter / n_inter);
  CHECK(intra / n_intra < inter / n_inter);
}

TEST_CASE("encoding is deterministic and order independent") {
  const auto sc = scenes(4);
  const auto model = fit_pipeline(corpus(sc, 30, 5), config());
  auto images = corpus(sc, 3, 6);
  ImageInput twin = images[0];
  twin.name = "twin";
  const auto a = encode_image(model, images[0]);
  const auto b = encode_image(model, twin);
  CHECK(a.descriptor == b.descriptor);
  CHECK(a.code == b.code);
  CHECK(std::abs(a.descriptor.norm() - 1.0) < 1e-9);

  auto single = model;
  single.config.threads = 1;
  const auto e1 = encode_corpus(single, images);
  const auto e3 = encode_corpus(model, images);
  CHECK(e1.descriptors.vectors == e3.descriptors.vectors);
  CHECK(e1.codes->codes == e3.codes->codes);
  CHECK(e1.descriptors.names[0] == images[0].name);

  const auto refit = fit_pipeline(corpus(sc, 30, 5), config());
  CHECK(refit.itq->rotation == model.itq->rotation);
  CHECK(refit.temb->keep_basis == model.temb->keep_basis);
}

TEST_CASE("stage timings are recorded") {
  const auto sc = scenes(7);
  const auto model = fit_pipeline(corpus(sc, 30, 8), config());
  StageTimings t;
  encode_image(model, corpus(sc, 1, 9)[0], &t);
  CHECK(t.embed > 0);
  CHECK(t.summary().find("embed") != std::string::npos);
}

TEST_CASE("pipeline input errors") {
  const auto sc = scenes(10);
  auto cfg = config();
  cfg.bits = 0;
  cfg.rn.enabled = false;
  const auto model = fit_pipeline(corpus(sc, 10, 11), cfg);

  SUBCASE("channel count differs from the model") {
    std::mt19937_64 rng(1);
    ImageInput image{"odd", {fixtures::random_tensor(6, 6, 8, rng)}, {}};
    CHECK_THROWS_WITH_AS(encode_image(model, image), doctest::Contains("layer mismatch"), DataError);
  }
  SUBCASE("layer files that do not match each other") {
    std::mt19937_64 rng(2);
    ImageInput image{"split", {fixtures::random_tensor(6, 6, 8, rng), fixtures::random_tensor(5, 6, 8, rng)}, {}};
    PipelineConfig two = cfg;
    two.layers = {"a", "b"};
    CHECK_THROWS_AS(masked_descriptors(image, two), DataError);
  }
  SUBCASE("descriptor dim larger than the channel count") {
    auto big = cfg;
    big.dim = 32;
    big.drop = 0;
    CHECK_THROWS_AS(fit_pipeline(corpus(sc, 4, 12), big), ConfigError);
  }
  SUBCASE("empty training set") {
    CHECK_THROWS_AS(fit_pipeline(std::span<const ImageInput>{}, cfg), DataError);
  }
}

TEST_CASE("SIFT masking in the pipeline") {
  fixtures::TempDir dir("sift");
  std::mt19937_64 rng(3);
  save_tensor(fixtures::random_tensor(4, 4, 3, rng), dir / "a.cft");
  PipelineConfig cfg;
  cfg.mask = MaskKind::kSift;

  SUBCASE("missing keypoint file") {
    CHECK_THROWS_WITH_AS(load_image(dir.path(), "a", cfg), doctest::Contains(".kpt"), DataError);
  }
  SUBCASE("empty keypoint list falls back to the full grid") {
    save_keypoints(KeypointList{64, 64, {}}, dir / "a.kpt");
    const auto image = load_image(dir.path(), "a", cfg);
    fixtures::WarningCapture warnings;
    const auto d = masked_descriptors(image, cfg);
    CHECK(d.rows() == 16);
    CHECK(warnings.contains("has no keypoints"));
  }
  SUBCASE("keypoints select cells") {
    save_keypoints(KeypointList{64, 64, {{8, 8}, {9, 9}, {60, 60}}}, dir / "a.kpt");
    const auto d = masked_descriptors(load_image(dir.path(), "a", cfg), cfg);
    CHECK(d.rows() == 2);
  }
}

TEST_CASE("corpus listing") {
  fixtures::TempDir dir("list");
  std::mt19937_64 rng(4);
  for (const char* n : {"b", "a", "c"}) save_tensor(fixtures::random_tensor(2, 2, 2, rng), dir / (std::string(n) + ".cft"));
  CHECK(list_corpus(dir.path(), {}) == std::vector<std::string>{"a", "b", "c"});

  fixtures::TempDir layered("layers");
  save_tensor(fixtures::random_tensor(2, 2, 2, rng), layered / "x.conv4.cft");
  save_tensor(fixtures::random_tensor(2, 2, 2, rng), layered / "x.conv5.cft");
  save_tensor(fixtures::random_tensor(2, 2, 2, rng), layered / "y.conv5.cft");
  CHECK_THROWS_WITH_AS(list_corpus(layered.path(), {"conv4", "conv5"}), doctest::Contains("y"), DataError);
  fs::remove(layered / "y.conv5.cft");
  CHECK(list_corpus(layered.path(), {"conv4", "conv5"}) == std::vector<std::string>{"x"});

  fixtures::TempDir empty("empty");
  CHECK_THROWS_AS(list_corpus(empty.path(), {}), DataError);
}

TEST_CASE("evaluation") {
  GlobalDescriptorFile db;
  db.dim = 2;
  db.names = {"a", "b", "c"};
  db.vectors = {{1, 0}, {0, 1}, {0.8f, 0.6f}};
  EncodedCorpus dbc{db, {}, {}};
  GlobalDescriptorFile q;
  q.dim = 2;
  q.names = {"qa", "qb"};
  q.vectors = {{1, 0}, {0, 1}};
  EncodedCorpus qc{q, {}, {}};

  GroundTruth gt;
  gt.queries["first"] = {"first", "qa", {}, {"a", "c"}, {}};
  gt.queries["second"] = {"second", "qb", {}, {"c"}, {}};
  const auto report = evaluate(dbc, qc, gt, SearchMode::kReal);
  REQUIRE(report.per_query.size() == 2);
  CHECK(report.per_query[0].first == "qa");
  CHECK(report.per_query[0].second == 1.0);
  CHECK(report.per_query[1].second == 0.25);  // single positive at rank 2
  CHECK(report.mean_ap == 0.625);
  CHECK(report.tsv() == "qa\t1.000000\nqb\t0.250000\nmAP\t0.625000\n");

  CHECK_THROWS_AS(evaluate(dbc, qc, gt, SearchMode::kBinary), Error);
  qc.descriptors.names[1] = "stranger";
  CHECK_THROWS_WITH_AS(evaluate(dbc, qc, gt, SearchMode::kReal), doctest::Contains("stranger"), DataError);
}

TEST_CASE("merging descriptor and code files") {
  GlobalDescriptorFile a{2, {"z", "m"}, {{1, 0}, {0, 1}}};
  GlobalDescriptorFile b{2, {"a"}, {{1, 1}}};
  const std::vector<GlobalDescriptorFile> parts{a, b};
  const auto merged = merge_descriptors(parts);
  CHECK(merged.names == std::vector<std::string>{"a", "m", "z"});
  CHECK(merged.vectors[1] == std::vector<float>{0, 1});

  const std::vector<GlobalDescriptorFile> dup{a, a};
  CHECK_THROWS_AS(merge_descriptors(dup), DataError);
  const std::vector<GlobalDescriptorFile> mixed{a, GlobalDescriptorFile{3, {"q"}, {{1, 2, 3}}}};
  CHECK_THROWS_AS(merge_descriptors(mixed), DataError);

  const std::vector<BinaryCodeFile> codes{BinaryCodeFile{64, {"y"}, {{1}}}, BinaryCodeFile{64, {"x"}, {{2}}}};
  const auto mc = merge_codes(codes);
  CHECK(mc.names == std::vector<std::string>{"x", "y"});
  CHECK(mc.codes[0] == BinaryCode{2});
  const std::vector<BinaryCodeFile> widths{BinaryCodeFile{64, {"y"}, {{1}}}, BinaryCodeFile{128, {"x"}, {{2, 0}}}};
  CHECK_THROWS_AS(merge_codes(widths), DataError);
}
