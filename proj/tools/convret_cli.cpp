#include "convret/log.hpp"
#include "convret/masking.hpp"
#include "convret/model.hpp"
#include "convret/pipeline.hpp"
#include "convret/retrieval_eval.hpp"
#include "convret/tensor_store.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace convret;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

// Pipeline flags shared by the subcommands that build or use a configuration.
// Values stay as strings until apply_setting so the config file and the flags
// go through one parser; flags are applied after the file.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
    // Preset first so explicit flags override its fields.
    const char* keys[][2] = {
        {"preset", "D512|D1024|D2048|D4096|D8064"},
        {"mask", "none|sift|sum|max"},
        {"layers", "comma-separated tensor suffixes to stack"},
        {"embed", "temb|vlad|fv"},
        {"agg", "sum|avg|max|democratic"},
        {"alpha", "power-normalization exponent in [0, 1]"},
        {"dim", "PCA dimension of local descriptors"},
        {"codebook-size", "number of centroids"},
        {"drop", "leading T-emb directions removed"},
        {"bits", "ITQ code length (0 disables hashing)"},
        {"whiten", "on|off"},
        {"rn", "on|off"},
        {"rn-dim", "RN output dimension (0 keeps all)"},
        {"seed", "random seed"},
        {"threads", "encoding workers (0 = all cores)"},
    };
    for (const auto& [key, help] : keys) {
      auto* opt = app->add_option("--" + std::string(key), values[key], help);
      if (std::string(key) == "bits") opt->check(CLI::IsMember({"0", "64", "128", "256", "512"}));
    }
  }

  PipelineConfig build() const {
    PipelineConfig cfg;
    if (!config_file.empty()) cfg = load_config_file(config_file);
    static const char* order[] = {"preset", "mask",  "layers", "embed", "agg", "alpha",  "dim",    "codebook-size",
                                  "drop",   "bits",  "whiten", "rn",    "rn-dim", "seed", "threads"};
    for (const char* key : order) {
      const auto it = values.find(key);
      if (it != values.end() && !it->second.empty()) apply_setting(cfg, key, it->second);
    }
    cfg.validate();
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("write failed: " + path.string());
}

int run_fit(const std::string& train, const std::string& out, const ConfigFlags& flags) {
  const PipelineConfig cfg = flags.build();
  const PipelineModel model = fit_pipeline(fs::path(train), cfg);
  save_model(model, out);
  std::cerr << "model written to " << out << " (descriptor dim " << cfg.final_dim();
  if (cfg.bits) std::cerr << ", " << cfg.bits << "-bit codes";
  std::cerr << ")\n";
  return 0;
}

int run_encode(const std::string& model_dir, const std::string& input, const std::string& gdf, const std::string& bcf,
               unsigned threads, bool timings) {
  PipelineModel model = load_model(model_dir);
  if (threads) model.config.threads = threads;
  if (gdf.empty() && bcf.empty()) throw ConfigError("encode: give --descriptors and/or --codes");
  if (!bcf.empty() && !model.itq) throw ConfigError("encode: --codes needs a model fitted with --bits");
  const EncodedCorpus encoded = encode_corpus(model, fs::path(input));
  if (!gdf.empty()) save_descriptors(encoded.descriptors, gdf);
  if (!bcf.empty()) save_codes(*encoded.codes, bcf);
  if (timings) std::cerr << encoded.timings.summary();
  return 0;
}

int run_index(const std::string& out, const std::vector<std::string>& inputs) {
  const std::string magic = peek_magic(inputs.front());
  for (const auto& in : inputs)
    if (peek_magic(in) != magic) throw DataError("index: inputs mix file types (" + in + ")");
  if (magic == "GDF1") {
    std::vector<GlobalDescriptorFile> parts;
    for (const auto& in : inputs) parts.push_back(load_descriptors(in));
    save_descriptors(merge_descriptors(parts), out);
  } else if (magic == "BCF1") {
    std::vector<BinaryCodeFile> parts;
    for (const auto& in : inputs) parts.push_back(load_codes(in));
    save_codes(merge_codes(parts), out);
  } else {
    throw ParseError(ParseErrorKind::kBadMagic, "index: " + inputs.front() + " is neither GDF1 nor BCF1");
  }
  return 0;
}

void print_ranking(const RankedList& list, bool distance) {
  std::size_t rank = 0;
  for (const auto& item : list.items) {
    if (distance)
      std::printf("%s\t%zu\t%s\t%u\n", list.query.c_str(), ++rank, item.name.c_str(),
                  static_cast<unsigned>(item.score));
    else
      std::printf("%s\t%zu\t%s\t%.6f\n", list.query.c_str(), ++rank, item.name.c_str(), item.score);
  }
}

int run_search(const std::string& index, const std::string& queries, std::size_t top_k) {
  const std::string magic = peek_magic(index);
  if (peek_magic(queries) != magic) throw DataError("search: index and queries are different file types");
  if (magic == "GDF1") {
    const auto db = load_descriptors(index);
    const auto q = load_descriptors(queries);
    if (q.dim != db.dim) throw DataError("search: query dim " + std::to_string(q.dim) + " != index dim " +
                                         std::to_string(db.dim));
    for (std::size_t i = 0; i < q.size(); ++i) print_ranking(search_cosine(db, q.vectors[i], top_k, q.names[i]), false);
  } else if (magic == "BCF1") {
    const auto db = load_codes(index);
    const auto q = load_codes(queries);
    if (q.bits != db.bits) throw DataError("search: query bits " + std::to_string(q.bits) + " != index bits " +
                                           std::to_string(db.bits));
    for (std::size_t i = 0; i < q.size(); ++i) print_ranking(search_hamming(db, q.codes[i], top_k, q.names[i]), true);
  } else {
    throw ParseError(ParseErrorKind::kBadMagic, "search: " + index + " is neither GDF1 nor BCF1");
  }
  return 0;
}

int run_eval_cmd(const std::string& model_dir, const std::string& db, const std::string& queries,
                 const std::string& gt, const std::string& mode, const std::string& report, unsigned threads,
                 bool timings) {
  PipelineModel model = load_model(model_dir);
  if (threads) model.config.threads = threads;
  const SearchMode search_mode = mode == "binary" ? SearchMode::kBinary : SearchMode::kReal;
  const EvalReport result = run_eval(model, db, queries, gt, search_mode);
  if (report.empty())
    std::cout << result.tsv();
  else
    write_text(report, result.tsv());
  if (timings) std::cerr << result.timings.summary();
  return 0;
}

int run_mask_stats(const std::string& input, const std::string& mask, const std::string& layers_csv,
                   std::size_t pair_cap, std::uint64_t seed, const std::string& dump) {
  PipelineConfig cfg;
  cfg.mask = parse_mask_kind(mask);
  if (!layers_csv.empty()) apply_setting(cfg, "layers", layers_csv);
  cfg.validate();

  std::vector<FeatureTensor> tensors;
  std::vector<KeypointList> keypoints;
  const auto names = list_corpus(input, cfg.layers);
  for (const auto& name : names) {
    ImageInput image = load_image(input, name, cfg);
    tensors.push_back(stack_hypercolumn(image.layers));
    if (cfg.mask == MaskKind::kSift) keypoints.push_back(std::move(*image.keypoints));
  }

  MaskStatsOptions options;
  options.pair_cap = pair_cap;
  options.seed = seed;
  const MaskStats stats = mask_stats(tensors, cfg.mask, keypoints, options);
  std::printf("mask\t%s\nimages\t%zu\nretained_fraction\t%.6f\nuncorrelated_fraction\t%.6f\n", mask.c_str(),
              stats.images, stats.retained_fraction, stats.uncorrelated_fraction);

  if (!dump.empty()) {
    fs::create_directories(dump);
    for (std::size_t i = 0; i < names.size(); ++i) {
      const KeypointList* kp = cfg.mask == MaskKind::kSift ? &keypoints[i] : nullptr;
      std::optional<SelectionMask> m;
      if (kp && kp->points.empty()) {
        warn("image '" + names[i] + "' has no keypoints; dumping the full grid");
      } else {
        m = compute_mask(tensors[i], cfg.mask, kp);
      }
      if (!m) {
        std::vector<GridCoord> all;
        for (std::uint32_t y = 1; y <= tensors[i].height(); ++y)
          for (std::uint32_t x = 1; x <= tensors[i].width(); ++x) all.push_back({x, y});
        m = SelectionMask(tensors[i].width(), tensors[i].height(), std::move(all));
      }
      std::ofstream os(fs::path(dump) / (names[i] + ".mask.txt"));
      write_mask_text(*m, os);
      if (!os) throw DataError("cannot write mask dump for " + names[i]);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Global image descriptors and binary codes from convolutional feature tensors"};
  app.require_subcommand(1);

  std::string train, model_dir, input, gdf, bcf, out, index, queries, db, gt, report, dump;
  std::string mode = "real", mask = "max", layers;
  std::vector<std::string> inputs;
  std::size_t top_k = 0, pair_cap = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool timings = false;

  ConfigFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "Fit every pipeline stage on a training corpus");
  fit->add_option("--train", train, "training tensor directory")->required()->check(CLI::ExistingDirectory);
  fit->add_option("--model", out, "output model directory")->required();
  fit_flags.add_to(fit);

  auto* encode = app.add_subcommand("encode", "Encode a tensor directory into descriptors and/or codes");
  encode->add_option("--model", model_dir, "model directory")->required()->check(CLI::ExistingDirectory);
  encode->add_option("--input", input, "tensor directory")->required()->check(CLI::ExistingDirectory);
  encode->add_option("--descriptors", gdf, "output GDF1 file");
  encode->add_option("--codes", bcf, "output BCF1 file");
  encode->add_option("--threads", threads, "encoding workers (0 = model setting)");
  encode->add_flag("--timings", timings, "print per-stage timings to stderr");

  auto* idx = app.add_subcommand("index", "Merge descriptor or code files into one index sorted by name");
  idx->add_option("--out", out, "output index file")->required();
  idx->add_option("inputs", inputs, "GDF1 or BCF1 files")->required()->check(CLI::ExistingFile);

  auto* search = app.add_subcommand("search", "Rank an index for every query; prints query, rank, item, score");
  search->add_option("--index", index, "GDF1 or BCF1 index")->required()->check(CLI::ExistingFile);
  search->add_option("--queries", queries, "query file of the same type")->required()->check(CLI::ExistingFile);
  search->add_option("--top-k", top_k, "items per query (0 = all)");

  auto* eval = app.add_subcommand("eval", "Encode database and queries, rank, and report mAP");
  eval->add_option("--model", model_dir, "model directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--db", db, "database tensor directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--queries", queries, "query tensor directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--gt", gt, "ground-truth directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--mode", mode, "real|binary")->check(CLI::IsMember({"real", "binary"}));
  eval->add_option("--report", report, "write the TSV here instead of stdout");
  eval->add_option("--threads", threads, "encoding workers (0 = model setting)");
  eval->add_flag("--timings", timings, "print per-stage timings to stderr");

  auto* stats = app.add_subcommand("mask-stats", "Retained and uncorrelated fractions of a mask over a corpus");
  stats->add_option("--input", input, "tensor directory")->required()->check(CLI::ExistingDirectory);
  stats->add_option("--mask", mask, "none|sift|sum|max");
  stats->add_option("--layers", layers, "comma-separated tensor suffixes to stack");
  stats->add_option("--pair-cap", pair_cap, "max sampled descriptor pairs per image");
  stats->add_option("--seed", seed, "pair sampling seed");
  stats->add_option("--dump", dump, "write each image's mask as text into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*fit) return run_fit(train, out, fit_flags);
    if (*encode) return run_encode(model_dir, input, gdf, bcf, threads, timings);
    if (*idx) return run_index(out, inputs);
    if (*search) return run_search(index, queries, top_k);
    if (*eval) return run_eval_cmd(model_dir, db, queries, gt, mode, report, threads, timings);
    if (*stats) return run_mask_stats(input, mask, layers, pair_cap, seed, dump);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
