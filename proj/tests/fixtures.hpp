#pragma once

#include "convret/log.hpp"
#include "convret/tensor_store.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("convret_" + tag + "_" + std::to_string(rd()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// Collects library warnings while alive.
class WarningCapture {
 public:
  WarningCapture() {
    previous_ = convret::set_warning_sink([this](const std::string& m) {
      std::lock_guard lock(mutex_);
      messages_.push_back(m);
    });
  }
  ~WarningCapture() { convret::set_warning_sink(previous_); }

  std::vector<std::string> messages() const {
    std::lock_guard lock(mutex_);
    return messages_;
  }
  bool contains(const std::string& needle) const {
    for (const auto& m : messages())
      if (m.find(needle) != std::string::npos) return true;
    return false;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> messages_;
  convret::WarningSink previous_;
};

inline convret::FeatureTensor random_tensor(std::uint32_t w, std::uint32_t h, std::uint32_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  convret::FeatureTensor t(w, h, k);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Images of one "scene" share a few part descriptors placed at random cells
// over a weak noisy background, so the max-activation cells carry the parts.
class ClusteredScenes {
 public:
  struct Options {
    std::uint32_t width = 6;
    std::uint32_t height = 6;
    std::uint32_t channels = 64;
    int scenes = 3;
    int parts = 3;       // parts shown per image
    int vocabulary = 0;  // distinct parts per scene; 0 means `parts`
    double part_noise = 0.08;
    double background = 0.1;
  };

  ClusteredScenes(Options options, std::uint64_t seed) : options_(options) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    prototypes_.resize(static_cast<std::size_t>(options_.scenes));
    for (auto& scene : prototypes_) {
      scene.resize(static_cast<std::size_t>(options_.vocabulary > 0 ? options_.vocabulary : options_.parts));
      for (auto& part : scene) {
        part.resize(options_.channels);
        for (auto& v : part) v = u(rng);
      }
    }
  }

  convret::FeatureTensor image(int scene, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> bg(0.0, options_.background);
    std::normal_distribution<double> noise(0.0, options_.part_noise);
    convret::FeatureTensor t(options_.width, options_.height, options_.channels);
    for (auto& v : t.data()) v = static_cast<float>(bg(rng));

    std::vector<std::uint32_t> cells(t.cells());
    for (std::uint32_t i = 0; i < cells.size(); ++i) cells[i] = i;
    std::shuffle(cells.begin(), cells.end(), rng);
    const auto& vocab = prototypes_[static_cast<std::size_t>(scene)];
    std::vector<std::size_t> shown(vocab.size());
    for (std::size_t i = 0; i < shown.size(); ++i) shown[i] = i;
    std::shuffle(shown.begin(), shown.end(), rng);
    for (int p = 0; p < options_.parts; ++p) {
      const std::uint32_t cell = cells[static_cast<std::size_t>(p)];
      const std::uint32_t x = cell % options_.width + 1;
      const std::uint32_t y = cell / options_.width + 1;
      const auto& proto = vocab[shown[static_cast<std::size_t>(p)]];
      for (std::uint32_t k = 0; k < options_.channels; ++k)
        t.at(x, y, k + 1) = static_cast<float>(std::max(0.0, proto[k] * (1.0 + noise(rng))));
    }
    return t;
  }

  const Options& options() const { return options_; }

 private:
  Options options_;
  std::vector<std::vector<std::vector<double>>> prototypes_;
};

inline void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream os(path);
  for (const auto& l : lines) os << l << '\n';
}

// Train / db / query / gt directories for a ClusteredScenes corpus.
// Database images are "s<scene>_<i>", queries "q<scene>_<j>"; each query's
// positives are the database images of its scene.
struct RetrievalCorpus {
  fs::path train, db, queries, gt;
};

inline RetrievalCorpus write_retrieval_corpus(const fs::path& root, const ClusteredScenes& scenes, int train_per_scene,
                                              int db_per_scene, int queries_per_scene, std::uint64_t seed) {
  RetrievalCorpus c{root / "train", root / "db", root / "queries", root / "gt"};
  for (const auto& d : {c.train, c.db, c.queries, c.gt}) fs::create_directories(d);
  std::mt19937_64 rng(seed);
  const int n_scenes = scenes.options().scenes;
  char name[64];
  for (int s = 0; s < n_scenes; ++s)
    for (int i = 0; i < train_per_scene; ++i) {
      std::snprintf(name, sizeof name, "t%d_%04d.cft", s, i);
      convret::save_tensor(scenes.image(s, rng), c.train / name);
    }
  for (int s = 0; s < n_scenes; ++s) {
    std::vector<std::string> good;
    for (int i = 0; i < db_per_scene; ++i) {
      std::snprintf(name, sizeof name, "s%d_%02d", s, i);
      good.emplace_back(name);
      convret::save_tensor(scenes.image(s, rng), c.db / (std::string(name) + ".cft"));
    }
    for (int j = 0; j < queries_per_scene; ++j) {
      std::snprintf(name, sizeof name, "q%d_%d", s, j);
      convret::save_tensor(scenes.image(s, rng), c.queries / (std::string(name) + ".cft"));
      const std::string id = "scene" + std::to_string(s) + "_" + std::to_string(j + 1);
      write_lines(c.gt / (id + "_good.txt"), good);
      write_lines(c.gt / (id + "_ok.txt"), {});
      write_lines(c.gt / (id + "_junk.txt"), {});
      write_lines(c.gt / (id + "_query.txt"), {"oxc1_" + std::string(name) + " 0 0 6 6"});
    }
  }
  return c;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace fixtures
