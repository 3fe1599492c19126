#include "convret/masking.hpp"

#include "convret/log.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace convret {

SelectionMask::SelectionMask(std::uint32_t width, std::uint32_t height, std::vector<GridCoord> coords)
    : width_(width), height_(height), coords_(std::move(coords)) {
  for (const auto& c : coords_) {
    if (c.x < 1 || c.x > width_ || c.y < 1 || c.y > height_) {
      throw PreconditionError("mask coordinate (" + std::to_string(c.x) + "," + std::to_string(c.y) +
                              ") outside " + std::to_string(width_) + "x" + std::to_string(height_) + " grid");
    }
  }
  std::sort(coords_.begin(), coords_.end());
  coords_.erase(std::unique(coords_.begin(), coords_.end()), coords_.end());
}

std::int64_t round_half_away(double v) { return static_cast<std::int64_t>(std::round(v)); }

SelectionMask compute_sift_mask(const FeatureTensor& t, const KeypointList& kp) {
  if (kp.points.empty()) throw EmptyMaskError("SIFT mask: no keypoints");
  if (kp.image_width == 0 || kp.image_height == 0) throw PreconditionError("SIFT mask: zero image size");
  const auto clamp_to = [](std::int64_t v, std::uint32_t hi) {
    return static_cast<std::uint32_t>(std::clamp<std::int64_t>(v, 1, hi));
  };
  std::vector<GridCoord> coords;
  coords.reserve(kp.points.size());
  for (const auto& p : kp.points) {
    const double gx = static_cast<double>(p.x) * t.width() / kp.image_width;
    const double gy = static_cast<double>(p.y) * t.height() / kp.image_height;
    coords.push_back({clamp_to(round_half_away(gx), t.width()), clamp_to(round_half_away(gy), t.height())});
  }
  return SelectionMask(t.width(), t.height(), std::move(coords));
}

SelectionMask compute_max_mask(const FeatureTensor& t) {
  const std::uint32_t k_count = t.channels();
  std::vector<float> best(k_count, 0.0f);
  std::vector<GridCoord> best_at(k_count);
  bool first = true;
  // Row-major scan with strict '>' keeps the smallest index on ties.
  for (std::uint32_t y = 1; y <= t.height(); ++y) {
    for (std::uint32_t x = 1; x <= t.width(); ++x) {
      const auto cell = t.cell(x, y);
      for (std::uint32_t k = 0; k < k_count; ++k) {
        if (first || cell[k] > best[k]) {
          best[k] = cell[k];
          best_at[k] = {x, y};
        }
      }
      first = false;
    }
  }
  return SelectionMask(t.width(), t.height(), std::move(best_at));
}

SelectionMask compute_sum_mask(const FeatureTensor& t) {
  std::vector<double> sums;
  sums.reserve(t.cells());
  for (std::uint32_t y = 1; y <= t.height(); ++y) {
    for (std::uint32_t x = 1; x <= t.width(); ++x) {
      double s = 0.0;
      for (float v : t.cell(x, y)) s += v;
      sums.push_back(s);
    }
  }
  std::vector<double> sorted = sums;
  const std::size_t median_rank = (sorted.size() + 1) / 2;  // ceil(m/2), 1-based
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(median_rank - 1), sorted.end());
  const double threshold = sorted[median_rank - 1];

  std::vector<GridCoord> coords;
  std::size_t i = 0;
  for (std::uint32_t y = 1; y <= t.height(); ++y)
    for (std::uint32_t x = 1; x <= t.width(); ++x, ++i)
      if (sums[i] >= threshold) coords.push_back({x, y});
  return SelectionMask(t.width(), t.height(), std::move(coords));
}

DescriptorSet apply_mask(const FeatureTensor& t, const std::optional<SelectionMask>& mask) {
  const auto k = static_cast<Eigen::Index>(t.channels());
  const auto gather = [&](DescriptorSet& out, Eigen::Index row, const GridCoord& c) {
    const auto cell = t.cell(c.x, c.y);
    for (Eigen::Index j = 0; j < k; ++j) out(row, j) = cell[static_cast<std::size_t>(j)];
  };

  if (!mask) {
    DescriptorSet out(static_cast<Eigen::Index>(t.cells()), k);
    Eigen::Index row = 0;
    for (std::uint32_t y = 1; y <= t.height(); ++y)
      for (std::uint32_t x = 1; x <= t.width(); ++x) gather(out, row++, {x, y});
    return out;
  }

  if (mask->width() != t.width() || mask->height() != t.height())
    throw PreconditionError("apply_mask: mask grid does not match tensor grid");
  DescriptorSet out(static_cast<Eigen::Index>(mask->size()), k);
  Eigen::Index row = 0;
  for (const auto& c : mask->coords()) gather(out, row++, c);
  return out;
}

FeatureTensor stack_hypercolumn(std::span<const FeatureTensor> tensors) {
  if (tensors.empty()) throw PreconditionError("stack_hypercolumn: no tensors");
  const auto w = tensors.front().width();
  const auto h = tensors.front().height();
  std::uint32_t total = 0;
  for (const auto& t : tensors) {
    if (t.width() != w || t.height() != h)
      throw PreconditionError("stack_hypercolumn: spatial shape mismatch");
    total += t.channels();
  }
  if (tensors.size() == 1) return tensors.front();

  FeatureTensor out(w, h, total);
  for (std::uint32_t y = 1; y <= h; ++y) {
    for (std::uint32_t x = 1; x <= w; ++x) {
      std::uint32_t k = 1;
      for (const auto& t : tensors)
        for (float v : t.cell(x, y)) out.at(x, y, k++) = v;
    }
  }
  return out;
}

std::optional<SelectionMask> compute_mask(const FeatureTensor& t, MaskKind kind, const KeypointList* kp) {
  switch (kind) {
    case MaskKind::kNone:
      return std::nullopt;
    case MaskKind::kSum:
      return compute_sum_mask(t);
    case MaskKind::kMax:
      return compute_max_mask(t);
    case MaskKind::kSift:
      if (kp == nullptr) throw DataError("SIFT mask requires keypoints");
      return compute_sift_mask(t, *kp);
  }
  return std::nullopt;
}

MaskStats mask_stats(std::span<const FeatureTensor> corpus, MaskKind kind, std::span<const KeypointList> keypoints,
                     const MaskStatsOptions& options) {
  if (corpus.empty()) throw PreconditionError("mask_stats: empty corpus");
  if (kind == MaskKind::kSift && keypoints.size() != corpus.size())
    throw DataError("mask_stats: SIFT mask needs one keypoint list per tensor");

  std::mt19937_64 rng(options.seed);
  MaskStats stats;
  double retained_sum = 0.0;
  double band_sum = 0.0;
  std::size_t band_images = 0;

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& t = corpus[i];
    std::optional<SelectionMask> mask;
    try {
      mask = compute_mask(t, kind, kind == MaskKind::kSift ? &keypoints[i] : nullptr);
    } catch (const EmptyMaskError&) {
      warn("mask_stats: image " + std::to_string(i) + " has no keypoints, using all locations");
    }
    const std::size_t kept = mask ? mask->size() : t.cells();
    retained_sum += static_cast<double>(kept) / static_cast<double>(t.cells());

    DescriptorSet x = apply_mask(t, mask);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double norm = x.row(r).norm();
      if (norm > 0) x.row(r) /= norm;
    }
    const auto n = static_cast<std::size_t>(x.rows());
    if (n < 2) continue;

    const std::size_t all_pairs = n * (n - 1) / 2;
    std::size_t in_band = 0;
    std::size_t counted = 0;
    const auto test_pair = [&](std::size_t a, std::size_t b) {
      const double dot = x.row(static_cast<Eigen::Index>(a)).dot(x.row(static_cast<Eigen::Index>(b)));
      if (dot >= -options.band && dot <= options.band) ++in_band;
      ++counted;
    };
    if (all_pairs <= options.pair_cap) {
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) test_pair(a, b);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      while (counted < options.pair_cap) {
        const std::size_t a = pick(rng);
        const std::size_t b = pick(rng);
        if (a != b) test_pair(a, b);
      }
    }
    band_sum += static_cast<double>(in_band) / static_cast<double>(counted);
    ++band_images;
  }

  stats.images = corpus.size();
  stats.retained_fraction = retained_sum / static_cast<double>(corpus.size());
  stats.uncorrelated_fraction = band_images ? band_sum / static_cast<double>(band_images) : 0.0;
  return stats;
}

void write_mask_text(const SelectionMask& m, std::ostream& os) {
  os << "# " << m.width() << ' ' << m.height() << '\n';
  for (const auto& c : m.coords()) os << c.x << ' ' << c.y << '\n';
}

SelectionMask read_mask_text(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw DataError("mask dump: missing '# W H' header");
  std::istringstream header(line.substr(2));
  std::uint32_t w = 0;
  std::uint32_t h = 0;
  if (!(header >> w >> h)) throw DataError("mask dump: malformed header");
  std::vector<GridCoord> coords;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    GridCoord c;
    if (!(ls >> c.x >> c.y)) throw DataError("mask dump: malformed line '" + line + "'");
    coords.push_back(c);
  }
  return SelectionMask(w, h, std::move(coords));
}

}  // namespace convret
