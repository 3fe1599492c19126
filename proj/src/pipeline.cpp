#include "convret/pipeline.hpp"

#include "convret/aggregation.hpp"
#include "convret/linalg.hpp"
#include "convret/log.hpp"
#include "convret/masking.hpp"
#include "convret/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace convret {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kCodebookStage = 1;
constexpr std::uint64_t kItqStage = 2;
constexpr Eigen::Index kEmbeddingChunk = 2048;

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - start_).count();
    start_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string tensor_file(const std::string& name, const std::string& layer) {
  return layer.empty() ? name + ".cft" : name + "." + layer + ".cft";
}

RowMatrix stack_rows(const std::vector<RowMatrix>& parts, Eigen::Index cols) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  RowMatrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  return out;
}

RowMatrix stack_vectors(const std::vector<Vector>& parts) {
  RowMatrix out(static_cast<Eigen::Index>(parts.size()), parts.empty() ? 0 : parts.front().size());
  for (std::size_t i = 0; i < parts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = parts[i].transpose();
  return out;
}

void round_model(PcaModel& m) {
  m.mean = to_float_precision(m.mean);
  m.basis = to_float_precision(m.basis);
  m.eigenvalues = to_float_precision(m.eigenvalues);
}

RowMatrix embed_local(const PipelineModel& model, const DescriptorSet& local) {
  switch (model.config.embed) {
    case EmbedKind::kTemb:
      return embed_temb_rows(*model.temb, embed_temb_raw_rows(*model.codebook, local));
    case EmbedKind::kVlad:
      return embed_vlad_rows(*model.codebook, local);
    case EmbedKind::kFv:
      return embed_fv_rows(*model.gmm, local);
  }
  return {};
}

// Degenerate embeddings (a descriptor sitting exactly on its centroid) come
// out as zero rows; democratic pooling only accepts unit rows, so they are dropped.
Vector aggregate_embedded(const RowMatrix& embedded, const AggregationConfig& agg) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < embedded.rows(); ++i)
    if (embedded.row(i).squaredNorm() > 0.0) keep.push_back(i);
  if (keep.empty()) return Vector::Zero(embedded.cols());
  if (keep.size() == static_cast<std::size_t>(embedded.rows())) return aggregate(embedded, agg);
  RowMatrix kept(static_cast<Eigen::Index>(keep.size()), embedded.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) kept.row(static_cast<Eigen::Index>(i)) = embedded.row(keep[i]);
  return aggregate(kept, agg);
}

// Mean and 1/n covariance of raw triangulation embeddings, computed in
// fixed-size chunks so the n x d|C| matrix is never materialized.
std::pair<Vector, Matrix> raw_temb_moments(const Codebook& codebook, const DescriptorSet& local) {
  const Eigen::Index dim = codebook.dim() * codebook.size();
  const Eigen::Index n = local.rows();
  Vector sum = Vector::Zero(dim);
  for (Eigen::Index at = 0; at < n; at += kEmbeddingChunk) {
    const Eigen::Index len = std::min(kEmbeddingChunk, n - at);
    sum += embed_temb_raw_rows(codebook, DescriptorSet(local.middleRows(at, len))).colwise().sum().transpose();
  }
  Vector mean = sum / static_cast<double>(n);
  Matrix cov = Matrix::Zero(dim, dim);
  for (Eigen::Index at = 0; at < n; at += kEmbeddingChunk) {
    const Eigen::Index len = std::min(kEmbeddingChunk, n - at);
    const RowMatrix centered =
        embed_temb_raw_rows(codebook, DescriptorSet(local.middleRows(at, len))).rowwise() - mean.transpose();
    cov.noalias() += centered.transpose() * centered;
  }
  cov /= static_cast<double>(n);
  cov = (cov + cov.transpose()) * 0.5;
  return {std::move(mean), std::move(cov)};
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&](unsigned worker_id) {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i, worker_id);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
        return;
      }
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

StageTimings& StageTimings::operator+=(const StageTimings& o) {
  load += o.load;
  mask += o.mask;
  pca += o.pca;
  embed += o.embed;
  aggregate += o.aggregate;
  postprocess += o.postprocess;
  hash += o.hash;
  search += o.search;
  return *this;
}

std::string StageTimings::summary() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "stage\tseconds\n"
     << "load\t" << load << '\n'
     << "mask\t" << mask << '\n'
     << "pca\t" << pca << '\n'
     << "embed\t" << embed << '\n'
     << "aggregate\t" << aggregate << '\n'
     << "postprocess\t" << postprocess << '\n'
     << "hash\t" << hash << '\n'
     << "search\t" << search << '\n';
  return os.str();
}

std::vector<std::string> list_corpus(const fs::path& dir, const std::vector<std::string>& layers) {
  if (!fs::is_directory(dir)) throw DataError("corpus directory not found: " + dir.string());
  std::vector<std::string> suffixes;
  if (layers.empty()) suffixes.push_back(".cft");
  for (const auto& layer : layers) suffixes.push_back("." + layer + ".cft");
  std::set<std::string> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string file = entry.path().filename().string();
    for (const auto& suffix : suffixes)
      if (file.size() > suffix.size() && file.ends_with(suffix)) found.insert(file.substr(0, file.size() - suffix.size()));
  }
  const std::vector<std::string> names(found.begin(), found.end());
  for (const auto& name : names)
    for (const auto& layer : layers)
      if (!fs::exists(dir / tensor_file(name, layer)))
        throw DataError("image '" + name + "' lacks layer file " + tensor_file(name, layer));
  if (names.empty()) throw DataError("no tensor files (*" + suffixes.front() + ") in " + dir.string());
  return names;
}

ImageInput load_image(const fs::path& dir, const std::string& name, const PipelineConfig& cfg) {
  ImageInput image;
  image.name = name;
  if (cfg.layers.empty()) {
    image.layers.push_back(load_tensor(dir / tensor_file(name, "")));
  } else {
    for (const auto& layer : cfg.layers) image.layers.push_back(load_tensor(dir / tensor_file(name, layer)));
  }
  const fs::path kp = dir / (name + ".kpt");
  if (fs::exists(kp)) {
    image.keypoints = load_keypoints(kp);
  } else if (cfg.mask == MaskKind::kSift) {
    throw DataError("SIFT mask needs keypoints; missing " + kp.string());
  }
  return image;
}

std::vector<ImageInput> load_corpus(const fs::path& dir, const PipelineConfig& cfg) {
  std::vector<ImageInput> out;
  for (const auto& name : list_corpus(dir, cfg.layers)) out.push_back(load_image(dir, name, cfg));
  return out;
}

DescriptorSet masked_descriptors(const ImageInput& image, const PipelineConfig& cfg) {
  const std::size_t expected_layers = cfg.layers.empty() ? 1 : cfg.layers.size();
  if (image.layers.size() != expected_layers)
    throw DataError("image '" + image.name + "' has " + std::to_string(image.layers.size()) +
                    " layer tensors, configuration expects " + std::to_string(expected_layers));
  const FeatureTensor stacked = stack_hypercolumn(image.layers);

  std::optional<SelectionMask> mask;
  if (cfg.mask == MaskKind::kSift) {
    if (!image.keypoints) throw DataError("SIFT mask needs keypoints for image '" + image.name + "'");
    if (image.keypoints->points.empty()) {
      warn("image '" + image.name + "' has no keypoints; SIFT mask falls back to all locations");
    } else {
      mask = compute_sift_mask(stacked, *image.keypoints);
    }
  } else {
    mask = compute_mask(stacked, cfg.mask, nullptr);
  }
  return apply_mask(stacked, mask);
}

PipelineModel fit_pipeline(std::span<const ImageInput> train, const PipelineConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw DataError("fit: empty training corpus");

  PipelineModel model;
  model.config = cfg;

  std::vector<RowMatrix> raw(train.size());
  parallel_for(train.size(), cfg.threads,
               [&](std::size_t i, unsigned) { raw[i] = masked_descriptors(train[i], cfg); });
  const Eigen::Index channels = raw.front().cols();
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (raw[i].cols() != channels)
      throw DataError("fit: image '" + train[i].name + "' has " + std::to_string(raw[i].cols()) +
                      " channels, expected " + std::to_string(channels));
  if (cfg.dim > channels)
    throw ConfigError("dim (" + std::to_string(cfg.dim) + ") exceeds input channels (" + std::to_string(channels) +
                      ")");
  model.input_channels = static_cast<std::uint32_t>(channels);

  model.pca = fit_pca(stack_rows(raw, channels), cfg.dim);
  round_model(model.pca);

  std::vector<RowMatrix> local(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) local[i] = apply_pca(model.pca, raw[i], true);
  raw.clear();
  const RowMatrix all_local = stack_rows(local, cfg.dim);

  const std::uint64_t codebook_seed = derive_seed(cfg.seed, kCodebookStage);
  if (cfg.embed == EmbedKind::kFv) {
    DiagonalGmm g = fit_gmm(all_local, cfg.codebook_size, codebook_seed);
    g.weights = to_float_precision(Vector(g.weights));
    g.means = to_float_precision(Matrix(g.means));
    g.variances = to_float_precision(Matrix(g.variances));
    model.gmm = std::move(g);
  } else {
    Codebook c = fit_kmeans(all_local, cfg.codebook_size, codebook_seed);
    c.centroids = to_float_precision(Matrix(c.centroids));
    model.codebook = std::move(c);
  }

  if (cfg.embed == EmbedKind::kTemb) {
    if (all_local.rows() <= static_cast<Eigen::Index>(cfg.drop))
      throw DataError("fit: T-emb projection needs more than drop=" + std::to_string(cfg.drop) +
                      " training descriptors, got " + std::to_string(all_local.rows()));
    auto [mean, cov] = raw_temb_moments(*model.codebook, all_local);
    TembProjection p = temb_projection_from_moments(std::move(mean), cov, cfg.drop);
    p.mean = to_float_precision(p.mean);
    p.drop_basis = to_float_precision(p.drop_basis);
    p.keep_basis = to_float_precision(p.keep_basis);
    model.temb = std::move(p);
  }

  std::vector<Vector> aggregated(train.size());
  parallel_for(train.size(), cfg.threads, [&](std::size_t i, unsigned) {
    aggregated[i] = power_normalize(aggregate_embedded(embed_local(model, local[i]), cfg.agg), cfg.alpha);
  });
  RowMatrix post = stack_vectors(aggregated);

  if (cfg.rn.enabled) {
    const auto d_out = static_cast<Eigen::Index>(cfg.rn.dim == 0 ? cfg.embedding_dim() : cfg.rn.dim);
    RnModel rn = fit_rn(post, d_out, cfg.rn.whiten, cfg.rn.epsilon);
    rn.mean = to_float_precision(rn.mean);
    rn.rotation = to_float_precision(rn.rotation);
    rn.eigenvalues = to_float_precision(rn.eigenvalues);
    for (Eigen::Index i = 0; i < post.rows(); ++i) post.row(i) = apply_rn(rn, post.row(i).transpose()).transpose();
    model.rn = std::move(rn);
  }

  if (cfg.bits > 0) {
    ItqOptions options;
    options.iterations = cfg.itq_iterations;
    options.seed = derive_seed(cfg.seed, kItqStage);
    ItqModel itq = fit_itq(post, cfg.bits, options);
    itq.mean = to_float_precision(itq.mean);
    itq.pca = to_float_precision(itq.pca);
    itq.rotation = to_float_precision(itq.rotation);
    model.itq = std::move(itq);
  }
  return model;
}

PipelineModel fit_pipeline(const fs::path& train_dir, const PipelineConfig& cfg) {
  cfg.validate();
  return fit_pipeline(load_corpus(train_dir, cfg), cfg);
}

EncodedImage encode_image(const PipelineModel& model, const ImageInput& image, StageTimings* timings) {
  const auto& cfg = model.config;
  Stopwatch clock;
  StageTimings local_timings;

  const DescriptorSet raw = masked_descriptors(image, cfg);
  if (raw.cols() != static_cast<Eigen::Index>(model.input_channels))
    throw DataError("layer mismatch for image '" + image.name + "': " + std::to_string(raw.cols()) +
                    " channels, model expects " + std::to_string(model.input_channels));
  local_timings.mask = clock.lap();

  const DescriptorSet local = apply_pca(model.pca, raw, true);
  local_timings.pca = clock.lap();

  const RowMatrix embedded = embed_local(model, local);
  local_timings.embed = clock.lap();

  const Vector aggregated = aggregate_embedded(embedded, cfg.agg);
  local_timings.aggregate = clock.lap();

  EncodedImage out;
  out.descriptor = power_normalize(aggregated, cfg.alpha);
  if (model.rn) out.descriptor = apply_rn(*model.rn, out.descriptor);
  local_timings.postprocess = clock.lap();

  if (model.itq) out.code = encode_itq(*model.itq, out.descriptor);
  local_timings.hash = clock.lap();

  if (timings) *timings += local_timings;
  return out;
}

namespace {

EncodedCorpus encode_indexed(const PipelineModel& model, std::size_t n, const std::vector<std::string>& names,
                             const std::function<ImageInput(std::size_t, StageTimings&)>& get) {
  std::vector<EncodedImage> encoded(n);
  const unsigned threads = model.config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                                     : model.config.threads;
  std::vector<StageTimings> per_worker(threads);
  parallel_for(n, threads, [&](std::size_t i, unsigned worker) {
    const ImageInput image = get(i, per_worker[worker]);
    encoded[i] = encode_image(model, image, &per_worker[worker]);
  });

  EncodedCorpus out;
  for (const auto& t : per_worker) out.timings += t;
  out.descriptors.dim = static_cast<std::uint32_t>(model.config.final_dim());
  if (model.itq) {
    out.codes.emplace();
    out.codes->bits = model.itq->bits();
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.descriptors.names.push_back(names[i]);
    const Vector& d = encoded[i].descriptor;
    out.descriptors.vectors.emplace_back(d.data(), d.data() + d.size());
    std::transform(d.data(), d.data() + d.size(), out.descriptors.vectors.back().begin(),
                   [](double v) { return static_cast<float>(v); });
    if (out.codes) {
      out.codes->names.push_back(names[i]);
      out.codes->codes.push_back(*encoded[i].code);
    }
  }
  return out;
}

}  // namespace

EncodedCorpus encode_corpus(const PipelineModel& model, std::span<const ImageInput> images) {
  std::vector<std::string> names;
  for (const auto& image : images) names.push_back(image.name);
  return encode_indexed(model, images.size(), names,
                        [&](std::size_t i, StageTimings&) { return images[i]; });
}

EncodedCorpus encode_corpus(const PipelineModel& model, const fs::path& dir) {
  const auto names = list_corpus(dir, model.config.layers);
  return encode_indexed(model, names.size(), names, [&](std::size_t i, StageTimings& timings) {
    Stopwatch clock;
    ImageInput image = load_image(dir, names[i], model.config);
    timings.load += clock.lap();
    return image;
  });
}

std::string EvalReport::tsv() const {
  std::string out;
  char buf[64];
  for (const auto& [query, ap] : per_query) {
    std::snprintf(buf, sizeof buf, "%.6f", ap);
    out += query + "\t" + buf + "\n";
  }
  std::snprintf(buf, sizeof buf, "%.6f", mean_ap);
  out += std::string("mAP\t") + buf + "\n";
  return out;
}

EvalReport evaluate(const EncodedCorpus& db, const EncodedCorpus& queries, const GroundTruth& gt, SearchMode mode) {
  if (mode == SearchMode::kBinary && (!db.codes || !queries.codes))
    throw ConfigError("binary evaluation needs a model with hashing enabled (bits > 0)");
  Stopwatch clock;
  std::vector<RankedList> lists;
  for (std::size_t q = 0; q < queries.descriptors.size(); ++q) {
    const std::string& name = queries.descriptors.names[q];
    gt.at(name);  // fail early, naming the query
    if (mode == SearchMode::kReal) {
      lists.push_back(search_cosine(db.descriptors, queries.descriptors.vectors[q], 0, name));
    } else {
      lists.push_back(search_hamming(*db.codes, queries.codes->codes[q], 0, name));
    }
  }
  EvalReport report;
  report.timings = db.timings;
  report.timings += queries.timings;
  for (const auto& list : lists) report.per_query.emplace_back(list.query, average_precision(list, gt.at(list.query)));
  std::sort(report.per_query.begin(), report.per_query.end());
  report.mean_ap = mean_ap(lists, gt);
  report.timings.search = clock.lap();
  return report;
}

EvalReport run_eval(const PipelineModel& model, const fs::path& db_dir, const fs::path& query_dir,
                    const fs::path& gt_dir, SearchMode mode) {
  if (mode == SearchMode::kBinary && !model.itq)
    throw ConfigError("binary evaluation needs a model with hashing enabled (bits > 0)");
  const GroundTruth gt = parse_oxford_gt(gt_dir);
  const EncodedCorpus queries = encode_corpus(model, query_dir);
  for (const auto& name : queries.descriptors.names) gt.at(name);
  const EncodedCorpus db = encode_corpus(model, db_dir);
  return evaluate(db, queries, gt, mode);
}

namespace {

template <typename File, typename Items>
File merge_files(std::span<const File> parts, Items File::*items, std::uint32_t File::*width, const char* what) {
  File out;
  if (parts.empty()) throw DataError(std::string("index: no ") + what + " files to merge");
  out.*width = parts.front().*width;
  std::vector<std::pair<std::string, const typename Items::value_type*>> all;
  for (const auto& part : parts) {
    if (part.*width != out.*width) throw DataError(std::string("index: ") + what + " files disagree on width");
    for (std::size_t i = 0; i < part.names.size(); ++i) all.emplace_back(part.names[i], &(part.*items)[i]);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < all.size(); ++i)
    if (all[i].first == all[i - 1].first) throw DataError("index: duplicate item name '" + all[i].first + "'");
  for (const auto& [name, item] : all) {
    out.names.push_back(name);
    (out.*items).push_back(*item);
  }
  return out;
}

}  // namespace

GlobalDescriptorFile merge_descriptors(std::span<const GlobalDescriptorFile> parts) {
  return merge_files(parts, &GlobalDescriptorFile::vectors, &GlobalDescriptorFile::dim, "descriptor");
}

BinaryCodeFile merge_codes(std::span<const BinaryCodeFile> parts) {
  return merge_files(parts, &BinaryCodeFile::codes, &BinaryCodeFile::bits, "code");
}

}  // namespace convret
