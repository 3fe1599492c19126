#include "convret/retrieval_eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace convret {

namespace {

void finish(RankedList& list, std::size_t top_k, bool ascending) {
  auto better = [ascending](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return ascending ? a.score < b.score : a.score > b.score;
    return a.name < b.name;
  };
  if (top_k > 0 && top_k < list.items.size()) {
    std::partial_sort(list.items.begin(), list.items.begin() + static_cast<std::ptrdiff_t>(top_k), list.items.end(),
                      better);
    list.items.resize(top_k);
  } else {
    std::sort(list.items.begin(), list.items.end(), better);
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("missing ground-truth file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

RankedList search_cosine(const GlobalDescriptorFile& index, std::span<const float> query, std::size_t top_k,
                         std::string query_name) {
  if (query.size() != index.dim)
    throw PreconditionError("search_cosine: query dim " + std::to_string(query.size()) + " != index dim " +
                            std::to_string(index.dim));
  double qnorm = 0.0;
  for (float v : query) qnorm += double{v} * v;
  qnorm = std::sqrt(qnorm);

  RankedList list{std::move(query_name), {}};
  list.items.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    double dot = 0.0;
    double norm = 0.0;
    for (std::size_t t = 0; t < index.dim; ++t) {
      const double x = index.vectors[i][t];
      dot += x * query[t];
      norm += x * x;
    }
    const double denom = qnorm * std::sqrt(norm);
    list.items.push_back({index.names[i], denom > 0.0 ? dot / denom : 0.0});
  }
  finish(list, top_k, false);
  return list;
}

std::uint32_t hamming_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  std::uint32_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += static_cast<std::uint32_t>(std::popcount(a[i] ^ b[i]));
  return d;
}

RankedList search_hamming(const BinaryCodeFile& index, std::span<const std::uint64_t> query, std::size_t top_k,
                          std::string query_name) {
  if (query.size() != words_for_bits(index.bits))
    throw PreconditionError("search_hamming: query has " + std::to_string(query.size() * 64) +
                            " bit capacity, index uses " + std::to_string(index.bits) + " bits");
  RankedList list{std::move(query_name), {}};
  list.items.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i)
    list.items.push_back({index.names[i], static_cast<double>(hamming_distance(index.codes[i], query))});
  finish(list, top_k, true);
  return list;
}

const QueryGroundTruth& GroundTruth::at(const std::string& query) const {
  if (auto it = queries.find(query); it != queries.end()) return it->second;
  for (const auto& [id, q] : queries)
    if (q.image == query) return q;
  throw DataError("query '" + query + "' not found in ground truth");
}

void GroundTruth::validate() const {
  for (const auto& [id, q] : queries) {
    if (q.positives.empty()) throw DataError("ground truth: query '" + id + "' has no positives");
    for (const auto& p : q.positives)
      if (q.junk.count(p))
        throw DataError("ground truth: query '" + id + "' lists '" + p + "' as both positive and junk");
  }
}

double average_precision(const RankedList& ranked, const QueryGroundTruth& gt) {
  if (gt.positives.empty()) throw DataError("average_precision: query '" + gt.id + "' has no positives");
  double ap = 0.0;
  double prev_recall = 0.0;
  double prev_precision = 1.0;
  std::size_t hits = 0;
  std::size_t rank = 0;
  const auto total = static_cast<double>(gt.positives.size());
  for (const auto& item : ranked.items) {
    if (gt.junk.count(item.name)) continue;
    ++rank;
    if (gt.positives.count(item.name)) ++hits;
    const double recall = static_cast<double>(hits) / total;
    const double precision = static_cast<double>(hits) / static_cast<double>(rank);
    ap += (recall - prev_recall) * (precision + prev_precision) / 2.0;
    prev_recall = recall;
    prev_precision = precision;
  }
  return ap;
}

double mean_ap(std::span<const RankedList> lists, const GroundTruth& gt) {
  if (lists.empty()) throw DataError("mean_ap: no ranked lists");
  double sum = 0.0;
  for (const auto& list : lists) sum += average_precision(list, gt.at(list.query));
  return sum / static_cast<double>(lists.size());
}

GroundTruth parse_oxford_gt(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("ground-truth directory not found: " + dir.string());
  constexpr std::string_view kSuffix = "_query.txt";
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > kSuffix.size() && name.ends_with(kSuffix))
      ids.push_back(name.substr(0, name.size() - kSuffix.size()));
  }
  std::sort(ids.begin(), ids.end());

  GroundTruth gt;
  for (const auto& id : ids) {
    QueryGroundTruth q;
    q.id = id;
    const auto query_lines = read_lines(dir / (id + "_query.txt"));
    if (query_lines.size() != 1) throw DataError("malformed query file for '" + id + "': expected one line");
    std::istringstream ls(query_lines.front());
    std::string extra;
    if (!(ls >> q.image >> q.bbox[0] >> q.bbox[1] >> q.bbox[2] >> q.bbox[3]) || (ls >> extra))
      throw DataError("malformed query line for '" + id + "': '" + query_lines.front() + "'");
    if (q.image.starts_with("oxc1_")) q.image = q.image.substr(5);
    for (const char* kind : {"_good.txt", "_ok.txt"})
      for (auto& name : read_lines(dir / (id + kind))) q.positives.insert(std::move(name));
    for (auto& name : read_lines(dir / (id + "_junk.txt"))) q.junk.insert(std::move(name));
    gt.queries.emplace(id, std::move(q));
  }
  if (gt.queries.empty()) throw DataError("no *_query.txt files in " + dir.string());
  gt.validate();
  return gt;
}

}  // namespace convret
