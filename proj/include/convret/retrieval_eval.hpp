#pragma once

#include "convret/common.hpp"
#include "convret/tensor_store.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace convret {

struct RankedItem {
  std::string name;
  double score = 0.0;  // cosine similarity, or Hamming distance for binary search
};

/// Items ordered by descending similarity (ascending distance), ties by name.
struct RankedList {
  std::string query;
  std::vector<RankedItem> items;
};

/// Exact linear scan by cosine similarity. top_k == 0 keeps every item.
RankedList search_cosine(const GlobalDescriptorFile& index, std::span<const float> query, std::size_t top_k = 0,
                         std::string query_name = {});

std::uint32_t hamming_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

/// Exact linear scan by Hamming distance (per-word popcount). top_k == 0 keeps every item.
RankedList search_hamming(const BinaryCodeFile& index, std::span<const std::uint64_t> query, std::size_t top_k = 0,
                          std::string query_name = {});

struct QueryGroundTruth {
  std::string id;          // file prefix, e.g. "all_souls_1"
  std::string image;       // query image name from <id>_query.txt
  std::array<double, 4> bbox{};
  std::set<std::string> positives;  // good and ok
  std::set<std::string> junk;
};

struct GroundTruth {
  std::map<std::string, QueryGroundTruth> queries;  // by id

  /// Looks up a query by id, then by query image name. Throws DataError naming it if absent.
  const QueryGroundTruth& at(const std::string& query) const;
  /// Positives non-empty and disjoint from junk for every query.
  void validate() const;
};

/// Trapezoidal AP after deleting junk items from the ranking.
double average_precision(const RankedList& ranked, const QueryGroundTruth& gt);

/// Unweighted mean of per-query AP; every list's query must be in gt.
double mean_ap(std::span<const RankedList> lists, const GroundTruth& gt);

/// Reads <q>_good.txt, <q>_ok.txt, <q>_junk.txt and <q>_query.txt per query.
/// A leading "oxc1_" on the query image name is stripped to match corpus names.
GroundTruth parse_oxford_gt(const std::filesystem::path& dir);

}  // namespace convret
