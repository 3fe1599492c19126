#pragma once

#include "convret/common.hpp"
#include "convret/tensor_store.hpp"

#include <cstdint>
#include <vector>

namespace convret {

/// Iterative quantization: centering, PCA to L dims, learned L x L rotation.
struct ItqModel {
  Vector mean;      // D
  Matrix pca;       // D x L, orthonormal columns
  Matrix rotation;  // L x L, orthogonal

  std::uint32_t bits() const { return static_cast<std::uint32_t>(pca.cols()); }
  Eigen::Index input_dim() const { return pca.rows(); }
};

enum class ItqInit { kRandom, kIdentity };

struct ItqOptions {
  int iterations = 50;
  std::uint64_t seed = 0;
  ItqInit init = ItqInit::kRandom;
};

struct ItqResult {
  ItqModel model;
  /// Quantization loss |B - V R|_F after each rotation update.
  std::vector<double> loss;
  /// max |R^T R - I| after each rotation update.
  std::vector<double> orthogonality_error;
  /// Codes B of the training set at the last iteration, entries +-1.
  Matrix codes;
};

/// Requires train.rows() > bits and bits <= train.cols().
ItqResult fit_itq_traced(const RowMatrix& train, std::uint32_t bits, const ItqOptions& options = {});
ItqModel fit_itq(const RowMatrix& train, std::uint32_t bits, const ItqOptions& options = {});

/// Projected coordinates ((v - mean)^T pca rotation).
Vector itq_project(const ItqModel& m, const Eigen::Ref<const Vector>& v);

/// Bit i set iff projected coordinate i >= 0.
BinaryCode encode_itq(const ItqModel& m, const Eigen::Ref<const Vector>& v);

/// Packs +-1 / sign decisions (value >= 0 -> 1) into little-endian 64-bit words.
BinaryCode pack_signs(const Eigen::Ref<const Vector>& values);

}  // namespace convret
