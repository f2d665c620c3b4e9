#pragma once

// Binary checkpoint container. Layout (all integers little-endian):
//   magic "RDSGAN-CKPT"
//   u32 format version (currently 1)
//   per tensor: u32 name length, UTF-8 name, u32 rank, u64 extents[rank],
//               raw IEEE-754 little-endian 32-bit values (row-major)
//   u32 CRC-32 of all preceding bytes
// Values are stored in 32-bit regardless of the in-memory scalar type.

#include <cstdint>
#include <string>
#include <vector>

#include "rdsgan/model.hpp"

namespace rdsgan {

inline constexpr char kCheckpointMagic[] = "RDSGAN-CKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensorF32 {
  std::string name;
  int rank = 2;
  std::vector<std::uint64_t> extents;
  std::vector<float> values;  // row-major
};

void write_checkpoint_file(const std::string& path, const std::vector<NamedTensorF32>& tensors);
std::vector<NamedTensorF32> read_checkpoint_file(const std::string& path);

template <typename S>
void save_checkpoint(const std::string& path, const Model<S>& model) {
  std::vector<NamedTensorF32> tensors;
  model.visit_params([&](const char* name, ParamGroup, int rank, const Matrix<S>& mat) {
    NamedTensorF32 t;
    t.name = name;
    t.rank = rank;
    if (rank == 1) {
      t.extents = {static_cast<std::uint64_t>(mat.rows())};
    } else {
      t.extents = {static_cast<std::uint64_t>(mat.rows()), static_cast<std::uint64_t>(mat.cols())};
    }
    t.values.resize(static_cast<std::size_t>(mat.size()));
    for (Index i = 0; i < mat.rows(); ++i)
      for (Index j = 0; j < mat.cols(); ++j)
        t.values[static_cast<std::size_t>(i * mat.cols() + j)] = static_cast<float>(mat(i, j));
    tensors.push_back(std::move(t));
  });
  write_checkpoint_file(path, tensors);
}

// Loads into a model already sized by its dims; every tensor must match by
// name and shape, or a DataError names the offender.
template <typename S>
void load_checkpoint(const std::string& path, Model<S>& model) {
  auto tensors = read_checkpoint_file(path);
  std::size_t cursor = 0;
  model.visit_params([&](const char* name, ParamGroup, int rank, Matrix<S>& mat) {
    if (cursor >= tensors.size()) {
      throw DataError(std::string("checkpoint: missing tensor ") + name);
    }
    const NamedTensorF32& t = tensors[cursor++];
    if (t.name != name) {
      throw DataError("checkpoint: expected tensor " + std::string(name) + ", found " + t.name);
    }
    const std::uint64_t rows = t.extents.empty() ? 0 : t.extents[0];
    const std::uint64_t cols = t.rank == 1 ? 1 : (t.extents.size() > 1 ? t.extents[1] : 0);
    if (t.rank != rank || rows != static_cast<std::uint64_t>(mat.rows()) ||
        cols != static_cast<std::uint64_t>(mat.cols())) {
      throw DataError("checkpoint: tensor " + t.name + " has shape " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", model expects " + std::to_string(mat.rows()) + "x" +
                      std::to_string(mat.cols()));
    }
    for (Index i = 0; i < mat.rows(); ++i)
      for (Index j = 0; j < mat.cols(); ++j)
        mat(i, j) = static_cast<S>(t.values[static_cast<std::size_t>(i * mat.cols() + j)]);
  });
  if (cursor != tensors.size()) {
    throw DataError("checkpoint: unexpected extra tensor " + tensors[cursor].name);
  }
}

}  // namespace rdsgan
