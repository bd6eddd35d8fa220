#pragma once

// Named-tensor container. Layout (safetensors-style):
//   u64 little-endian N | N bytes of JSON index | raw little-endian payloads
// The index maps each name to {"dtype": "F32"|"F64", "shape": [...], "data_offsets": [begin, end]}
// with offsets relative to the start of the payload block; "__metadata__" holds free-form JSON.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ele/graph.hpp"

namespace ele {

enum class DType { F32, F64 };

template <typename Scalar>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }

/// Dense row-major tensor.
template <typename Scalar>
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<Scalar> data;

  std::int64_t numel() const;
  void validate() const;

  static Tensor from_matrix(const Matrix<Scalar>& m);
  /// Stacks equally sized matrices into a rank-3 tensor (count x rows x cols).
  static Tensor from_stack(const std::vector<Matrix<Scalar>>& stack);
  Matrix<Scalar> to_matrix() const;
  std::vector<Matrix<Scalar>> to_stack() const;
};

class TensorFile {
 public:
  template <typename Scalar>
  void put(const std::string& name, const Tensor<Scalar>& tensor);
  template <typename Scalar>
  void put(const std::string& name, const Matrix<Scalar>& m) { put(name, Tensor<Scalar>::from_matrix(m)); }

  /// Reads a tensor, converting from the stored dtype when it differs from Scalar.
  template <typename Scalar>
  Tensor<Scalar> get(const std::string& name) const;

  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  DType dtype(const std::string& name) const;
  const std::vector<std::int64_t>& shape(const std::string& name) const;

  nlohmann::json& metadata() { return metadata_; }
  const nlohmann::json& metadata() const { return metadata_; }

  void write(std::ostream& out) const;
  static TensorFile read(std::istream& in);
  void save(const std::string& path) const;
  static TensorFile load(const std::string& path);

  bool operator==(const TensorFile& other) const;

 private:
  struct Entry {
    std::string name;
    std::vector<std::int64_t> shape;
    DType dtype = DType::F64;
    std::vector<unsigned char> bytes;
    bool operator==(const Entry&) const = default;
  };
  const Entry& entry(const std::string& name) const;

  std::vector<Entry> entries_;
  nlohmann::json metadata_ = nlohmann::json::object();
};

/// 64-bit FNV-1a over raw bytes; used to key caches.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace ele
