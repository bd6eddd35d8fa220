#include "ele/tensor_file.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "ele/errors.hpp"

namespace ele {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

namespace {

const char* dtype_name(DType d) { return d == DType::F32 ? "F32" : "F64"; }

DType parse_dtype(const std::string& s) {
  if (s == "F32") return DType::F32;
  if (s == "F64") return DType::F64;
  throw InputError("unsupported tensor dtype " + s);
}

std::size_t width(DType d) { return d == DType::F32 ? 4 : 8; }

}  // namespace

template <typename Scalar>
std::int64_t Tensor<Scalar>::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

template <typename Scalar>
void Tensor<Scalar>::validate() const {
  for (auto e : shape) {
    if (e <= 0) throw ShapeError("tensor extents must be positive");
  }
  if (numel() != static_cast<std::int64_t>(data.size())) throw ShapeError("tensor data length != product of extents");
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_matrix(const Matrix<Scalar>& m) {
  Tensor t;
  t.shape = {m.rows(), m.cols()};
  t.data.resize(m.size());
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.data.data(), m.rows(),
                                                                                     m.cols()) = m;
  return t;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_stack(const std::vector<Matrix<Scalar>>& stack) {
  if (stack.empty()) throw ShapeError("cannot stack zero matrices");
  Tensor t;
  const auto r = stack[0].rows(), c = stack[0].cols();
  t.shape = {static_cast<std::int64_t>(stack.size()), r, c};
  t.data.resize(stack.size() * r * c);
  for (std::size_t s = 0; s < stack.size(); ++s) {
    if (stack[s].rows() != r || stack[s].cols() != c) throw ShapeError("stacked matrices differ in shape");
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.data.data() + s * r * c, r,
                                                                                       c) = stack[s];
  }
  return t;
}

template <typename Scalar>
Matrix<Scalar> Tensor<Scalar>::to_matrix() const {
  validate();
  if (shape.size() != 2) throw ShapeError("expected a rank-2 tensor");
  return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), shape[0], shape[1]);
}

template <typename Scalar>
std::vector<Matrix<Scalar>> Tensor<Scalar>::to_stack() const {
  validate();
  if (shape.size() != 3) throw ShapeError("expected a rank-3 tensor");
  std::vector<Matrix<Scalar>> out;
  const auto r = shape[1], c = shape[2];
  for (std::int64_t s = 0; s < shape[0]; ++s) {
    out.push_back(Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        data.data() + s * r * c, r, c));
  }
  return out;
}

template <typename Scalar>
void TensorFile::put(const std::string& name, const Tensor<Scalar>& tensor) {
  tensor.validate();
  Entry e{name, tensor.shape, dtype_of<Scalar>(), {}};
  e.bytes.resize(tensor.data.size() * sizeof(Scalar));
  std::memcpy(e.bytes.data(), tensor.data.data(), e.bytes.size());
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& x) { return x.name == name; });
  if (it != entries_.end()) {
    *it = std::move(e);
  } else {
    entries_.push_back(std::move(e));
  }
}

const TensorFile::Entry& TensorFile::entry(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& x) { return x.name == name; });
  if (it == entries_.end()) throw InputError("tensor '" + name + "' not found");
  return *it;
}

template <typename Scalar>
Tensor<Scalar> TensorFile::get(const std::string& name) const {
  const Entry& e = entry(name);
  Tensor<Scalar> t;
  t.shape = e.shape;
  const std::size_t n = e.bytes.size() / width(e.dtype);
  t.data.resize(n);
  if (e.dtype == DType::F32) {
    std::vector<float> raw(n);
    std::memcpy(raw.data(), e.bytes.data(), e.bytes.size());
    std::transform(raw.begin(), raw.end(), t.data.begin(), [](float v) { return static_cast<Scalar>(v); });
  } else {
    std::vector<double> raw(n);
    std::memcpy(raw.data(), e.bytes.data(), e.bytes.size());
    std::transform(raw.begin(), raw.end(), t.data.begin(), [](double v) { return static_cast<Scalar>(v); });
  }
  t.validate();
  return t;
}

bool TensorFile::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& x) { return x.name == name; });
}

std::vector<std::string> TensorFile::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

DType TensorFile::dtype(const std::string& name) const { return entry(name).dtype; }

const std::vector<std::int64_t>& TensorFile::shape(const std::string& name) const { return entry(name).shape; }

void TensorFile::write(std::ostream& out) const {
  nlohmann::json index = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& e : entries_) {
    index[e.name] = {{"dtype", dtype_name(e.dtype)},
                     {"shape", e.shape},
                     {"data_offsets", {offset, offset + e.bytes.size()}}};
    offset += e.bytes.size();
  }
  index["__metadata__"] = metadata_;
  const std::string header = index.dump();
  const std::uint64_t n = header.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& e : entries_) out.write(reinterpret_cast<const char*>(e.bytes.data()), e.bytes.size());
  if (!out) throw InputError("failed writing tensor file");
}

TensorFile TensorFile::read(std::istream& in) {
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n > (1ULL << 32)) throw InputError("corrupt tensor file header");
  std::string header(n, '\0');
  in.read(header.data(), static_cast<std::streamsize>(n));
  if (!in) throw InputError("truncated tensor file index");
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad tensor file index: ") + e.what());
  }
  TensorFile file;
  // Payload order defines insertion order, so re-saving is byte-identical.
  std::vector<std::pair<std::uint64_t, Entry>> entries;
  for (auto it = index.begin(); it != index.end(); ++it) {
    if (it.key() == "__metadata__") {
      file.metadata_ = it.value();
      continue;
    }
    Entry e;
    e.name = it.key();
    e.dtype = parse_dtype(it.value().at("dtype").get<std::string>());
    e.shape = it.value().at("shape").get<std::vector<std::int64_t>>();
    const auto begin = it.value().at("data_offsets").at(0).get<std::uint64_t>();
    const auto end = it.value().at("data_offsets").at(1).get<std::uint64_t>();
    if (end < begin || end > payload.size()) throw InputError("tensor '" + e.name + "' out of bounds");
    const std::int64_t numel =
        std::accumulate(e.shape.begin(), e.shape.end(), std::int64_t{1}, std::multiplies<>());
    if (static_cast<std::uint64_t>(numel) * width(e.dtype) != end - begin) {
      throw InputError("tensor '" + e.name + "' size does not match its shape");
    }
    e.bytes.assign(payload.begin() + begin, payload.begin() + end);
    entries.emplace_back(begin, std::move(e));
  }
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [_, e] : entries) file.entries_.push_back(std::move(e));
  return file;
}

void TensorFile::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write(out);
}

TensorFile TensorFile::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read(in);
}

bool TensorFile::operator==(const TensorFile& other) const {
  return entries_ == other.entries_ && metadata_ == other.metadata_;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

template struct Tensor<float>;
template struct Tensor<double>;
template void TensorFile::put<float>(const std::string&, const Tensor<float>&);
template void TensorFile::put<double>(const std::string&, const Tensor<double>&);
template Tensor<float> TensorFile::get<float>(const std::string&) const;
template Tensor<double> TensorFile::get<double>(const std::string&) const;

}  // namespace ele
