#include "cleve/persistence.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace cleve {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void read(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw TruncatedError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

std::size_t element_count(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(std::vector<NamedTensor> tensors) {
  std::sort(tensors.begin(), tensors.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    if (i > 0 && tensors[i - 1].name == t.name) throw CheckpointError("duplicate tensor name " + t.name);
    if (t.name.size() > 0xFFFF) throw CheckpointError("tensor name too long");
    if (t.dims.size() > 0xFF) throw CheckpointError("tensor rank too large: " + t.name);
    if (element_count(t.dims) != t.data.size()) throw CheckpointError("payload size does not match dims: " + t.name);
  }
  std::vector<std::uint8_t> out{'C', 'L', 'V', 'E'};
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& t : tensors) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint8_t>(out, 0);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint32_t>(out, d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data.data());
    out.insert(out.end(), p, p + t.data.size() * sizeof(float));
  }
  put<std::uint32_t>(out, crc_of(out.data(), out.size()));
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw TruncatedError("checkpoint shorter than its magic");
  if (std::memcmp(bytes.data(), "CLVE", 4) != 0) throw BadMagicError("not a checkpoint (bad magic)");
  if (bytes.size() < 12) throw TruncatedError("checkpoint truncated before version/CRC");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kCheckpointVersion)
    throw VersionMismatchError("checkpoint version " + std::to_string(version) + ", expected " +
                               std::to_string(kCheckpointVersion));
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  const std::uint32_t computed = crc_of(bytes.data(), body);

  // Structural parse first so a cut-off file reports truncation, not CRC.
  std::vector<NamedTensor> out;
  std::string structural_error;
  try {
    Reader r(bytes, body);
    r.get<std::uint32_t>();
    r.get<std::uint32_t>();
    while (!r.done()) {
      NamedTensor t;
      t.name.resize(r.get<std::uint16_t>());
      r.read(t.name.data(), t.name.size());
      const auto dtype = r.get<std::uint8_t>();
      if (dtype != 0) throw CheckpointError("unsupported dtype " + std::to_string(dtype) + " for " + t.name);
      t.dims.resize(r.get<std::uint8_t>());
      for (auto& d : t.dims) d = r.get<std::uint32_t>();
      const std::size_t n = element_count(t.dims);
      if (n > body) throw TruncatedError("tensor " + t.name + " larger than file");
      t.data.resize(n);
      r.read(t.data.data(), n * sizeof(float));
      out.push_back(std::move(t));
    }
  } catch (const TruncatedError&) {
    if (stored == computed) throw;
    throw TruncatedError("checkpoint truncated or corrupt (" + std::to_string(bytes.size()) + " bytes)");
  } catch (const CheckpointError&) {
    if (stored == computed) throw;
    throw CrcMismatchError("checkpoint CRC mismatch");
  }
  if (stored != computed) throw CrcMismatchError("checkpoint CRC mismatch");
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i - 1].name == out[i].name) throw CheckpointError("duplicate tensor name " + out[i].name);
  return out;
}

void save_tensors(const std::vector<NamedTensor>& tensors, const std::string& path) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path);
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::vector<NamedTensor> to_tensors(const ParameterSet& p) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Matrix& m = p.value(i);
    NamedTensor t{p.name(i), {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
    t.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(static_cast<float>(m(r, c)));
    out.push_back(std::move(t));
  }
  return out;
}

ParameterSet from_tensors(const std::vector<NamedTensor>& tensors) {
  ParameterSet p;
  for (const auto& t : tensors) {
    Eigen::Index rows = 1, cols = 1;
    if (t.dims.size() == 1) {
      cols = t.dims[0];
    } else if (t.dims.size() == 2) {
      rows = t.dims[0];
      cols = t.dims[1];
    } else if (!t.dims.empty()) {
      throw CheckpointError("tensor " + t.name + " has rank " + std::to_string(t.dims.size()) + "; expected <= 2");
    }
    Matrix m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<double>(t.data[k++]);
    p.add(t.name, std::move(m));
  }
  return p;
}

void save(const ParameterSet& p, const std::string& path) { save_tensors(to_tensors(p), path); }

ParameterSet load(const std::string& path) { return from_tensors(load_tensors(path)); }

}  // namespace cleve
