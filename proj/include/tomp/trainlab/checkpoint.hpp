#pragma once

// Checkpoint container, version 1 (all integers little-endian):
//
//   "TOMPCKPT"                       8-byte magic
//   u32  version                     = 1
//   u64  header_bytes, header text   flat key = value lines (model.* config + metadata)
//   u64  array_count
//   per array:
//     u32 name_bytes, name
//     u32 rows, u32 cols
//     rows*cols f64, row-major
//   u64  FNV-1a hash of every preceding byte
//
// Parameters are stored under their ParameterSet names; optimizer moments
// use the "adam.m." / "adam.v." prefixes.

#include "tomp/core/layers.hpp"
#include "tomp/model.hpp"
#include "tomp/trainlab/config_file.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tomp {

inline constexpr char kCheckpointMagic[8] = {'T', 'O', 'M', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  KeyValues header;
  std::vector<std::pair<std::string, Mat>> arrays;

  const Mat* find(const std::string& name) const {
    for (const auto& [n, m] : arrays)
      if (n == name) return &m;
    return nullptr;
  }
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

class HashingWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.append(c, n);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  void str32(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : buf_) h = (h ^ c) * 1099511628211ULL;
    return h;
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string origin) : data_(std::move(data)), origin_(std::move(origin)) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > data_.size()) throw CheckpointError(origin_ + ": truncated checkpoint");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  std::string str(std::size_t n) {
    if (pos_ + n > data_.size()) throw CheckpointError(origin_ + ": truncated checkpoint");
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  const std::string& data() const { return data_; }

 private:
  std::string data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  detail::HashingWriter w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  const std::string header = ck.header.to_string();
  w.pod<std::uint64_t>(header.size());
  w.bytes(header.data(), header.size());
  w.pod<std::uint64_t>(ck.arrays.size());
  for (const auto& [name, m] : ck.arrays) {
    w.str32(name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
    w.bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  const std::uint64_t h = w.hash();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write checkpoint " + path);
  f.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  f.write(reinterpret_cast<const char*>(&h), sizeof(h));
  if (!f) throw CheckpointError("failed writing checkpoint " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  detail::Reader r(ss.str(), path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw CheckpointError(path + ": not a checkpoint file");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(path + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  Checkpoint ck;
  const auto header_len = r.pod<std::uint64_t>();
  ck.header = KeyValues::parse(r.str(header_len), path + " header");
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.pod<std::uint32_t>();
    std::string name = r.str(name_len);
    const auto rows = r.pod<std::uint32_t>();
    const auto cols = r.pod<std::uint32_t>();
    Mat m(rows, cols);
    r.bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    ck.arrays.emplace_back(std::move(name), std::move(m));
  }
  const std::size_t body_end = r.pos();
  const auto stored = r.pod<std::uint64_t>();
  if (r.pos() != r.data().size()) throw CheckpointError(path + ": trailing bytes after checkpoint");
  detail::HashingWriter check;
  check.bytes(r.data().data(), body_end);
  if (check.hash() != stored) throw CheckpointError(path + ": checksum mismatch (corrupt checkpoint)");
  return ck;
}

/// Parameters plus header for a model; extra arrays (optimizer state) are appended.
inline Checkpoint make_checkpoint(const ToMPModel& model, const KeyValues& meta = {},
                                  std::vector<std::pair<std::string, Mat>> extra = {}) {
  Checkpoint ck;
  ck.header = meta;
  write_model_config(model.config(), ck.header);
  for (const auto& [name, v] : model.params().entries()) ck.arrays.emplace_back(name, v->value);
  for (auto& e : extra) ck.arrays.push_back(std::move(e));
  return ck;
}

/// Copies stored parameters into the model; every parameter must be present
/// with a matching shape. Mismatches are reported by name.
inline void load_parameters(ToMPModel& model, const Checkpoint& ck) {
  std::string problems;
  for (const auto& [name, v] : model.params().entries()) {
    const Mat* m = ck.find(name);
    if (!m) {
      problems += " missing " + name + ";";
    } else if (m->rows() != v->rows() || m->cols() != v->cols()) {
      problems += " " + name + " stored " + std::to_string(m->rows()) + "x" + std::to_string(m->cols()) + " vs model " +
                  std::to_string(v->rows()) + "x" + std::to_string(v->cols()) + ";";
    }
  }
  if (!problems.empty()) throw CheckpointError("checkpoint does not match model:" + problems);
  for (const auto& [name, v] : model.params().entries()) v->value = *ck.find(name);
}

inline void save_checkpoint(const std::string& path, const ToMPModel& model, const KeyValues& meta = {}) {
  write_checkpoint(path, make_checkpoint(model, meta));
}

/// Builds a model from the checkpoint's own config and loads its weights.
inline std::unique_ptr<ToMPModel> load_model(const std::string& path) {
  const auto ck = read_checkpoint(path);
  auto model = std::make_unique<ToMPModel>(model_config_from(ck.header), 0);
  load_parameters(*model, ck);
  return model;
}

}  // namespace tomp
