// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "erwin/tensor.hpp"

namespace erwin {

// Named trainable tensors with deterministic iteration order (insertion
// order). Checkpoints are flat binary records, little-endian, versioned.
template <typename S>
class ParamStore {
 public:
  Tensor<S>& add(const std::string& name, Tensor<S> value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    values_.push_back(std::move(value));
    return values_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<S>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return values_[it->second];
  }
  const Tensor<S>& get(const std::string& name) const { return const_cast<ParamStore*>(this)->get(name); }

  const std::vector<std::string>& names() const { return names_; }
  size_t count() const { return names_.size(); }

  u64 total_elems() const {
    u64 total = 0;
    for (const auto& v : values_) total += static_cast<u64>(v.numel());
    return total;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open checkpoint for writing: " + path);
    const char magic[8] = {'E', 'R', 'W', 'N', 'P', 'R', 'M', '1'};
    out.write(magic, 8);
    write_u32(out, static_cast<std::uint32_t>(names_.size()));
    for (size_t i = 0; i < names_.size(); ++i) {
      const auto& name = names_[i];
      const auto& v = values_[i];
      write_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(out, static_cast<std::uint32_t>(sizeof(S)));
      write_u32(out, static_cast<std::uint32_t>(v.shape.size()));
      for (i64 d : v.shape) write_u64(out, static_cast<u64>(d));
      out.write(reinterpret_cast<const char*>(v.ptr()), static_cast<std::streamsize>(sizeof(S) * v.numel()));
    }
    if (!out) throw InputError("short write to checkpoint: " + path);
  }

  static ParamStore load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "ERWNPRM1", 8) != 0) throw ParseError("bad checkpoint header in " + path);
    ParamStore store;
    const std::uint32_t count = read_u32(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t name_len = read_u32(in, path);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      const std::uint32_t width = read_u32(in, path);
      if (width != sizeof(S))
        throw ParseError("checkpoint scalar width " + std::to_string(width) + " != expected " +
                         std::to_string(sizeof(S)));
      const std::uint32_t ndim = read_u32(in, path);
      std::vector<i64> shape(ndim);
      for (auto& d : shape) d = static_cast<i64>(read_u64(in, path));
      Tensor<S> v = Tensor<S>::zeros(shape);
      in.read(reinterpret_cast<char*>(v.ptr()), static_cast<std::streamsize>(sizeof(S) * v.numel()));
      if (!in) throw ParseError("truncated checkpoint: " + path);
      store.add(name, std::move(v));
    }
    return store;
  }

 private:
  static void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
  }
  static void write_u64(std::ostream& out, u64 v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
  }
  static std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ParseError("truncated checkpoint: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  static u64 read_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw ParseError("truncated checkpoint: " + path);
    u64 v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<u64>(b[i]) << (8 * i);
    return v;
  }

  std::vector<std::string> names_;
  std::vector<Tensor<S>> values_;
  std::unordered_map<std::string, size_t> index_;
};

// Conventional fan-in initialization: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
template <typename S>
Tensor<S> init_linear(i64 fan_in, i64 fan_out, Rng& rng) {
  Tensor<S> w = Tensor<S>::zeros({fan_in, fan_out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (i64 i = 0; i < w.numel(); ++i) (*w.data)[i] = static_cast<S>(rng.uniform(-bound, bound));
  return w;
}

// Lazy view of a ParamStore bound to a tape. With a null tape, parameters are
// used as constants (inference). Each parameter is recorded at most once.
template <typename S>
class BoundParams {
 public:
  BoundParams(ParamStore<S>& store, Tape<S>* tape) : store_(&store), tape_(tape) {}

  Tensor<S> operator()(const std::string& name) {
    if (!tape_) return store_->get(name);
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Tensor<S> handle = tape_->leaf(store_->get(name));
    bound_.emplace(name, handle);
    return handle;
  }

  ParamStore<S>& store() { return *store_; }
  Tape<S>* tape() { return tape_; }
  const std::unordered_map<std::string, Tensor<S>>& bound() const { return bound_; }

 private:
  ParamStore<S>* store_;
  Tape<S>* tape_;
  std::unordered_map<std::string, Tensor<S>> bound_;
};

}  // namespace erwin
