#pragma once

// Named parameter storage and the small set of layers the model is built
// from. Weights use the row-vector convention y = x W + b.

#include "tomp/core/autograd.hpp"
#include "tomp/core/random.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tomp {

class ParameterSet {
 public:
  ag::Var add(const std::string& name, Mat init) {
    if (index_.count(name)) throw std::invalid_argument("ParameterSet: duplicate parameter " + name);
    auto var = ag::parameter(std::move(init));
    index_[name] = entries_.size();
    entries_.emplace_back(name, var);
    return var;
  }

  const ag::Var& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterSet: no parameter " + name);
    return entries_[it->second].second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::pair<std::string, ag::Var>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : entries_) n += static_cast<std::size_t>(v->value.size());
    return n;
  }

  void zero_grad() {
    for (auto& [name, v] : entries_) v->grad.resize(0, 0);
  }

 private:
  std::vector<std::pair<std::string, ag::Var>> entries_;
  std::map<std::string, std::size_t> index_;
};

inline Mat xavier_uniform(Index rows, Index cols, Rng& rng, double fan_in, double fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -limit, limit);
  return m;
}

inline Mat normal_matrix(Index rows, Index cols, Rng& rng, double stddev) {
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng, 0.0, stddev);
  return m;
}

/// Training-mode switches threaded through a forward pass.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

inline ag::Var dropout(const ag::Var& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout <= 0.0 || ctx.rng == nullptr) return x;
  const double keep = 1.0 - ctx.dropout;
  Mat mask(x->rows(), x->cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform(*ctx.rng) < keep ? 1.0 / keep : 0.0;
  return ag::mul_const(x, mask);
}

struct Linear {
  ag::Var weight;  // in x out
  ag::Var bias;    // 1 x out

  static Linear create(ParameterSet& ps, const std::string& name, Index in, Index out, Rng& rng) {
    Linear l;
    l.weight = ps.add(name + ".weight", xavier_uniform(in, out, rng, static_cast<double>(in), static_cast<double>(out)));
    l.bias = ps.add(name + ".bias", Mat::Zero(1, out));
    return l;
  }

  ag::Var operator()(const ag::Var& x) const { return ag::add_row(ag::matmul(x, weight), bias); }
};

/// Layer normalization over the channel dimension with learned gain/bias.
struct LayerNorm {
  ag::Var gain;
  ag::Var bias;

  static LayerNorm create(ParameterSet& ps, const std::string& name, Index width) {
    return {ps.add(name + ".gain", Mat::Ones(1, width)), ps.add(name + ".bias", Mat::Zero(1, width))};
  }

  ag::Var operator()(const ag::Var& x) const { return ag::add_row(ag::mul_row(ag::normalize_rows(x), gain), bias); }
};

/// 2-D convolution on a flattened (H*W) x C map via im2col.
struct Conv2d {
  Linear proj;  // (k*k*in) x out
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  static Conv2d create(ParameterSet& ps, const std::string& name, int in, int out, int kernel, int stride, Rng& rng) {
    Conv2d c;
    c.in_channels = in;
    c.out_channels = out;
    c.kernel = kernel;
    c.stride = stride;
    c.pad = kernel / 2;
    const Index fan_in = static_cast<Index>(kernel) * kernel * in;
    c.proj.weight = ps.add(name + ".weight", xavier_uniform(fan_in, out, rng, static_cast<double>(fan_in),
                                                            static_cast<double>(kernel) * kernel * out));
    c.proj.bias = ps.add(name + ".bias", Mat::Zero(1, out));
    return c;
  }

  ag::Var operator()(const ag::Var& x, int height, int width, int* out_h = nullptr, int* out_w = nullptr) const {
    ag::ConvGeometry g{height, width, in_channels, kernel, stride, pad};
    if (out_h) *out_h = g.out_h();
    if (out_w) *out_w = g.out_w();
    if (kernel == 1 && stride == 1) return proj(x);
    return proj(ag::im2col(x, g));
  }
};

}  // namespace tomp
