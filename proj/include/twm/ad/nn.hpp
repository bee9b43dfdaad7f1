#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "twm/ad/ops.hpp"
#include "twm/rng.hpp"

namespace twm::ad {

/// Ordered, named parameter collection. Insertion order is the checkpoint order.
template <typename T>
class ParamStore {
 public:
  Var<T> add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = vars_.size();
    names_.push_back(name);
    vars_.push_back(parameter(std::move(value)));
    return vars_.back();
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Var<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return vars_[it->second];
  }

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::vector<Var<T>>& vars() noexcept { return vars_; }
  const std::vector<Var<T>>& vars() const noexcept { return vars_; }
  std::size_t size() const noexcept { return vars_.size(); }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& v : vars_) n += v.size();
    return n;
  }
  void zero_grad() {
    for (auto& v : vars_) v.zero_grad();
  }

  /// Subset whose names start with `prefix`, sharing the same nodes.
  std::vector<Var<T>> with_prefix(const std::string& prefix) const {
    std::vector<Var<T>> out;
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i].rfind(prefix, 0) == 0) out.push_back(vars_[i]);
    return out;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], vars_[i].value().template cast<U>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Var<T>> vars_;
  std::map<std::string, std::size_t> index_;
};

/// Creates parameters (seeded uniform fan-in init) or binds existing ones by
/// name, so one layer constructor serves both fresh models and loaded ones.
template <typename T>
class ParamBuilder {
 public:
  ParamBuilder(ParamStore<T>& store, Rng* rng) : store_(store), rng_(rng) {}

  Var<T> uniform(const std::string& name, Shape shape, double bound) {
    if (!rng_) return bind(name, shape);
    Tensor<T> t(std::move(shape));
    for (T& v : t.values()) v = static_cast<T>(rng_->uniform(-bound, bound));
    return store_.add(name, std::move(t));
  }
  Var<T> filled(const std::string& name, Shape shape, T value) {
    if (!rng_) return bind(name, shape);
    return store_.add(name, Tensor<T>(std::move(shape), value));
  }

 private:
  Var<T> bind(const std::string& name, const Shape& shape) {
    Var<T> v = store_.get(name);
    if (v.shape() != shape)
      throw ShapeError("parameter " + name + ": stored " + shape_str(v.shape()) + ", expected " + shape_str(shape));
    return v;
  }

  ParamStore<T>& store_;
  Rng* rng_;
};

template <typename T>
struct Conv2d {
  Var<T> w, b;
  Conv2d() = default;
  Conv2d(ParamBuilder<T>& pb, const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * k * k));
    w = pb.uniform(name + ".w", Shape{c_out, c_in, k, k}, bound);
    b = pb.uniform(name + ".b", Shape{c_out}, bound);
  }
  Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b); }
};

template <typename T>
struct Linear {
  Var<T> w, b;
  Linear() = default;
  Linear(ParamBuilder<T>& pb, const std::string& name, std::size_t d_in, std::size_t d_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    w = pb.uniform(name + ".w", Shape{d_out, d_in}, bound);
    b = pb.uniform(name + ".b", Shape{d_out}, bound);
  }
  Var<T> operator()(const Var<T>& x) const { return linear(x, w, b); }
};

/// out = proj(x) + conv_a(x) * sigmoid(conv_b(x)); proj is identity when the
/// channel counts match, else a 1x1 convolution. The gated convolutions pad
/// the time axis by edge replication and the frequency axis with zeros, so a
/// spectrogram of identical frames maps to identical frames.
template <typename T>
struct GatedBlock {
  Conv2d<T> a, g;
  std::optional<Conv2d<T>> proj;
  GatedBlock() = default;
  GatedBlock(ParamBuilder<T>& pb, const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t k = 3)
      : a(pb, name + ".a", c_in, c_out, k), g(pb, name + ".g", c_in, c_out, k) {
    if (c_in != c_out) proj.emplace(pb, name + ".proj", c_in, c_out, 1);
  }
  Var<T> operator()(const Var<T>& x) const {
    const std::size_t r = a.w.shape()[2] / 2;
    Var<T> gated = r == 0 ? gated_conv(x, a.w, a.b, g.w, g.b)
                          : crop_time(gated_conv(pad_time_replicate(x, r), a.w, a.b, g.w, g.b), r, x.shape()[1]);
    return add(proj ? (*proj)(x) : x, gated);
  }
};

/// conv -> InstanceNorm -> LeakyReLU(0.2).
template <typename T>
struct ReluBlock {
  Conv2d<T> conv;
  Var<T> gamma, beta;
  ReluBlock() = default;
  ReluBlock(ParamBuilder<T>& pb, const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t k = 3)
      : conv(pb, name + ".conv", c_in, c_out, k),
        gamma(pb.filled(name + ".gamma", Shape{c_out}, T(1))),
        beta(pb.filled(name + ".beta", Shape{c_out}, T(0))) {}
  Var<T> operator()(const Var<T>& x) const { return leaky_relu(instance_norm(conv(x), gamma, beta), T(0.2)); }
};

}  // namespace twm::ad
