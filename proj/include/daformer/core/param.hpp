#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "daformer/core/errors.hpp"
#include "daformer/core/tensor.hpp"

namespace daformer {

/// One learnable array together with its accumulated gradient.
template <typename Scalar>
struct Param {
  Mat<Scalar> value;
  Mat<Scalar> grad;

  Param() = default;
  Param(Eigen::Index rows, Eigen::Index cols)
      : value(Mat<Scalar>::Zero(rows, cols)), grad(Mat<Scalar>::Zero(rows, cols)) {}

  Eigen::Index size() const { return value.size(); }
};

/// Learnable arrays keyed by a stable dotted path ("encoder.stage1.patch.weight").
///
/// Iteration order is the lexicographic key order, which makes serialization,
/// optimizer state and random coordinate selection reproducible.
template <typename Scalar>
class ParamStore {
 public:
  using Map = std::map<std::string, Param<Scalar>>;

  Param<Scalar>& add(const std::string& key, Eigen::Index rows, Eigen::Index cols) {
    auto [it, inserted] = params_.try_emplace(key, rows, cols);
    if (!inserted) throw StateError("duplicate parameter key: " + key);
    return it->second;
  }

  Param<Scalar>& at(const std::string& key) {
    auto it = params_.find(key);
    if (it == params_.end()) throw StateError("unknown parameter key: " + key);
    return it->second;
  }
  const Param<Scalar>& at(const std::string& key) const {
    auto it = params_.find(key);
    if (it == params_.end()) throw StateError("unknown parameter key: " + key);
    return it->second;
  }

  bool contains(const std::string& key) const { return params_.count(key) != 0; }
  std::size_t num_arrays() const { return params_.size(); }
  bool empty() const { return params_.empty(); }

  void zero_grad() {
    for (auto& [key, p] : params_) p.grad.setZero();
  }

  typename Map::iterator begin() { return params_.begin(); }
  typename Map::iterator end() { return params_.end(); }
  typename Map::const_iterator begin() const { return params_.begin(); }
  typename Map::const_iterator end() const { return params_.end(); }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& [key, p] : params_) {
      auto& q = out.add(key, p.value.rows(), p.value.cols());
      q.value = p.value.template cast<Other>();
    }
    return out;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [key, p] : params_) out.push_back(key);
    return out;
  }

 private:
  Map params_;
};

/// Exact number of scalars held by the store.
template <typename Scalar>
std::int64_t count_parameters(const ParamStore<Scalar>& params) {
  std::int64_t total = 0;
  for (const auto& [key, p] : params) total += p.value.size();
  return total;
}

/// Scalars held by arrays whose key starts with `prefix`.
template <typename Scalar>
std::int64_t count_parameters(const ParamStore<Scalar>& params, const std::string& prefix) {
  std::int64_t total = 0;
  for (const auto& [key, p] : params) {
    if (key.compare(0, prefix.size(), prefix) == 0) total += p.value.size();
  }
  return total;
}

/// True when both stores hold the same keys with the same shapes.
template <typename A, typename B>
bool same_structure(const ParamStore<A>& a, const ParamStore<B>& b) {
  if (a.num_arrays() != b.num_arrays()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (ia->second.value.rows() != ib->second.value.rows() ||
        ia->second.value.cols() != ib->second.value.cols())
      return false;
  }
  return true;
}

}  // namespace daformer
