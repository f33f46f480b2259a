#pragma once

#include <cmath>
#include <cstddef>
#include <new>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spm {

/// Allocator handing out 64-byte aligned blocks. Eigen peels unaligned
/// leading elements off vectorised reductions, so without a fixed alignment
/// the summation order (and the trained weights) would depend on where the
/// heap happened to place each tensor.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <class T>
struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  AlignedVector<T> data;

  std::size_t numel() const { return data.size(); }
};

inline std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

/// Flat, ordered collection of named parameter tensors (row-major payloads).
template <class T>
class ParamSet {
 public:
  NamedTensor<T>& add(std::string name, std::vector<int> shape, T fill = T(0)) {
    const std::size_t n = shape_numel(shape);
    tensors_.push_back({std::move(name), std::move(shape), AlignedVector<T>(n, fill)});
    return tensors_.back();
  }

  std::size_t size() const { return tensors_.size(); }
  NamedTensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const NamedTensor<T>& operator[](std::size_t i) const { return tensors_[i]; }

  const NamedTensor<T>& at(std::string_view name) const {
    for (const auto& t : tensors_)
      if (t.name == name) return t;
    throw std::out_of_range("ParamSet: no tensor named " + std::string(name));
  }
  NamedTensor<T>& at(std::string_view name) {
    return const_cast<NamedTensor<T>&>(std::as_const(*this).at(name));
  }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  std::size_t total_numel() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  template <class U>
  bool congruent(const ParamSet<U>& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (tensors_[i].name != other[i].name || tensors_[i].shape != other[i].shape) return false;
    }
    return true;
  }

  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& t : tensors_) out.add(t.name, t.shape);
    return out;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& t : tensors_) {
      auto& dst = out.add(t.name, t.shape);
      for (std::size_t i = 0; i < t.numel(); ++i) dst.data[i] = static_cast<U>(t.data[i]);
    }
    return out;
  }

  bool all_finite() const {
    for (const auto& t : tensors_)
      for (T v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  /// Visits (tensor, flat index) for every scalar, in storage order.
  template <class F>
  void for_each_scalar(F&& f) {
    for (auto& t : tensors_)
      for (std::size_t i = 0; i < t.numel(); ++i) f(t, i);
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (!a.congruent(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].data != b[i].data) return false;
    return true;
  }

 private:
  std::vector<NamedTensor<T>> tensors_;
};

template <class T, class U>
void require_congruent(const ParamSet<T>& a, const ParamSet<U>& b, const char* where) {
  if (!a.congruent(b)) {
    throw std::invalid_argument(std::string(where) + ": parameter sets differ in shape");
  }
}

}  // namespace spm
