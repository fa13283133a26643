#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wsrad/common.hpp"

namespace wsrad {

/// Dense row-major 2D array. Element (r, c) lives at r * cols + c.
template <typename T>
class Image2D {
 public:
  Image2D() = default;
  Image2D(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Image2D(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw InvalidArgument("Image2D: data size does not match dims");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  friend bool operator==(const Image2D&, const Image2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Image = Image2D<double>;
using Mask = Image2D<std::uint8_t>;

inline std::size_t count_true(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.values()) n += (v != 0);
  return n;
}

using Dims3 = std::array<std::size_t, 3>;
using Spacing3 = std::array<double, 3>;

/// 3D voxel grid; x varies fastest, then y, then z (NIfTI storage order).
template <typename T>
class Grid3D {
 public:
  Grid3D() = default;
  Grid3D(Dims3 dims, Spacing3 spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    for (auto d : dims_)
      if (d < 1) throw InvalidArgument("volume dims must be >= 1");
    for (auto s : spacing_)
      if (!(s > 0)) throw InvalidArgument("volume spacing must be > 0");
    if (data_.size() != dims_[0] * dims_[1] * dims_[2])
      throw InvalidArgument("volume data length " + std::to_string(data_.size()) +
                            " does not match dims product " +
                            std::to_string(dims_[0] * dims_[1] * dims_[2]));
  }
  Grid3D(Dims3 dims, Spacing3 spacing = {1.0, 1.0, 1.0}, T fill = T{})
      : Grid3D(dims, spacing, std::vector<T>(dims[0] * dims[1] * dims[2], fill)) {}

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  std::size_t nx() const { return dims_[0]; }
  std::size_t ny() const { return dims_[1]; }
  std::size_t nz() const { return dims_[2]; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims_[0] * (y + dims_[1] * z);
  }
  T& operator()(std::size_t x, std::size_t y, std::size_t z) { return data_[index(x, y, z)]; }
  const T& operator()(std::size_t x, std::size_t y, std::size_t z) const { return data_[index(x, y, z)]; }

  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  /// Axial plane z as an ny x nx image (row = y, col = x).
  Image2D<T> slice(std::size_t z) const {
    Image2D<T> out(dims_[1], dims_[0]);
    for (std::size_t y = 0; y < dims_[1]; ++y)
      for (std::size_t x = 0; x < dims_[0]; ++x) out(y, x) = (*this)(x, y, z);
    return out;
  }

  friend bool operator==(const Grid3D&, const Grid3D&) = default;

 private:
  Dims3 dims_{1, 1, 1};
  Spacing3 spacing_{1.0, 1.0, 1.0};
  std::vector<T> data_ = std::vector<T>(1);
};

using Volume = Grid3D<double>;
using LabelVolume = Grid3D<std::uint16_t>;

}  // namespace wsrad
