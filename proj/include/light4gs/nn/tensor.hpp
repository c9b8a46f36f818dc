#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace l4gs::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Rank is arbitrary but in practice
/// 1 (vectors), 2 (batched rows) or 3 (channel, height, width).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  void fill(double v);
  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Round every element through float32. Serialized artifacts store float32,
/// so anything a decoder replays must be snapped first.
Tensor snap_float32(const Tensor& t);
double snap_float32(double v);

/// IEEE binary16 bit pattern of v, round to nearest even; magnitudes past the
/// largest finite half saturate to +-65504. Throws InputError for NaN.
std::uint16_t float16_bits(double v);
double float16_value(std::uint16_t bits);
inline double snap_float16(double v) { return float16_value(float16_bits(v)); }
Tensor snap_float16(const Tensor& t);

/// Samples a [C,H,W] grid at column u and row v with 4-corner bilinear
/// weights. Coordinates outside [0,W-1]x[0,H-1] clamp to the border.
std::vector<double> bilinear_sample(const Tensor& grid, double u, double v);

/// Resamples [C,H,W] to [C,out_h,out_w] with corner-aligned bilinear
/// interpolation: output index i maps to input coordinate i*(H-1)/(out_h-1).
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace l4gs::nn

namespace l4gs::nn {

/// Corner indices and fractional offsets for one bilinear lookup. Shared by
/// forward sampling and by the analytic gradient code.
struct BilinearStencil {
  std::size_t r0 = 0, r1 = 0, c0 = 0, c1 = 0;
  double fr = 0.0, fc = 0.0;
  // True when the coordinate was clamped; the derivative along that axis is 0.
  bool clamped_r = false, clamped_c = false;
};

BilinearStencil make_stencil(std::size_t height, std::size_t width, double u, double v);

}  // namespace l4gs::nn
