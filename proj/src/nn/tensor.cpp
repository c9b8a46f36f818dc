#include "light4gs/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "light4gs/errors.hpp"

namespace l4gs::nn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_))
    throw ConfigError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                      shape_string(shape_));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o))
    throw ConfigError("tensor add shape mismatch " + shape_string(shape_) + " vs " + shape_string(o.shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

double snap_float32(double v) { return static_cast<double>(static_cast<float>(v)); }

Tensor snap_float32(const Tensor& t) {
  Tensor out = t;
  for (auto& v : out.values()) v = snap_float32(v);
  return out;
}

std::uint16_t float16_bits(double v) {
  if (std::isnan(v)) throw InputError("cannot store NaN as a half float");
  const std::uint16_t sign = std::signbit(v) ? 0x8000u : 0u;
  const double a = std::fabs(v);
  if (a >= 65520.0) return sign | 0x7BFFu;
  if (a < std::ldexp(1.0, -14)) return sign | static_cast<std::uint16_t>(std::nearbyint(std::ldexp(a, 24)));
  int e = 0;
  std::frexp(a, &e);
  int exponent = e - 1;
  auto mant = static_cast<int>(std::nearbyint((std::ldexp(a, -exponent) - 1.0) * 1024.0));
  if (mant == 1024) mant = 0, ++exponent;
  return sign | static_cast<std::uint16_t>((exponent + 15) << 10) | static_cast<std::uint16_t>(mant);
}

double float16_value(std::uint16_t bits) {
  const int exponent = (bits >> 10) & 0x1F;
  const int mant = bits & 0x3FF;
  double mag;
  if (exponent == 0) mag = std::ldexp(static_cast<double>(mant), -24);
  else if (exponent == 31) mag = mant ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  else mag = std::ldexp(1.0 + mant / 1024.0, exponent - 15);
  return (bits & 0x8000u) ? -mag : mag;
}

Tensor snap_float16(const Tensor& t) {
  Tensor out = t;
  for (auto& v : out.values()) v = snap_float16(v);
  return out;
}

BilinearStencil make_stencil(std::size_t height, std::size_t width, double u, double v) {
  BilinearStencil s;
  const double max_c = static_cast<double>(width - 1);
  const double max_r = static_cast<double>(height - 1);
  if (u < 0.0 || u > max_c) s.clamped_c = true;
  if (v < 0.0 || v > max_r) s.clamped_r = true;
  u = std::clamp(u, 0.0, max_c);
  v = std::clamp(v, 0.0, max_r);
  s.c0 = static_cast<std::size_t>(std::floor(u));
  s.r0 = static_cast<std::size_t>(std::floor(v));
  s.c1 = std::min(s.c0 + 1, width - 1);
  s.r1 = std::min(s.r0 + 1, height - 1);
  s.fc = u - static_cast<double>(s.c0);
  s.fr = v - static_cast<double>(s.r0);
  return s;
}

std::vector<double> bilinear_sample(const Tensor& grid, double u, double v) {
  if (grid.rank() != 3 || grid.dim(1) == 0 || grid.dim(2) == 0)
    throw ConfigError("bilinear_sample expects a non-empty [C,H,W] grid");
  const auto s = make_stencil(grid.dim(1), grid.dim(2), u, v);
  std::vector<double> out(grid.dim(0));
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double top = grid.at(c, s.r0, s.c0) * (1.0 - s.fc) + grid.at(c, s.r0, s.c1) * s.fc;
    const double bottom = grid.at(c, s.r1, s.c0) * (1.0 - s.fc) + grid.at(c, s.r1, s.c1) * s.fc;
    out[c] = top * (1.0 - s.fr) + bottom * s.fr;
  }
  return out;
}

namespace {

double source_coord(std::size_t i, std::size_t in, std::size_t out) {
  if (out <= 1 || in <= 1) return 0.0;
  return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 3) throw ConfigError("resize_bilinear expects [C,H,W]");
  const std::size_t channels = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out({channels, out_h, out_w});
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      const auto s = make_stencil(h, w, source_coord(j, w, out_w), source_coord(i, h, out_h));
      for (std::size_t c = 0; c < channels; ++c) {
        const double top = x.at(c, s.r0, s.c0) * (1.0 - s.fc) + x.at(c, s.r0, s.c1) * s.fc;
        const double bottom = x.at(c, s.r1, s.c0) * (1.0 - s.fc) + x.at(c, s.r1, s.c1) * s.fc;
        out.at(c, i, j) = top * (1.0 - s.fr) + bottom * s.fr;
      }
    }
  }
  return out;
}

}  // namespace l4gs::nn
