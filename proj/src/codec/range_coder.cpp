#include "light4gs/codec/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "light4gs/errors.hpp"
#include "light4gs/mhcm/rate.hpp"

namespace l4gs::codec {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
}

double QuantizedCdf::bits(std::size_t s) const {
  return static_cast<double>(kCdfPrecision) - std::log2(static_cast<double>(freq(s)));
}

QuantizedCdf QuantizedCdf::from_probabilities(const std::vector<double>& p) {
  const std::size_t n = p.size();
  if (n == 0) throw EncodingError("empty symbol alphabet");
  if (n > kMaxAlphabet)
    throw EncodingError("alphabet of " + std::to_string(n) + " symbols exceeds " + std::to_string(kMaxAlphabet));
  double total = 0.0;
  for (double v : p) total += std::isfinite(v) && v > 0.0 ? v : 0.0;
  std::vector<double> target(n);
  std::vector<std::int64_t> f(n);
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::isfinite(p[i]) && p[i] > 0.0 && total > 0.0 ? p[i] / total : 0.0;
    target[i] = v * kCdfTotal;
    f[i] = std::max<std::int64_t>(1, std::llround(target[i]));
    sum += f[i];
  }
  // Fix the total one count at a time, always where the count moves least
  // away from its exact target (lowest index on ties).
  const int dir = sum > kCdfTotal ? -1 : 1;
  auto slack = [&](std::size_t i) { return dir * (target[i] - static_cast<double>(f[i])); };
  auto less = [&](std::size_t a, std::size_t b) {
    const double sa = slack(a), sb = slack(b);
    return sa != sb ? sa < sb : a > b;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(less)> heap(less);
  for (std::size_t i = 0; i < n; ++i)
    if (dir > 0 || f[i] > 1) heap.push(i);
  for (std::int64_t left = std::abs(sum - kCdfTotal); left > 0; --left) {
    const std::size_t i = heap.top();
    heap.pop();
    f[i] += dir;
    if (dir > 0 || f[i] > 1) heap.push(i);
  }
  QuantizedCdf cdf;
  cdf.cum.resize(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) cdf.cum[i + 1] = cdf.cum[i] + static_cast<std::uint32_t>(f[i]);
  return cdf;
}

QuantizedCdf QuantizedCdf::uniform(std::size_t alphabet) {
  return from_probabilities(std::vector<double>(alphabet, 1.0));
}

QuantizedCdf gaussian_cdf_table(double mu, double sigma, double q, std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw EncodingError("empty symbol support");
  if (!(sigma > 0.0) || !(q > 0.0)) throw EncodingError("gaussian table needs sigma > 0 and q > 0");
  const auto n = static_cast<std::size_t>(hi - lo + 1);
  if (n > kMaxAlphabet)
    throw EncodingError("alphabet of " + std::to_string(n) + " symbols exceeds " + std::to_string(kMaxAlphabet));
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(lo + static_cast<std::int64_t>(i)) * q;
    p[i] = mhcm::normal_interval((x - 0.5 * q - mu) / sigma, (x + 0.5 * q - mu) / sigma);
  }
  return QuantizedCdf::from_probabilities(p);
}

// ---- encoder --------------------------------------------------------------

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(const QuantizedCdf& cdf, std::size_t symbol) {
  if (symbol >= cdf.alphabet())
    throw EncodingError("symbol " + std::to_string(count_) + " (value " + std::to_string(symbol) +
                        ") is outside its alphabet of " + std::to_string(cdf.alphabet()));
  const std::uint32_t r = range_ >> kCdfPrecision;
  low_ += static_cast<std::uint64_t>(r) * cdf.cum[symbol];
  range_ = r * cdf.freq(symbol);
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
  ++count_;
}

io::Bytes RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

// ---- decoder --------------------------------------------------------------

RangeDecoder::RangeDecoder(const io::Bytes& bytes, std::string context) : in_(bytes), context_(std::move(context)) {
  if (next() != 0) throw DecodeError(context_ + ": corrupt range coder preamble");
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
}

std::uint8_t RangeDecoder::next() {
  if (pos_ >= in_.size())
    throw DecodeError(context_ + ": stream truncated at byte " + std::to_string(pos_) + " (symbol " +
                      std::to_string(count_) + ")");
  return in_[pos_++];
}

std::size_t RangeDecoder::decode(const QuantizedCdf& cdf) {
  const std::uint32_t r = range_ >> kCdfPrecision;
  const std::uint32_t target = code_ / r;
  if (target >= kCdfTotal)
    throw DecodeError(context_ + ": impossible code value at symbol " + std::to_string(count_));
  const auto it = std::upper_bound(cdf.cum.begin() + 1, cdf.cum.end(), target);
  const auto s = static_cast<std::size_t>(it - cdf.cum.begin()) - 1;
  code_ -= r * cdf.cum[s];
  range_ = r * cdf.freq(s);
  while (range_ < kTop) {
    range_ <<= 8;
    code_ = (code_ << 8) | next();
  }
  ++count_;
  return s;
}

void RangeDecoder::finish() const {
  if (pos_ != in_.size())
    throw DecodeError(context_ + ": " + std::to_string(in_.size() - pos_) + " trailing bytes after " +
                      std::to_string(count_) + " symbols");
}

CodedStream range_encode(const std::vector<std::size_t>& symbols, const std::vector<QuantizedCdf>& cdfs,
                         std::uint32_t model_id) {
  if (symbols.size() != cdfs.size()) throw EncodingError("one table per symbol required");
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode(cdfs[i], symbols[i]);
  return {enc.finish(), symbols.size(), model_id};
}

std::vector<std::size_t> range_decode(const CodedStream& stream, const std::vector<QuantizedCdf>& cdfs) {
  if (cdfs.size() != stream.count) throw DecodeError("range decode: one table per symbol required");
  RangeDecoder dec(stream.bytes, "stream " + std::to_string(stream.model_id));
  std::vector<std::size_t> out(stream.count);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dec.decode(cdfs[i]);
  dec.finish();
  return out;
}

}  // namespace l4gs::codec
