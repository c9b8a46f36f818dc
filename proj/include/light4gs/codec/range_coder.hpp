#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "light4gs/io/bytes.hpp"

namespace l4gs::codec {

inline constexpr int kCdfPrecision = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecision;
inline constexpr std::size_t kMaxAlphabet = 4096;

/// Cumulative frequency table: cum[0] = 0, cum[A] = 2^16, every symbol >= 1.
struct QuantizedCdf {
  std::vector<std::uint32_t> cum;

  std::size_t alphabet() const { return cum.empty() ? 0 : cum.size() - 1; }
  std::uint32_t freq(std::size_t s) const { return cum[s + 1] - cum[s]; }
  /// -log2 of the coded probability of symbol s.
  double bits(std::size_t s) const;

  /// max(1, round(p_i / sum p * 2^16)), then nudged to the exact total.
  /// Throws EncodingError for an empty or oversized alphabet.
  static QuantizedCdf from_probabilities(const std::vector<double>& p);
  static QuantizedCdf uniform(std::size_t alphabet);
};

/// Table over integer indices k in [lo, hi]: mass of N(mu, sigma) on
/// [(k - 1/2) q, (k + 1/2) q], renormalized over the support.
QuantizedCdf gaussian_cdf_table(double mu, double sigma, double q, std::int64_t lo, std::int64_t hi);

class RangeEncoder {
 public:
  /// Throws EncodingError when `symbol` is outside the table.
  void encode(const QuantizedCdf& cdf, std::size_t symbol);
  io::Bytes finish();
  std::size_t symbols() const { return count_; }

 private:
  void shift_low();
  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::size_t count_ = 0;
  io::Bytes out_;
};

class RangeDecoder {
 public:
  /// `context` prefixes every error message.
  RangeDecoder(const io::Bytes& bytes, std::string context);
  std::size_t decode(const QuantizedCdf& cdf);
  /// Throws DecodeError unless every byte was consumed.
  void finish() const;

 private:
  std::uint8_t next();
  const io::Bytes& in_;
  std::string context_;
  std::size_t pos_ = 0;
  std::size_t count_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t code_ = 0;
};

struct CodedStream {
  io::Bytes bytes;
  std::size_t count = 0;
  std::uint32_t model_id = 0;
};

CodedStream range_encode(const std::vector<std::size_t>& symbols, const std::vector<QuantizedCdf>& cdfs,
                         std::uint32_t model_id = 0);
/// Decodes stream.count symbols; cdfs must hold one table per symbol.
std::vector<std::size_t> range_decode(const CodedStream& stream, const std::vector<QuantizedCdf>& cdfs);

}  // namespace l4gs::codec
