#include "light4gs/codec/hexplane_codec.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <optional>

#include "light4gs/codec/range_coder.hpp"
#include "light4gs/errors.hpp"
#include "light4gs/mhcm/rate.hpp"
#include "light4gs/scene/io.hpp"

namespace l4gs::codec {

using mhcm::ContextModel;
using mhcm::Group;
using nn::Graph;
using nn::Tensor;
using nn::Var;
using scene::MultiscaleHexplane;

StepTable step_table(mhcm::QuantSteps& steps) {
  StepTable t(steps.num_scales());
  for (std::size_t s = 0; s < t.size(); ++s)
    for (int grp = 0; grp < 2; ++grp) t[s][grp] = steps.value(s, grp);
  return t;
}

namespace {

using Index = std::vector<std::int64_t>;

Index index_of(const Tensor& x, double q) {
  Index out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<std::int64_t>(std::round(x[i] / q));
  return out;
}

Tensor values_of(const nn::Shape& shape, const Index& idx, double q) {
  Tensor out(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = q * static_cast<double>(idx[i]);
  return out;
}

Tensor crop(const Tensor& x, std::size_t h, std::size_t w) {
  if (x.dim(1) == h && x.dim(2) == w) return x;
  Tensor out({x.dim(0), h, w});
  for (std::size_t c = 0; c < x.dim(0); ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) out.at(c, i, j) = x.at(c, i, j);
  return out;
}

Tensor pad_zero(const Tensor& x, std::size_t h, std::size_t w) {
  Tensor out({x.dim(0), h, w});
  for (std::size_t c = 0; c < x.dim(0); ++c)
    for (std::size_t i = 0; i < x.dim(1); ++i)
      for (std::size_t j = 0; j < x.dim(2); ++j) out.at(c, i, j) = x.at(c, i, j);
  return out;
}

// Table range: the coded support widened to cover the element's own
// distribution, so a near-constant plane is not coded below its model rate.
constexpr double kTailSigmas = 7.0;

std::pair<std::int64_t, std::int64_t> table_range(double mu, double sigma, double q, Support sup) {
  const double span = static_cast<double>(kMaxAlphabet);
  const double c = std::round(mu / q), h = std::ceil(kTailSigmas * sigma / q) + 1.0;
  const double centre = std::isfinite(c) ? std::clamp(c, sup.lo - span, sup.hi + span) : sup.lo;
  const double half = std::isfinite(h) ? std::min(h, span) : span;
  auto lo = std::min<std::int64_t>(sup.lo, static_cast<std::int64_t>(centre - half));
  auto hi = std::max<std::int64_t>(sup.hi, static_cast<std::int64_t>(centre + half));
  const auto cap = static_cast<std::int64_t>(kMaxAlphabet) - 1;
  lo = std::max(lo, sup.hi - cap);
  hi = std::min(hi, lo + cap);
  return {lo, hi};
}

Support support_of(const Index& idx) {
  if (idx.empty()) return {0, 0};
  std::int64_t lo = idx[0], hi = idx[0];
  for (auto v : idx) lo = std::min(lo, v), hi = std::max(hi, v);
  if (lo < INT32_MIN || hi > INT32_MAX || hi - lo + 1 > static_cast<std::int64_t>(kMaxAlphabet))
    throw EncodingError("quantized indices span [" + std::to_string(lo) + ", " + std::to_string(hi) +
                        "], more than " + std::to_string(kMaxAlphabet) + " symbols");
  return {static_cast<std::int32_t>(lo), static_cast<std::int32_t>(hi)};
}

std::vector<std::size_t> parity_positions(const nn::Shape& shape, bool anchors) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < shape[0]; ++c)
    for (std::size_t i = 0; i < shape[1]; ++i)
      for (std::size_t j = 0; j < shape[2]; ++j)
        if (mhcm::is_anchor(i, j) == anchors) out.push_back((c * shape[1] + i) * shape[2] + j);
  return out;
}

std::vector<std::size_t> all_positions(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

// Walks the planes in decode order. The encoder preloads every index buffer
// and the coder only writes symbols; the decoder starts from empty buffers
// and fills them as it decodes. Entropy parameters are derived from already
// coded positions only, so both sides compute them identically.
class Replay {
 public:
  Replay(ContextModel& model, const MultiscaleHexplane& layout, const StepTable& steps, RangeEncoder* enc,
         RangeDecoder* dec, ReplayTrace* trace)
      : model_(model), layout_(layout), steps_(steps), enc_(enc), dec_(dec), trace_(trace) {
    if (steps.size() != layout.num_scales()) throw ConfigError("step table does not match hexplane scales");
    if (layout.channels != model.config().channels) throw ConfigError("context model channels do not match hexplane");
  }

  double bits = 0.0;

  // Encoder inputs (padded scale-1 planes, cropped fine planes); decoder outputs.
  std::vector<std::array<Index, 6>> planes;
  std::array<Index, 3> latents;
  std::vector<std::array<Support, 6>> plane_support;
  std::array<Support, 3> latent_support{};

  void run() {
    const std::size_t ns = layout_.num_scales();
    planes.resize(ns);
    plane_support.resize(ns);
    decoded_.assign(ns, {});
    const std::size_t hp = mhcm::even_up(layout_.rows(0)), wp = mhcm::even_up(layout_.cols(0));
    const nn::Shape padded{layout_.channels, hp, wp};

    for (int c : mhcm::kSpaceTimeOrder) {
      const double q = steps_[0][mhcm::kSpaceTime];
      Graph g;
      nn::Shape zshape;
      if (enc_) {
        const Var z = model_.analysis(g, g.constant(values_of(padded, planes[0][c], q)));
        Tensor zr = g.value(z);
        for (auto& v : zr.values()) v = mhcm::quantize_value(v, 1.0);
        zshape = zr.shape();
        latents[c - 3] = index_of(zr, 1.0);
        latent_support[c - 3] = support_of(latents[c - 3]);
      } else {
        zshape = g.value(model_.analysis(g, g.constant(Tensor(padded)))).shape();
        latents[c - 3].assign(Tensor(zshape).size(), 0);
      }
      const auto zp = model_.latent_params(g, zshape);
      code(g.value(zp.mu), g.value(zp.sigma), 1.0, latent_support[c - 3], all_positions(latents[c - 3].size()),
           latents[c - 3], "latent " + std::string(scene::kPlaneNames[c]));
      if (trace_) {
        trace_->latent_mu.push_back(g.value(zp.mu));
        trace_->latent_sigma.push_back(g.value(zp.sigma));
      }
      const Var hyper = model_.synthesis(g, g.constant(values_of(zshape, latents[c - 3], 1.0)), hp, wp);
      checkerboard(g, 0, c, mhcm::kSpaceTime, hyper, padded, q);
      state_.set_space_time(c, decoded_[0][c]);
    }
    for (int c : mhcm::kSpaceOnlyOrder) {
      const double q = steps_[0][mhcm::kSpaceOnly];
      Graph g;
      const Var ctx = state_.inter_plane_context(g, model_, c, layout_.rows(0), layout_.cols(0));
      checkerboard(g, 0, c, mhcm::kSpaceOnly, mhcm::pad_even(g, ctx), padded, q);
    }
    for (std::size_t s = 1; s < ns; ++s)
      for (int c : mhcm::kFineScaleOrder) {
        const double q = steps_[s][mhcm::group_of(c)];
        const nn::Shape shape{layout_.channels, layout_.rows(s), layout_.cols(s)};
        Graph g;
        const auto p = model_.inter_scale(g, g.constant(decoded_[s - 1][c]), shape[1], shape[2]);
        prepare(s, c, shape);
        code(g.value(p.mu), g.value(p.sigma), q, plane_support[s][c], all_positions(planes[s][c].size()),
             planes[s][c], name(s, c));
        decoded_[s][c] = values_of(shape, planes[s][c], q);
        record(g.value(p.mu), g.value(p.sigma));
      }
  }

  const std::vector<std::array<Tensor, 6>>& decoded() const { return decoded_; }

 private:
  static std::string name(std::size_t s, int c) {
    return "scale " + std::to_string(s + 1) + " plane " + scene::kPlaneNames[c];
  }

  void prepare(std::size_t s, int c, const nn::Shape& shape) {
    if (enc_) {
      plane_support[s][c] = support_of(planes[s][c]);
    } else {
      planes[s][c].assign(Tensor(shape).size(), 0);
    }
  }

  void record(const Tensor& mu, const Tensor& sigma) {
    if (!trace_) return;
    trace_->mu.push_back(mu);
    trace_->sigma.push_back(sigma);
  }

  // Two passes: anchors from the hyper feature alone, then the rest with the
  // masked context over decoded anchors.
  void checkerboard(Graph& g, std::size_t s, int c, Group group, Var hyper, const nn::Shape& padded, double q) {
    prepare(s, c, padded);
    auto& idx = planes[s][c];
    const auto anchors = parity_positions(padded, true);
    const auto others = parity_positions(padded, false);

    const auto first = model_.checkerboard_params(g, group, hyper, g.constant(Tensor(padded)));
    code(g.value(first.mu), g.value(first.sigma), q, plane_support[s][c], anchors, idx, name(s, c) + " anchors");

    Index anchor_only(idx.size(), 0);
    for (auto p : anchors) anchor_only[p] = idx[p];
    const auto second = model_.checkerboard_params(g, group, hyper, g.constant(values_of(padded, anchor_only, q)));
    code(g.value(second.mu), g.value(second.sigma), q, plane_support[s][c], others, idx, name(s, c));

    Tensor mu = g.value(second.mu), sigma = g.value(second.sigma);
    for (auto p : anchors) mu[p] = g.value(first.mu)[p], sigma[p] = g.value(first.sigma)[p];
    record(mu, sigma);
    decoded_[s][c] = crop(values_of(padded, idx, q), layout_.rows(s), layout_.cols(s));
  }

  void code(const Tensor& mu, const Tensor& sigma, double q, Support sup, const std::vector<std::size_t>& positions,
            Index& idx, const std::string& what) {
    for (auto p : positions) {
      const auto [lo, hi] = table_range(mu[p], sigma[p], q, sup);
      const auto table = gaussian_cdf_table(mu[p], sigma[p], q, lo, hi);
      if (enc_) {
        if (idx[p] < sup.lo || idx[p] > sup.hi) throw EncodingError(what + ": index outside its support");
        enc_->encode(table, static_cast<std::size_t>(idx[p] - lo));
      } else {
        idx[p] = lo + static_cast<std::int64_t>(dec_->decode(table));
      }
      bits += mhcm::gaussian_bits(q * static_cast<double>(idx[p]), mu[p], sigma[p], q);
    }
  }

  ContextModel& model_;
  const MultiscaleHexplane& layout_;
  const StepTable& steps_;
  RangeEncoder* enc_;
  RangeDecoder* dec_;
  ReplayTrace* trace_;
  mhcm::DecodeState state_;
  std::vector<std::array<Tensor, 6>> decoded_;
};

}  // namespace

HexplaneEncoding encode_hexplane(ContextModel& model, const MultiscaleHexplane& hex, const StepTable& steps,
                                 ReplayTrace* trace) {
  RangeEncoder enc;
  Replay replay(model, hex, steps, &enc, nullptr, trace);
  replay.planes.resize(hex.num_scales());
  for (std::size_t s = 0; s < hex.num_scales(); ++s)
    for (int c = 0; c < 6; ++c) {
      const double q = steps[s][mhcm::group_of(c)];
      Tensor x = hex.plane(s, c);
      for (auto& v : x.values()) v = mhcm::quantize_value(v, q);
      if (s == 0) x = pad_zero(x, mhcm::even_up(x.dim(1)), mhcm::even_up(x.dim(2)));
      replay.planes[s][c] = index_of(x, q);
    }
  replay.run();

  HexplaneEncoding out;
  out.stream.planes = replay.plane_support;
  out.stream.latents = replay.latent_support;
  out.stream.bytes = enc.finish();
  out.estimate_bits = replay.bits;
  out.quantized = hex;
  for (std::size_t s = 0; s < hex.num_scales(); ++s)
    for (int c = 0; c < 6; ++c) out.quantized.scales[s][c].value = replay.decoded()[s][c];
  return out;
}

MultiscaleHexplane decode_hexplane(const HexplaneStream& stream, ContextModel& model, const MultiscaleHexplane& layout,
                                   const StepTable& steps, ReplayTrace* trace) {
  if (stream.planes.size() != layout.num_scales()) throw DecodeError("hexplane: support table does not match shape");
  RangeDecoder dec(stream.bytes, "hexplane");
  Replay replay(model, layout, steps, nullptr, &dec, trace);
  replay.plane_support = stream.planes;
  replay.latent_support = stream.latents;
  replay.run();
  dec.finish();
  MultiscaleHexplane out(layout.channels, layout.base_rows, layout.base_cols, layout.num_scales(), 0.0);
  for (std::size_t s = 0; s < layout.num_scales(); ++s)
    for (int c = 0; c < 6; ++c) out.scales[s][c].value = replay.decoded()[s][c];
  return out;
}

void write_hexplane_stream(io::ByteWriter& w, const MultiscaleHexplane& layout, const StepTable& steps,
                           const HexplaneStream& s) {
  scene::write_hexplane_shape(w, layout);
  for (const auto& st : steps)
    for (double q : st) w.f32(static_cast<float>(q));
  auto put = [&](Support sup) {
    w.i32(sup.lo);
    w.i32(sup.hi);
  };
  for (const auto& sc : s.planes)
    for (const auto& sup : sc) put(sup);
  for (const auto& sup : s.latents) put(sup);
  w.u32(static_cast<std::uint32_t>(s.bytes.size()));
  w.raw(s.bytes);
}

void read_hexplane_stream(io::ByteReader& r, MultiscaleHexplane& layout, StepTable& steps, HexplaneStream& s) {
  layout = scene::read_hexplane_shape(r);
  const std::size_t ns = layout.num_scales();
  steps.assign(ns, {});
  for (auto& st : steps)
    for (double& q : st) {
      q = r.f32();
      if (!(q > 0.0) || !std::isfinite(q)) r.fail("quantization step must be positive and finite");
    }
  auto get = [&]() {
    Support sup{r.i32(), 0};
    sup.hi = r.i32();
    if (sup.hi < sup.lo || static_cast<std::int64_t>(sup.hi) - sup.lo + 1 > static_cast<std::int64_t>(kMaxAlphabet))
      r.fail("symbol support [" + std::to_string(sup.lo) + ", " + std::to_string(sup.hi) + "] is invalid");
    return sup;
  };
  s.planes.assign(ns, {});
  for (auto& sc : s.planes)
    for (auto& sup : sc) sup = get();
  for (auto& sup : s.latents) sup = get();
  const std::size_t n = r.count(1, "stream byte");
  const auto* p = r.raw(n);
  s.bytes.assign(p, p + n);
}

}  // namespace l4gs::codec
