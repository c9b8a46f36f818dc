#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "grad_check.hpp"
#include "light4gs/errors.hpp"
#include "light4gs/mhcm/model.hpp"
#include "light4gs/mhcm/rate.hpp"

using namespace l4gs;
using namespace l4gs::mhcm;
using nn::Graph;
using nn::Tensor;
using nn::Var;
using l4gs::testing::random_tensor;

namespace {

double phi(double z) { return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))); }

MhcmConfig small_config() { return {.channels = 2, .hyper = 2, .latent = 1, .hidden = 4, .init_gain = 0.8}; }

scene::MultiscaleHexplane random_hex(std::mt19937& rng, std::size_t c, std::size_t r, std::size_t k,
                                     std::size_t scales, double lo = -1.0, double hi = 1.0) {
  scene::MultiscaleHexplane hex(c, r, k, scales);
  for (auto* p : hex.parameters()) p->value = random_tensor(p->value.shape(), rng, lo, hi);
  return hex;
}

}  // namespace

// ---- rate -----------------------------------------------------------------

TEST(Rate, UnitGaussianUnitStep) {
  EXPECT_NEAR(gaussian_bits(0.0, 0.0, 1.0, 1.0), -std::log2(phi(0.5) - phi(-0.5)), 1e-12);
  EXPECT_NEAR(gaussian_bits(0.0, 0.0, 1.0, 1.0), 1.3848, 1e-4);
}

TEST(Rate, EmptySetIsZeroBits) {
  Graph g;
  const Var e = g.constant(Tensor({0}));
  const Var b = gaussian_bits(g, e, e, e, g.constant(Tensor::scalar(1.0)));
  EXPECT_EQ(g.value(b)[0], 0.0);
}

TEST(Rate, WiderSigmaCostsMoreAtTheMean) {
  double prev = gaussian_bits(0.3, 0.3, 0.1, 0.5);
  for (double s = 0.2; s < 50; s *= 2) {
    const double b = gaussian_bits(0.3, 0.3, s, 0.5);
    EXPECT_GT(b, prev);
    prev = b;
  }
}

TEST(Rate, FarTailIsFlooredAt32Bits) {
  EXPECT_DOUBLE_EQ(gaussian_bits(100.0, 0.0, 1.0, 1.0), 32.0);
  // Both tails use the accurate branch: symmetric values agree.
  EXPECT_NEAR(gaussian_bits(5.0, 0.0, 1.0, 1.0), gaussian_bits(-5.0, 0.0, 1.0, 1.0), 1e-9);
}

TEST(Rate, NonPositiveSigmaIsInternalError) {
  EXPECT_THROW(gaussian_bits(0.0, 0.0, 0.0, 1.0), InternalError);
  Graph g;
  const Var x = g.constant(Tensor({2}, 0.0));
  EXPECT_THROW(gaussian_bits(g, x, x, g.constant(Tensor({2}, -1.0)), g.constant(Tensor::scalar(1.0))), InternalError);
}

TEST(Rate, GradientsMatchFiniteDifferences) {
  std::mt19937 rng(1);
  const Tensor x = random_tensor({2, 3, 3}, rng, -1.0, 1.0);
  const Tensor mu = random_tensor({2, 3, 3}, rng, -1.0, 1.0);
  const Tensor sigma = random_tensor({2, 3, 3}, rng, 0.2, 1.5);
  const auto r = l4gs::testing::check_input_grads(
      [](Graph& g, const std::vector<Var>& in) { return gaussian_bits(g, in[0], in[1], in[2], in[3]); },
      {x, mu, sigma, Tensor::scalar(0.4)}, 1e-6);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

// ---- quantization ---------------------------------------------------------

TEST(Quantize, RoundsHalfAwayFromZero) {
  const Tensor x({4}, {0.4, 0.5, -0.5, 1.49});
  const auto q = quantize(x, 1.0, Mode::kEval);
  EXPECT_EQ(q[0], 0.0);
  EXPECT_EQ(q[1], 1.0);
  EXPECT_EQ(q[2], -1.0);
  EXPECT_EQ(q[3], 1.0);
  EXPECT_DOUBLE_EQ(quantize(Tensor({1}, 0.37), 0.25, Mode::kEval)[0], 0.25);
}

TEST(Quantize, TrainModeIsSeededAndBounded) {
  const Tensor x({50}, 0.3);
  std::mt19937_64 a(9), b(9);
  const auto qa = quantize(x, 0.2, Mode::kTrain, &a);
  const auto qb = quantize(x, 0.2, Mode::kTrain, &b);
  EXPECT_TRUE(qa == qb);
  for (double v : qa.values()) EXPECT_LE(std::abs(v - 0.3), 0.1);
  EXPECT_THROW(quantize(x, 0.2, Mode::kTrain, nullptr), StateError);
}

TEST(Quantize, StepsStayPositiveAndFloat32) {
  QuantSteps q(2, 0.05, 0.1);
  EXPECT_EQ(q.value(0, kSpaceOnly), static_cast<double>(static_cast<float>(q.value(0, kSpaceOnly))));
  EXPECT_NEAR(q.value(1, kSpaceTime), 0.1, 1e-7);
  q.raw[0][0].value[0] = -40.0;
  EXPECT_GT(q.value(0, 0), 0.0);
}

// ---- checkerboard ---------------------------------------------------------

TEST(Checkerboard, AnchorsAreOddParityAndPartitionThePlane) {
  const auto a = checkerboard_mask(2, 4, 6, true);
  const auto n = checkerboard_mask(2, 4, 6, false);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        EXPECT_EQ(a.at(c, i, j), (i + j) % 2 == 1 ? 1.0 : 0.0);
        EXPECT_EQ(a.at(c, i, j) + n.at(c, i, j), 1.0);
      }
}

TEST(Checkerboard, ZeroMaskConvMakesNonAnchorsMatchAnchors) {
  std::mt19937 rng(2);
  ContextModel m(small_config(), 3);
  m.mask_conv.weight.value.fill(0.0);
  Graph g;
  const Var hyper = g.constant(random_tensor({2, 4, 6}, rng));
  const Var plane = g.constant(random_tensor({2, 4, 6}, rng));
  const auto merged = m.checkerboard_params(g, kSpaceTime, hyper, plane);
  const auto anchor_style = m.head(g, kSpaceTime, hyper, Var{});
  EXPECT_TRUE(g.value(merged.mu) == g.value(anchor_style.mu));
  EXPECT_TRUE(g.value(merged.sigma) == g.value(anchor_style.sigma));
}

TEST(Checkerboard, AnchorParamsIgnoreNonAnchorValues) {
  std::mt19937 rng(4);
  ContextModel m(small_config(), 5);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor hyper = random_tensor({2, 6, 4}, rng);
    Tensor plane = random_tensor({2, 6, 4}, rng);
    Tensor zeroed = plane;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j)
          if (!is_anchor(i, j)) zeroed.at(c, i, j) = 0.0;
    Graph g;
    const auto full = m.checkerboard_params(g, kSpaceOnly, g.constant(hyper), g.constant(plane));
    const auto cut = m.checkerboard_params(g, kSpaceOnly, g.constant(hyper), g.constant(zeroed));
    // Every parameter, anchor or not, depends only on anchor values given the hyper feature.
    EXPECT_TRUE(g.value(full.mu) == g.value(cut.mu));
    EXPECT_TRUE(g.value(full.sigma) == g.value(cut.sigma));
  }
}

TEST(Checkerboard, OddPlaneIsRejected) {
  ContextModel m(small_config(), 5);
  Graph g;
  EXPECT_THROW(m.checkerboard_params(g, kSpaceTime, g.constant(Tensor({2, 3, 4})), g.constant(Tensor({2, 3, 4}))),
               InternalError);
}

// ---- inter-plane context --------------------------------------------------

TEST(InterPlane, ConstantPlanesGiveConstantContext) {
  ContextModel m(small_config(), 6);
  DecodeState st;
  for (int c : kSpaceTimeOrder) st.set_space_time(c, Tensor({2, 4, 5}, 0.7));
  Graph g;
  const auto& ctx = g.value(st.inter_plane_context(g, m, 1, 4, 4));
  for (std::size_t k = 0; k < ctx.dim(0); ++k)
    for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(ctx[k * 16 + i], ctx[k * 16]);
}

TEST(InterPlane, SingleTimestepAverageIsThePlane) {
  std::mt19937 rng(7);
  Graph g;
  const Tensor p = random_tensor({2, 5, 1}, rng);
  EXPECT_TRUE(g.value(time_average(g, g.constant(p))) == p);
}

TEST(InterPlane, MatchesLoopOracle) {
  std::mt19937 rng(8);
  ContextModel m(small_config(), 9);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t rows = 3 + trial, times = 2 + trial % 3;
    std::array<Tensor, 3> st;
    DecodeState ds;
    for (int a = 0; a < 3; ++a) {
      st[a] = random_tensor({2, rows, times}, rng);
      ds.set_space_time(3 + a, st[a]);
    }
    const int target = trial % 3;  // xy, xz, yz
    const auto ax = scene::kPlaneAxes[target];
    Graph g;
    const auto& got = g.value(ds.inter_plane_context(g, m, target, rows, rows));

    const auto& w = m.proj.weight.value;
    const auto& b = m.proj.bias.value;
    for (std::size_t o = 0; o < got.dim(0); ++o)
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < rows; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < 2; ++c) {
            double ai = 0.0, bj = 0.0;
            for (std::size_t t = 0; t < times; ++t) {
              ai += st[ax.first].at(c, i, t);
              bj += st[ax.second].at(c, j, t);
            }
            acc += w[(o * 4 + c) * 1] * ai / double(times) + w[(o * 4 + 2 + c) * 1] * bj / double(times);
          }
          EXPECT_NEAR(got.at(o, i, j), acc, 1e-10);
        }
  }
}

TEST(InterPlane, RequestBeforeSpaceTimeDecodeIsSequencingError) {
  ContextModel m(small_config(), 6);
  DecodeState st;
  st.set_space_time(3, Tensor({2, 4, 4}));
  Graph g;
  EXPECT_THROW(st.inter_plane_context(g, m, 0, 4, 4), SequencingError);  // xy needs yt
  st.set_space_time(4, Tensor({2, 4, 4}));
  EXPECT_NO_THROW(st.inter_plane_context(g, m, 0, 4, 4));
  EXPECT_THROW(st.inter_plane_context(g, m, 2, 4, 4), SequencingError);  // yz needs zt
}

// ---- inter-scale context --------------------------------------------------

TEST(InterScale, AlignedUpsampleKeepsCoarseValues) {
  std::mt19937 rng(10);
  const Tensor coarse = random_tensor({2, 4, 5}, rng);
  const auto fine = nn::resize_bilinear(coarse, 7, 9);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(fine.at(c, 2 * i, 2 * j), coarse.at(c, i, j), 1e-14);
}

TEST(InterScale, ConstantCoarseGivesIdenticalParams) {
  ContextModel m(small_config(), 11);
  Graph g;
  const auto p = m.inter_scale(g, g.constant(Tensor({2, 3, 3}, 0.4)), 6, 6);
  const auto& mu = g.value(p.mu);
  const auto& sigma = g.value(p.sigma);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 1; i < 36; ++i) {
      EXPECT_EQ(mu[c * 36 + i], mu[c * 36]);
      EXPECT_EQ(sigma[c * 36 + i], sigma[c * 36]);
    }
}

TEST(InterScale, CalibratedMeansTrackUpsampledCoarse) {
  std::mt19937 rng(12);
  const double noise = 0.05;
  auto hex = random_hex(rng, 2, 6, 6, 2);
  std::normal_distribution<double> n(0.0, noise);
  for (int c = 0; c < 6; ++c) {
    auto up = nn::resize_bilinear(hex.plane(0, c), 12, 12);
    for (auto& v : up.values()) v += n(rng);
    hex.plane(1, c) = up;
  }
  ContextModel m(small_config(), 13);
  QuantSteps q(2, 0.01, 0.01);
  calibrate(m, hex, q);
  Graph g;
  const auto coding = code_hexplane(g, m, scene::plane_constants(g, hex), hex, q, {});
  double dev = 0.0;
  std::size_t count = 0;
  for (const auto& pc : coding.planes) {
    if (pc.scale == 0) continue;
    const auto interp = nn::resize_bilinear(g.value(coding.decoded[0][pc.plane]), 12, 12);
    const auto& mu = g.value(pc.params.mu);
    for (std::size_t i = 0; i < mu.size(); ++i) dev += std::abs(mu[i] - interp[i]);
    count += mu.size();
  }
  EXPECT_LT(dev / double(count), 2.0 * noise);
}

// ---- full model -----------------------------------------------------------

TEST(Model, ParameterBudget) {
  ContextModel m(MhcmConfig{}, 0);
  // h_a, h_s, bias-free MaskConv, two heads, projection, inter-scale head, latent prior.
  const std::size_t expected = (8 * 4 * 9 + 4) + (4 * 4 * 9 + 4) + (4 * 2 * 9 + 2) + (2 * 4 * 9 + 4) +
                               2 * (4 * 4 * 9 + 4) + 8 * 8 * 9 + 2 * ((12 * 16 + 16) + (16 * 16 + 16)) +
                               (16 * 4 + 4) + (8 * 16 + 16) + (16 * 16 + 16) + 2 * 2;
  EXPECT_EQ(m.parameter_count(), expected);
}

TEST(Model, DecodeOrderCoversEveryPlaneOnce) {
  std::mt19937 rng(14);
  const auto hex = random_hex(rng, 2, 3, 5, 3);
  ContextModel m(small_config(), 15);
  QuantSteps q(3, 0.1, 0.1);
  Graph g;
  const auto coding = code_hexplane(g, m, scene::plane_constants(g, hex), hex, q, {});
  ASSERT_EQ(coding.planes.size(), 18u);
  EXPECT_EQ(coding.latents.size(), 3u);
  const int expect_first[6] = {3, 4, 5, 0, 1, 2};
  for (int k = 0; k < 6; ++k) EXPECT_EQ(coding.planes[k].plane, expect_first[k]);
  for (std::size_t k = 6; k < 18; ++k) EXPECT_EQ(coding.planes[k].scale, 1 + (k - 6) / 6);
  // Scale-1 planes of odd extent are padded to 4x6.
  EXPECT_EQ(g.value(coding.planes[0].values).dim(1), 4u);
  EXPECT_EQ(g.value(coding.planes[0].values).dim(2), 6u);
}

TEST(Model, RateGradientsMatchFiniteDifferences) {
  std::mt19937 rng(16);
  auto hex = random_hex(rng, 2, 4, 4, 2, -0.5, 0.5);
  ContextModel m(small_config(), 17);
  QuantSteps q(2, 0.15, 0.2);
  calibrate(m, hex, q);
  auto build = [&](Graph& g) {
    std::mt19937_64 noise(99);
    const auto coding =
        code_hexplane(g, m, scene::plane_params(g, hex), hex, q, {Mode::kTrain, true, &noise});
    return coding.total_bits;
  };
  std::vector<nn::Parameter*> params = hex.parameters();
  for (auto* p : q.parameters()) params.push_back(p);
  for (auto* p : m.parameters()) params.push_back(p);
  // Total is a few hundred bits; a smaller step drowns in round-off.
  const auto r = l4gs::testing::check_param_grads(build, params, 1e-5, 6, 3);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Model, BitrateMapSumsToPlaneRate) {
  std::mt19937 rng(18);
  const auto hex = random_hex(rng, 2, 4, 4, 2);
  ContextModel m(small_config(), 19);
  QuantSteps q(2, 0.1, 0.1);
  calibrate(m, hex, q);
  const auto maps = bitrate_map(m, hex, q);
  double total = 0.0;
  for (const auto& s : maps)
    for (const auto& t : s)
      for (double v : t.values()) total += v;
  Graph g;
  const auto coding = code_hexplane(g, m, scene::plane_constants(g, hex), hex, q, {});
  // Even 4x4 planes carry no padding, so the map covers every coded element.
  EXPECT_NEAR(total, g.value(coding.plane_bits)[0], 1e-6 * total);
}
