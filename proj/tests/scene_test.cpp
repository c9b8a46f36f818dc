#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "grad_check.hpp"
#include "light4gs/errors.hpp"
#include "light4gs/io/bytes.hpp"
#include "light4gs/scene/deform.hpp"
#include "light4gs/scene/io.hpp"
#include "light4gs/scene/render.hpp"
#include "light4gs/scene/toy.hpp"

using namespace l4gs;
using namespace l4gs::scene;
using nn::Tensor;
using l4gs::testing::random_tensor;

namespace {

MultiscaleHexplane random_hexplane(std::mt19937& rng, std::size_t h = 3, std::size_t r = 4, std::size_t c = 5,
                                   std::size_t scales = 2) {
  MultiscaleHexplane hex(h, r, c, scales);
  for (auto* p : hex.parameters()) p->value = random_tensor(p->value.shape(), rng, 0.5, 1.5);
  return hex;
}

// Feature oracle built only from bilinear_sample and explicit coordinate maps.
std::vector<double> features_oracle(const MultiscaleHexplane& hex, const SceneBounds& b, const Vec3& mu, double t) {
  const double coord[4] = {(mu[0] - b.lo[0]) / (b.hi[0] - b.lo[0]), (mu[1] - b.lo[1]) / (b.hi[1] - b.lo[1]),
                           (mu[2] - b.lo[2]) / (b.hi[2] - b.lo[2]), t};
  const int pairs[6][2] = {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}};
  std::vector<double> out;
  for (std::size_t s = 0; s < hex.num_scales(); ++s) {
    std::vector<double> prod(hex.channels, 1.0);
    for (int c = 0; c < 6; ++c) {
      const auto& p = hex.plane(s, c);
      const auto v = nn::bilinear_sample(p, coord[pairs[c][1]] * double(p.dim(2) - 1),
                                         coord[pairs[c][0]] * double(p.dim(1) - 1));
      for (std::size_t k = 0; k < hex.channels; ++k) prod[k] *= v[k];
    }
    out.insert(out.end(), prod.begin(), prod.end());
  }
  return out;
}

DeformationNetwork random_net(std::mt19937& rng, std::size_t in, double scale = 0.3) {
  DeformationNetwork net({in, 6, 5, kDeformOutputs});
  for (auto* p : net.parameters()) p->value = random_tensor(p->value.shape(), rng, -scale, scale);
  return net;
}

GaussianPrimitive make_prim(Vec3 mu, double opacity, double sh0, double scale = 0.1, std::size_t k = 1) {
  GaussianPrimitive p;
  p.mu = mu;
  p.scale = {scale, scale, scale};
  p.opacity = opacity;
  p.sh.assign(3 * k, 0.0);
  for (int c = 0; c < 3; ++c) p.sh[c * k] = sh0;
  return p;
}

Camera unit_camera(std::size_t size = 16, double ps = 0.125) {
  Camera c;
  c.height = c.width = size;
  c.pixel_scale = ps;
  return c;
}

}  // namespace

// ---- hexplane query -------------------------------------------------------

TEST(Hexplane, AllOnesGivesOnes) {
  MultiscaleHexplane hex(4, 3, 3, 2, 1.0);
  const auto f = query_hexplane(hex, SceneBounds{}, {0.1, -0.3, 0.7}, 0.4);
  ASSERT_EQ(f.size(), 8u);
  for (double v : f) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Hexplane, OnePlaneTwoDoublesItsScaleBlock) {
  MultiscaleHexplane hex(3, 4, 4, 2, 1.0);
  hex.plane(1, 4).fill(2.0);
  const auto f = query_hexplane(hex, SceneBounds{}, {0.2, 0.2, -0.5}, 0.9);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(f[k], 1.0);
  for (std::size_t k = 3; k < 6; ++k) EXPECT_DOUBLE_EQ(f[k], 2.0);
}

TEST(Hexplane, MatchesCompositionalOracle) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0), ut(0.0, 1.0);
  const SceneBounds b{{-1.5, -1.0, -2.0}, {1.0, 1.5, 2.0}};
  for (int trial = 0; trial < 20; ++trial) {
    const auto hex = random_hexplane(rng, 3, 3 + trial % 3, 4 + trial % 2, 1 + trial % 3);
    const Vec3 mu{u(rng), u(rng), u(rng)};
    const double t = ut(rng);
    const auto got = query_hexplane(hex, b, mu, t);
    const auto want = features_oracle(hex, b, mu, t);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10);
  }
}

TEST(Hexplane, DeterministicAndTimeChecked) {
  std::mt19937 rng(4);
  const auto hex = random_hexplane(rng);
  const auto a = query_hexplane(hex, SceneBounds{}, {0.3, 0.1, 0.2}, 0.5);
  const auto b = query_hexplane(hex, SceneBounds{}, {0.3, 0.1, 0.2}, 0.5);
  EXPECT_EQ(a, b);
  EXPECT_THROW(query_hexplane(hex, SceneBounds{}, {0, 0, 0}, 1.5), InputError);
  EXPECT_THROW(query_hexplane(hex, SceneBounds{}, {0, 0, 0}, -0.1), InputError);
}

TEST(Hexplane, GradientsMatchFiniteDifferences) {
  std::mt19937 rng(5);
  auto hex = random_hexplane(rng, 2, 3, 4, 2);
  const SceneBounds b{};
  Tensor mu = random_tensor({4, 3}, rng, -0.9, 0.9);
  Tensor weights = random_tensor({4, 4}, rng);
  auto build_params = [&](nn::Graph& g) {
    const auto planes = plane_params(g, hex);
    const auto f = hexplane_features(g, planes, hex, b, g.constant(mu), 0.37);
    return nn::sum(g, nn::mul_const(g, f, weights));
  };
  const auto rp = l4gs::testing::check_param_grads(build_params, hex.parameters(), 1e-6);
  EXPECT_LT(rp.max_rel_error, 1e-4);

  const auto rm = l4gs::testing::check_input_grads(
      [&](nn::Graph& g, const std::vector<nn::Var>& in) {
        const auto planes = plane_constants(g, hex);
        return nn::sum(g, nn::mul_const(g, hexplane_features(g, planes, hex, b, in[0], 0.37), weights));
      },
      {mu}, 1e-6);
  EXPECT_LT(rm.max_rel_error, 1e-4);
}

// ---- deformation ----------------------------------------------------------

TEST(Deform, ZeroNetworkIsIdentity) {
  std::mt19937 rng(6);
  const auto hex = random_hexplane(rng);
  DeformationNetwork net({hex.feature_dim() + 1, 4, kDeformOutputs});
  auto p = make_prim({0.2, -0.1, 0.4}, 0.7, 0.3);
  p.rot = {0.5, 0.5, 0.5, 0.5};
  const auto d = deform(p, net, hex, SceneBounds{}, 0.3);
  for (int a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(d.mu[a], p.mu[a]);
  for (int a = 0; a < 4; ++a) EXPECT_NEAR(d.rot[a], p.rot[a], 1e-15);
  for (int a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(d.scale[a], p.scale[a]);
  EXPECT_EQ(d.opacity, p.opacity);
  EXPECT_EQ(d.sh, p.sh);
}

TEST(Deform, BiasShiftsPosition) {
  std::mt19937 rng(7);
  const auto hex = random_hexplane(rng);
  DeformationNetwork net({hex.feature_dim() + 1, kDeformOutputs});
  net.layers[0].bias.value[0] = 1.0;
  const auto p = make_prim({0.25, -0.5, 0.125}, 0.5, 0.0);
  const auto d = deform(p, net, hex, SceneBounds{}, 0.5);
  EXPECT_DOUBLE_EQ(d.mu[0], 1.25);
  EXPECT_DOUBLE_EQ(d.mu[1], -0.5);
  EXPECT_DOUBLE_EQ(d.mu[2], 0.125);
}

TEST(Deform, MatchesManualComposition) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto hex = random_hexplane(rng);
    const auto net = random_net(rng, hex.feature_dim() + 1);
    auto p = make_prim({u(rng), u(rng), u(rng)}, 0.6, 0.1);
    p.rot = {0.9, 0.1, -0.3, 0.2};
    const double n0 = std::sqrt(0.81 + 0.01 + 0.09 + 0.04);
    for (auto& v : p.rot) v /= n0;
    const double t = 0.1 * trial;

    auto x = features_oracle(hex, SceneBounds{}, p.mu, t);
    x.push_back(t);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const auto& w = net.layers[l].weight.value;
      const auto& b = net.layers[l].bias.value;
      std::vector<double> y(w.dim(0));
      for (std::size_t o = 0; o < y.size(); ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < x.size(); ++i) acc += w.at(o, i) * x[i];
        y[o] = (l + 1 < net.layers.size()) ? std::max(acc, 0.0) : acc;
      }
      x = y;
    }
    GaussianPrimitive want = p;
    for (int a = 0; a < 3; ++a) want.mu[a] += x[a];
    double nq = 0.0;
    for (int a = 0; a < 4; ++a) {
      want.rot[a] += x[3 + a];
      nq += want.rot[a] * want.rot[a];
    }
    for (auto& v : want.rot) v /= std::sqrt(nq);
    for (int a = 0; a < 3; ++a) want.scale[a] = std::max(want.scale[a] + x[7 + a], kMinScale);

    const auto got = deform(p, net, hex, SceneBounds{}, t);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(got.mu[a], want.mu[a], 1e-10);
    for (int a = 0; a < 4; ++a) EXPECT_NEAR(got.rot[a], want.rot[a], 1e-10);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(got.scale[a], want.scale[a], 1e-10);
  }
}

// ---- renderer -------------------------------------------------------------

TEST(Render, SingleOpaqueSplatGivesItsColor) {
  const auto cam = unit_camera();
  // Pixel (8,8) center sits at world (0.0625, 0.0625).
  const auto p = make_prim({0.0625, 0.0625, 0.0}, 1.0, 0.7);
  const auto r = rasterize({p}, 1, cam);
  const double c = 0.5 + kShC0 * 0.7;
  for (int ch = 0; ch < 3; ++ch) EXPECT_DOUBLE_EQ(r.image.at(ch, 8, 8), c);
  EXPECT_GT(r.record.pixel_hits[0], 0u);
}

TEST(Render, EmptySceneIsBlack) {
  const auto r = rasterize({}, 1, unit_camera());
  for (double v : r.image.values()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(r.record.pixel_hits.empty());
}

TEST(Render, TwoHalfTransparentSplatsBlend) {
  const auto cam = unit_camera();
  auto front = make_prim({0.0625, 0.0625, 0.0}, 0.5, 1.0);
  auto back = make_prim({0.0625, 0.0625, 1.0}, 0.5, -1.0);
  const double c1 = 0.5 + kShC0, c2 = 0.5 - kShC0;
  for (const auto& order : {std::vector{front, back}, std::vector{back, front}}) {
    const auto r = rasterize(order, 1, cam);
    EXPECT_NEAR(r.image.at(0, 8, 8), 0.5 * c1 + 0.25 * c2, 1e-15);
  }
}

TEST(Render, ZeroOpacityLeavesBackground) {
  std::mt19937 rng(9);
  const auto scene = generate_toy_scene({.primitives = 40, .timestamps = 3, .views = 1, .image_size = 24, .seed = 2});
  auto prims = scene.primitives;
  for (auto& p : prims) p.opacity = 0.0;
  const auto r = render(scene, prims, scene.cameras[0], 0.5);
  for (double v : r.image.values()) EXPECT_EQ(v, 0.0);
  for (auto h : r.record.pixel_hits) EXPECT_EQ(h, 0u);
}

TEST(Render, InvariantToPrimitiveOrder) {
  const auto scene = generate_toy_scene({.primitives = 60, .timestamps = 3, .views = 1, .image_size = 32, .seed = 4});
  const auto deformed = deform_all(scene, scene.primitives, 0.25);
  const auto base = rasterize(deformed, scene.sh_k, scene.cameras[0]);
  std::mt19937 rng(10);
  std::vector<std::size_t> perm(deformed.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (int trial = 0; trial < 3; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<GaussianPrimitive> shuffled;
    for (auto i : perm) shuffled.push_back(deformed[i]);
    const auto r = rasterize(shuffled, scene.sh_k, scene.cameras[0]);
    EXPECT_TRUE(r.image == base.image);
    for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_EQ(r.record.pixel_hits[k], base.record.pixel_hits[perm[k]]);
  }
}

// Brute force: full 3x3 covariance, explicit 2x2 inverse, every pixel tested.
TEST(Render, IntersectionCountsMatchBruteForce) {
  const auto scene = generate_toy_scene({.primitives = 50, .timestamps = 2, .views = 2, .image_size = 32, .seed = 5});
  for (const auto& cam : scene.cameras) {
    const auto r = rasterize(scene.primitives, scene.sh_k, cam);
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
      const auto& p = scene.primitives[i];
      const auto R = quat_to_matrix(p.rot);
      double sigma[3][3] = {};
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          for (int k = 0; k < 3; ++k) sigma[a][b] += R[a * 3 + k] * p.scale[k] * p.scale[k] * R[b * 3 + k];
      double cov[2][2] = {};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v)
              cov[a][b] += cam.rotation[a * 3 + u] * sigma[u][v] * cam.rotation[b * 3 + v];
      for (auto& row : cov)
        for (auto& v : row) v /= cam.pixel_scale * cam.pixel_scale;
      const double det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
      double centre[2];
      for (int a = 0; a < 2; ++a) {
        double acc = cam.translation[a];
        for (int u = 0; u < 3; ++u) acc += cam.rotation[a * 3 + u] * p.mu[u];
        centre[a] = acc / cam.pixel_scale + (a == 0 ? cam.width : cam.height) / 2.0;
      }
      std::uint32_t hits = 0;
      for (std::size_t y = 0; y < cam.height; ++y)
        for (std::size_t x = 0; x < cam.width; ++x) {
          const double dx = x + 0.5 - centre[0], dy = y + 0.5 - centre[1];
          const double m = (cov[1][1] * dx * dx - 2 * cov[0][1] * dx * dy + cov[0][0] * dy * dy) / det;
          if (m <= 9.0 && p.opacity * std::exp(-0.5 * m) > 1.0 / 255.0) ++hits;
        }
      EXPECT_EQ(r.record.pixel_hits[i], hits) << "primitive " << i;
    }
  }
}

TEST(Render, ZeroAreaPrimitiveIsSkippedAndCounted) {
  auto p = make_prim({0.0, 0.0, 0.0}, 1.0, 0.5);
  p.scale = {0.5, 1e-9, 1e-9};
  const auto r = rasterize({p}, 1, unit_camera());
  EXPECT_EQ(r.record.degenerate_skipped, 1u);
  EXPECT_EQ(r.record.pixel_hits[0], 0u);
  for (double v : r.image.values()) EXPECT_EQ(v, 0.0);
}

TEST(Render, CameraMustBeOrthonormal) {
  auto cam = unit_camera();
  cam.rotation[0] = 1.1;
  EXPECT_THROW(rasterize({}, 1, cam), InputError);
}

TEST(Render, AnalyticGradientMatchesFiniteDifferences) {
  std::mt19937 rng(11);
  Camera cam = orbit_camera(0.4, 12, 12, 0.1);
  const std::size_t n = 5, k = 2;
  std::vector<GaussianPrimitive> prims;
  std::uniform_real_distribution<double> u(-0.3, 0.3), s(0.08, 0.2), o(0.4, 0.9), c(-1, 1);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = make_prim({u(rng), u(rng), u(rng)}, o(rng), c(rng), 0.1, k);
    p.scale = {s(rng), s(rng), s(rng)};
    std::normal_distribution<double> nd;
    double nq = 0.0;
    for (auto& v : p.rot) {
      v = nd(rng);
      nq += v * v;
    }
    for (auto& v : p.rot) v /= std::sqrt(nq);
    p.sh[k + 0] = c(rng);
    p.sh[2 * k + 0] = c(rng);
    prims.push_back(p);
  }
  const auto t = to_tensors(prims, k);
  const Tensor target = random_tensor({3, 12, 12}, rng, 0.0, 1.0);
  const auto r = l4gs::testing::check_input_grads(
      [&](nn::Graph& g, const std::vector<nn::Var>& in) {
        return nn::mse(g, rasterize_op(g, in[0], in[1], in[2], in[3], in[4], k, cam), target);
      },
      {t.mu, t.rot, t.scale, t.opacity, t.sh}, 1e-6);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Render, PsnrOfIdenticalImagesIsCapped) {
  Tensor a({3, 2, 2}, 0.3);
  EXPECT_EQ(psnr(a, a), 100.0);
  Tensor b({3, 2, 2}, 0.4);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

// ---- scene files ----------------------------------------------------------

TEST(SceneIo, RoundTripIsExact) {
  const auto scene = generate_toy_scene({.primitives = 30, .timestamps = 5, .views = 3, .base_cols = 7, .seed = 1});
  const auto bytes = serialize_scene(scene);
  const auto back = parse_scene(bytes);
  EXPECT_EQ(back.bounds, scene.bounds);
  EXPECT_EQ(back.sh_k, scene.sh_k);
  EXPECT_EQ(back.primitives, scene.primitives);
  EXPECT_TRUE(back.hexplane.same_values(scene.hexplane));
  EXPECT_TRUE(back.deformation.same_values(scene.deformation));
  EXPECT_EQ(back.cameras, scene.cameras);
  EXPECT_EQ(back.timestamps, scene.timestamps);
  EXPECT_EQ(serialize_scene(back), bytes);
}

TEST(SceneIo, GeneratedSceneLoadsWithDeclaredCounts) {
  const ToyConfig cfg{.primitives = 77, .timestamps = 9, .views = 4, .channels = 4, .scales = 3, .seed = 9};
  const auto path = ::testing::TempDir() + "toy.l4gs-scn";
  save_scene(path, generate_toy_scene(cfg));
  const auto s = load_scene(path);
  EXPECT_EQ(s.primitives.size(), 77u);
  EXPECT_EQ(s.timestamps, 9u);
  EXPECT_EQ(s.cameras.size(), 4u);
  EXPECT_EQ(s.hexplane.num_scales(), 3u);
  EXPECT_EQ(s.hexplane.channels, 4u);
  EXPECT_EQ(s.sh_k, 16u);
  std::remove(path.c_str());
}

TEST(SceneIo, CorruptionIsReportedWithSection) {
  const auto bytes = serialize_scene(generate_toy_scene({.primitives = 10, .timestamps = 2, .views = 1, .seed = 3}));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_scene(bad), FormatError);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 10);
  try {
    parse_scene(truncated);
    FAIL() << "truncation accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("cameras"), std::string::npos) << e.what();
  }

  auto flipped = bytes;
  flipped[bytes.size() - 1] ^= 0x40;  // last byte belongs to the cameras payload
  try {
    parse_scene(flipped);
    FAIL() << "flip accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("cameras: checksum"), std::string::npos) << e.what();
  }
}

TEST(Toy, FaintFractionAndDeterminism) {
  const ToyConfig cfg{.primitives = 100, .faint_fraction = 0.5, .seed = 12};
  const auto a = generate_toy_scene(cfg);
  const auto b = generate_toy_scene(cfg);
  EXPECT_EQ(serialize_scene(a), serialize_scene(b));
  const auto faint = std::count_if(a.primitives.begin(), a.primitives.end(),
                                   [](const GaussianPrimitive& p) { return p.opacity < 0.02; });
  EXPECT_EQ(faint, 50);
}

TEST(Toy, MotionFollowsTheProgram) {
  // x drifts linearly with t; y oscillates with period 1.
  const auto scene = generate_toy_scene({.primitives = 5, .timestamps = 4, .views = 1, .seed = 13});
  const auto p0 = deform_all(scene, scene.primitives, 0.0);
  const auto p1 = deform_all(scene, scene.primitives, 1.0);
  for (std::size_t i = 0; i < p0.size(); ++i) {
    EXPECT_NEAR(p1[i].mu[0] - p0[i].mu[0], 0.2, 1e-6);
    EXPECT_NEAR(p1[i].mu[1], p0[i].mu[1], 1e-6);
  }
}
