#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "scene_encoder.hpp"

using namespace gimo;

namespace {

Scene random_scene(int n, uint64_t seed, double extent = 3.0) {
  Rng rng(seed);
  Scene s;
  s.id = "test-scene";
  s.points = Tensor({n, 3});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) s.points.at(i, c) = rng.uniform(-extent, extent);
  return s;
}

}  // namespace

TEST_CASE("scene validation") {
  Scene tiny = random_scene(8, 1);
  CHECK_THROWS_WITH_AS(tiny.validate(), doctest::Contains("scene too small"), ContractError);

  Scene big = random_scene(32, 2);
  big.points.at(0, 0) = 100.0;
  CHECK_THROWS_AS(big.validate(), ContractError);  // bbox diagonal

  CHECK_NOTHROW(random_scene(32, 3).validate());
}

TEST_CASE("scene file round trip and parse errors") {
  Scene s = random_scene(32, 4);
  s.labels.assign(32, -1);
  for (int i = 0; i < 8; ++i) s.labels[static_cast<size_t>(i)] = 1;
  auto tmp = std::filesystem::temp_directory_path() / "gimo_scene_test.txt";
  s.save(tmp.string());
  Scene loaded = Scene::load(tmp.string());
  CHECK(loaded.size() == 32);
  for (int64_t i = 0; i < s.points.size(); ++i) CHECK(loaded.points[i] == s.points[i]);
  CHECK(loaded.labels == s.labels);

  // truncation reports a line number instead of crashing
  std::string text = read_text_file(tmp.string());
  write_text_file(tmp.string(), text.substr(0, text.size() / 2));
  CHECK_THROWS_WITH_AS(Scene::load(tmp.string()), doctest::Contains(":"), ParseError);
  std::filesystem::remove(tmp);
}

TEST_CASE("encode_scene permutation invariance is exact") {
  ModelConfig cfg = ModelConfig::micro();
  Scene s = random_scene(64, 5);
  Rng rng(6);
  SceneEncoderParams params = init_scene_encoder(cfg, rng);
  SceneFeatures base = encode_scene(s, params, cfg);

  // permute points
  std::vector<int> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  Rng shuf(7);
  for (int i = 63; i > 0; --i) std::swap(perm[i], perm[shuf.index(i + 1)]);
  Scene permuted = s;
  for (int i = 0; i < 64; ++i)
    for (int c = 0; c < 3; ++c) permuted.points.at(i, c) = s.points.at(perm[i], c);

  SceneFeatures other = encode_scene(permuted, params, cfg);
  for (int c = 0; c < cfg.latent; ++c) CHECK(other.global[c] == base.global[c]);
  for (int i = 0; i < 64; ++i)
    for (int c = 0; c < cfg.latent; ++c)
      CHECK(other.per_point.at(i, c) == base.per_point.at(perm[i], c));
}

TEST_CASE("encode_scene ignores duplicated points") {
  ModelConfig cfg = ModelConfig::micro();
  Scene s = random_scene(48, 8);
  Rng rng(9);
  SceneEncoderParams params = init_scene_encoder(cfg, rng);
  SceneFeatures base = encode_scene(s, params, cfg);

  Scene doubled;
  doubled.id = s.id;
  doubled.points = Tensor({96, 3});
  for (int i = 0; i < 48; ++i)
    for (int c = 0; c < 3; ++c) {
      doubled.points.at(2 * i, c) = s.points.at(i, c);
      doubled.points.at(2 * i + 1, c) = s.points.at(i, c);
    }
  SceneFeatures dup = encode_scene(doubled, params, cfg);
  for (int c = 0; c < cfg.latent; ++c) CHECK(dup.global[c] == base.global[c]);
}

TEST_CASE("global descriptor equals the explicit row max") {
  ModelConfig cfg = ModelConfig::micro();
  Scene s = random_scene(64, 10);
  Rng rng(11);
  SceneEncoderParams params = init_scene_encoder(cfg, rng);
  SceneFeatures f = encode_scene(s, params, cfg);
  for (int c = 0; c < cfg.latent; ++c) {
    double m = f.per_point.at(0, c);
    for (int i = 1; i < 64; ++i) m = std::max(m, f.per_point.at(i, c));
    CHECK(f.global[c] == m);
  }
}

TEST_CASE("interpolate_features matches the inverse-distance formula") {
  ModelConfig cfg = ModelConfig::micro();
  Scene s = random_scene(64, 12);
  Rng rng(13);
  SceneEncoderParams params = init_scene_encoder(cfg, rng);
  SceneFeatures f = encode_scene(s, params, cfg);

  SUBCASE("exact hit returns the row") {
    Vec3 e = {s.points.at(17, 0), s.points.at(17, 1), s.points.at(17, 2)};
    Tensor got = interpolate_features(f, s, e);
    for (int c = 0; c < cfg.latent; ++c) CHECK(got[c] == f.per_point.at(17, c));
  }

  SUBCASE("constant feature fields are reproduced exactly") {
    SceneFeatures constant = f;
    for (int i = 0; i < 64; ++i)
      for (int c = 0; c < cfg.latent; ++c) constant.per_point.at(i, c) = 2.5;
    Tensor got = interpolate_features(constant, s, {0.1, 0.2, 0.3});
    for (int c = 0; c < cfg.latent; ++c) CHECK(got[c] == doctest::Approx(2.5).epsilon(1e-12));
  }

  SUBCASE("two-point hand evaluation") {
    // features 0 and 1 at distances 1 and 3: (0*1 + 1*(1/3)) / (1 + 1/3) = 0.25
    Scene two;
    two.id = "pair";
    two.points = Tensor({2, 3}, {1.0, 0.0, 0.0, -3.0, 0.0, 0.0});
    SceneFeatures tf;
    tf.per_point = Tensor({2, 4});
    for (int c = 0; c < 4; ++c) tf.per_point.at(1, c) = 1.0;
    tf.global = Tensor({1, 4});
    Tensor got = interpolate_features(tf, two, {0.0, 0.0, 0.0});
    for (int c = 0; c < 4; ++c) CHECK(got[c] == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("random queries match an independent evaluation") {
    for (int trial = 0; trial < 20; ++trial) {
      Vec3 e = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
      // oracle: brute-force 3-NN + Eq. weights
      std::vector<std::pair<double, int>> d;
      for (int i = 0; i < 64; ++i) {
        double d2 = 0.0;
        for (int c = 0; c < 3; ++c) {
          double t = s.points.at(i, c) - e[c];
          d2 += t * t;
        }
        d.emplace_back(std::sqrt(d2), i);
      }
      std::sort(d.begin(), d.end());
      double wsum = 0.0;
      std::vector<double> expect(static_cast<size_t>(cfg.latent), 0.0);
      for (int k = 0; k < 3; ++k) {
        double w = 1.0 / d[static_cast<size_t>(k)].first;
        wsum += w;
        for (int c = 0; c < cfg.latent; ++c)
          expect[static_cast<size_t>(c)] += w * f.per_point.at(d[static_cast<size_t>(k)].second, c);
      }
      Tensor got = interpolate_features(f, s, e);
      for (int c = 0; c < cfg.latent; ++c)
        CHECK(got[c] == doctest::Approx(expect[static_cast<size_t>(c)] / wsum).epsilon(1e-10));
    }
  }

  SUBCASE("interpolation is continuous in the query point") {
    double fmax = 0.0;
    for (int64_t i = 0; i < f.per_point.size(); ++i)
      fmax = std::max(fmax, std::fabs(f.per_point[i]));
    for (int trial = 0; trial < 10; ++trial) {
      Vec3 e = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
      const double delta = 1e-7;
      Vec3 e2 = {e[0] + delta, e[1], e[2]};
      Tensor a = interpolate_features(f, s, e);
      Tensor b = interpolate_features(f, s, e2);
      for (int c = 0; c < cfg.latent; ++c)
        CHECK(std::fabs(a[c] - b[c]) <= 10.0 * delta * fmax + 1e-12);
    }
  }
}

TEST_CASE("ambient_context pools per-vertex features") {
  ModelConfig cfg = ModelConfig::micro();
  Scene s = random_scene(64, 14);
  Rng rng(15);
  SceneEncoderParams params = init_scene_encoder(cfg, rng);
  SceneFeatures f = encode_scene(s, params, cfg);

  BodyMesh mesh;
  mesh.vertices = Tensor({8, 3});
  for (int64_t i = 0; i < mesh.vertices.size(); ++i) mesh.vertices[i] = rng.uniform(-2, 2);

  Tensor out = ambient_context(mesh, f, s, params);

  SUBCASE("matches the explicit pooling oracle") {
    Tensor expect = Tensor::full({cfg.latent}, 0.0);
    bool first = true;
    for (int v = 0; v < 8; ++v) {
      Tensor iv = interpolate_features(f, s, {mesh.vertices.at(v, 0), mesh.vertices.at(v, 1),
                                              mesh.vertices.at(v, 2)});
      for (int j = 0; j < cfg.latent; ++j) {
        double a = params.ambient.b[j];
        for (int c = 0; c < cfg.latent; ++c) a += iv[c] * params.ambient.w.at(c, j);
        a = std::max(a, 0.0);
        expect[j] = first ? a : std::max(expect[j], a);
      }
      first = false;
    }
    for (int j = 0; j < cfg.latent; ++j) CHECK(out[j] == doctest::Approx(expect[j]).epsilon(1e-12));
  }

  SUBCASE("invariant to vertex ordering") {
    BodyMesh rev;
    rev.vertices = Tensor({8, 3});
    for (int v = 0; v < 8; ++v)
      for (int c = 0; c < 3; ++c) rev.vertices.at(v, c) = mesh.vertices.at(7 - v, c);
    Tensor out2 = ambient_context(rev, f, s, params);
    for (int j = 0; j < cfg.latent; ++j) CHECK(out2[j] == out[j]);
  }

  SUBCASE("single vertex reduces to the vertex MLP") {
    BodyMesh one;
    one.vertices = Tensor({1, 3});
    for (int c = 0; c < 3; ++c) one.vertices.at(0, c) = mesh.vertices.at(3, c);
    Tensor got = ambient_context(one, f, s, params);
    Tensor iv = interpolate_features(f, s, {one.vertices.at(0, 0), one.vertices.at(0, 1),
                                            one.vertices.at(0, 2)});
    for (int j = 0; j < cfg.latent; ++j) {
      double a = params.ambient.b[j];
      for (int c = 0; c < cfg.latent; ++c) a += iv[c] * params.ambient.w.at(c, j);
      CHECK(got[j] == doctest::Approx(std::max(a, 0.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("gaze_feature delegates and falls back") {
  ModelConfig cfg = ModelConfig::micro();
  Scene s = random_scene(64, 16);
  Rng rng(17);
  SceneEncoderParams params = init_scene_encoder(cfg, rng);
  SceneFeatures f = encode_scene(s, params, cfg);
  Tensor bias({1, cfg.latent});
  for (int c = 0; c < cfg.latent; ++c) bias[c] = 0.01 * c;

  // valid gaze on a scene point -> that point's feature
  Vec3 on = {s.points.at(5, 0), s.points.at(5, 1), s.points.at(5, 2)};
  Tensor got = gaze_feature(f, s, on, true, bias);
  for (int c = 0; c < cfg.latent; ++c) CHECK(got[c] == f.per_point.at(5, c));

  // valid gaze between points -> interpolation
  Vec3 between = {0.05, -0.4, 1.2};
  Tensor a = gaze_feature(f, s, between, true, bias);
  Tensor b = interpolate_features(f, s, between);
  for (int c = 0; c < cfg.latent; ++c) CHECK(a[c] == b[c]);

  // invalid gaze -> the missing-gaze embedding, constant across calls
  Tensor m1 = gaze_feature(f, s, between, false, bias);
  Tensor m2 = gaze_feature(f, s, on, false, bias);
  for (int c = 0; c < cfg.latent; ++c) {
    CHECK(m1[c] == bias[c]);
    CHECK(m1[c] == m2[c]);
  }
}

TEST_CASE("encode_scene rejects too-small scenes") {
  ModelConfig cfg = ModelConfig::micro();
  Rng rng(18);
  SceneEncoderParams params = init_scene_encoder(cfg, rng);
  Scene s = random_scene(8, 19);
  CHECK_THROWS_AS(encode_scene(s, params, cfg), ContractError);
}
