#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "body_model.hpp"
#include "common.hpp"

using namespace gimo;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Oracle: rotation matrix via the truncated matrix exponential of the
// cross-product matrix, independent of the closed-form implementation.
std::array<double, 9> rotation_exp_oracle(const Vec3& r) {
  std::array<double, 9> k = {0, -r[2], r[1], r[2], 0, -r[0], -r[1], r[0], 0};
  std::array<double, 9> acc = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 9> term = acc;
  for (int n = 1; n <= 40; ++n) {
    std::array<double, 9> next{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int l = 0; l < 3; ++l) next[3 * i + j] += term[3 * i + l] * k[3 * l + j];
    for (int i = 0; i < 9; ++i) {
      term[i] = next[i] / n;
      acc[i] += term[i];
    }
  }
  return acc;
}

PoseFrame random_frame(Rng& rng, double r_scale = 1.0) {
  PoseFrame f;
  for (int c = 0; c < 3; ++c) {
    f.t[c] = rng.normal(0.0, 1.0);
    f.r[c] = rng.normal(0.0, r_scale);
  }
  for (double& v : f.h) v = rng.normal(0.0, 0.8);
  return f;
}

}  // namespace

TEST_CASE("decode_pose identity and translation cases") {
  const BodyTemplate& tpl = BodyTemplate::standard();
  PoseFrame x;
  BodyMesh mesh = decode_pose(x, tpl);
  for (int64_t i = 0; i < mesh.vertices.size(); ++i)
    CHECK(mesh.vertices[i] == tpl.base_vertices[i]);

  x.t = {1.0, 0.0, 0.0};
  BodyMesh shifted = decode_pose(x, tpl);
  for (int i = 0; i < tpl.vertex_count; ++i) {
    CHECK(shifted.vertices.at(i, 0) == mesh.vertices.at(i, 0) + 1.0);
    CHECK(shifted.vertices.at(i, 1) == mesh.vertices.at(i, 1));
    CHECK(shifted.vertices.at(i, 2) == mesh.vertices.at(i, 2));
  }
}

TEST_CASE("decode_pose half-turn matches the matrix exponential oracle") {
  const BodyTemplate& tpl = BodyTemplate::standard();
  PoseFrame x;
  x.r = {0.0, 0.0, kPi};
  BodyMesh mesh = decode_pose(x, tpl);
  for (int i = 0; i < tpl.vertex_count; ++i) {
    CHECK(mesh.vertices.at(i, 0) == doctest::Approx(-tpl.base_vertices.at(i, 0)).epsilon(1e-12));
    CHECK(mesh.vertices.at(i, 1) == doctest::Approx(-tpl.base_vertices.at(i, 1)).epsilon(1e-12));
    CHECK(mesh.vertices.at(i, 2) == tpl.base_vertices.at(i, 2));
  }

  Rng rng(5);
  for (int trial = 0; trial < 8; ++trial) {
    Vec3 r = {rng.normal(), rng.normal(), rng.normal()};
    auto got = rodrigues(r);
    auto expect = rotation_exp_oracle(r);
    for (int i = 0; i < 9; ++i) CHECK(std::fabs(got[i] - expect[i]) < 1e-12);
  }
  // series fallback region
  auto tiny = rodrigues({1e-8, -2e-8, 5e-9});
  auto tiny_expect = rotation_exp_oracle({1e-8, -2e-8, 5e-9});
  for (int i = 0; i < 9; ++i) CHECK(std::fabs(tiny[i] - tiny_expect[i]) < 1e-15);
}

TEST_CASE("canonicalize_axis_angle examples") {
  Vec3 zero = canonicalize_axis_angle({0.0, 0.0, 0.0});
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == 0.0);
  CHECK(zero[2] == 0.0);

  Vec3 wrapped = canonicalize_axis_angle({0.0, 0.0, 3.0 * kPi / 2.0});
  CHECK(wrapped[0] == doctest::Approx(0.0));
  CHECK(wrapped[2] == doctest::Approx(-kPi / 2.0).epsilon(1e-12));

  Vec3 half = canonicalize_axis_angle({0.0, 0.0, kPi});
  CHECK(std::sqrt(half[0] * half[0] + half[1] * half[1] + half[2] * half[2]) ==
        doctest::Approx(kPi).epsilon(1e-12));

  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Vec3 r = {rng.normal(0.0, 3.0), rng.normal(0.0, 3.0), rng.normal(0.0, 3.0)};
    Vec3 c = canonicalize_axis_angle(r);
    double norm = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
    CHECK(norm <= kPi + 1e-12);
    // same rotation
    auto ra = rodrigues(r), rb = rodrigues(c);
    for (int i = 0; i < 9; ++i) CHECK(std::fabs(ra[i] - rb[i]) < 1e-9);
  }
}

TEST_CASE("decode_pose properties") {
  const BodyTemplate& tpl = BodyTemplate::standard();
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    PoseFrame x = random_frame(rng);
    BodyMesh a = decode_pose(x, tpl);

    SUBCASE("") {}  // keep loop structure flat
    // translation equivariance
    PoseFrame y = x;
    y.t = {x.t[0] + 0.7, x.t[1] - 0.2, x.t[2] + 1.5};
    BodyMesh b = decode_pose(y, tpl);
    for (int i = 0; i < tpl.vertex_count; ++i) {
      CHECK(b.vertices.at(i, 0) == doctest::Approx(a.vertices.at(i, 0) + 0.7).epsilon(1e-12));
      CHECK(b.vertices.at(i, 1) == doctest::Approx(a.vertices.at(i, 1) - 0.2).epsilon(1e-12));
      CHECK(b.vertices.at(i, 2) == doctest::Approx(a.vertices.at(i, 2) + 1.5).epsilon(1e-12));
    }

    // rotation preserves pairwise distances
    PoseFrame z = x;
    z.r = {rng.normal(), rng.normal(), rng.normal()};
    BodyMesh c = decode_pose(z, tpl);
    for (int i = 0; i < 8; ++i)
      for (int j = i + 1; j < 8; ++j) {
        double da = 0.0, dc = 0.0;
        for (int k = 0; k < 3; ++k) {
          double ea = a.vertices.at(i, k) - a.vertices.at(j, k);
          double ec = c.vertices.at(i, k) - c.vertices.at(j, k);
          da += ea * ea;
          dc += ec * ec;
        }
        CHECK(std::fabs(std::sqrt(da) - std::sqrt(dc)) < 1e-9);
      }

    // canonicalize-then-decode equals decode
    PoseFrame w = x;
    w.r = {rng.normal(0.0, 3.0), rng.normal(0.0, 3.0), rng.normal(0.0, 3.0)};
    PoseFrame wc = w;
    wc.r = canonicalize_axis_angle(w.r);
    BodyMesh m1 = decode_pose(w, tpl), m2 = decode_pose(wc, tpl);
    for (int64_t i = 0; i < m1.vertices.size(); ++i)
      CHECK(std::fabs(m1.vertices[i] - m2.vertices[i]) < 1e-9);
  }
}

TEST_CASE("body template invariants and file round trip") {
  const BodyTemplate& tpl = BodyTemplate::standard();
  CHECK(tpl.vertex_count == 64);
  CHECK(tpl.joint_count == 15);
  CHECK_NOTHROW(tpl.validate());

  auto tmp = std::filesystem::temp_directory_path() / "gimo_body_test.txt";
  tpl.save(tmp.string());
  BodyTemplate loaded = BodyTemplate::load(tmp.string());
  CHECK(loaded.vertex_count == tpl.vertex_count);
  for (int64_t i = 0; i < tpl.pose_basis.size(); ++i)
    CHECK(loaded.pose_basis[i] == tpl.pose_basis[i]);
  for (int64_t i = 0; i < tpl.joint_regressor.size(); ++i)
    CHECK(loaded.joint_regressor[i] == tpl.joint_regressor[i]);
  std::filesystem::remove(tmp);

  CHECK_THROWS_AS(BodyTemplate::load("/nonexistent/body.txt"), IoError);

  PoseFrame bad;
  bad.h.resize(7);
  CHECK_THROWS_AS(decode_pose(bad, tpl), DimensionError);
}

TEST_CASE("shipped body asset matches the generated standard body") {
  // The asset file is the interchange copy of the in-code template.
  auto path = std::filesystem::path(__FILE__).parent_path().parent_path() / "assets" /
              "gimo_body_v1.txt";
  REQUIRE(std::filesystem::exists(path));
  BodyTemplate shipped = BodyTemplate::load(path.string());
  const BodyTemplate& tpl = BodyTemplate::standard();
  REQUIRE(shipped.vertex_count == tpl.vertex_count);
  for (int64_t i = 0; i < tpl.base_vertices.size(); ++i)
    CHECK(shipped.base_vertices[i] == tpl.base_vertices[i]);
  for (int64_t i = 0; i < tpl.pose_basis.size(); ++i)
    CHECK(shipped.pose_basis[i] == tpl.pose_basis[i]);
}
