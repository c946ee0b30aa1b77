#include "scene_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gimo {

namespace {

double dist2(const Tensor& pts, int row, const Vec3& q) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) {
    double d = pts.at(row, c) - q[c];
    s += d * d;
  }
  return s;
}

bool same_coord(const Tensor& pts, int a, int b) {
  return pts.at(a, 0) == pts.at(b, 0) && pts.at(a, 1) == pts.at(b, 1) &&
         pts.at(a, 2) == pts.at(b, 2);
}

// Farthest-point sampling over rows of `pts`, seeded at row 0, distance ties
// broken by the lowest row index.
std::vector<int> farthest_point_sample(const Tensor& pts, int m) {
  const int n = pts.rows();
  m = std::min(m, n);
  std::vector<int> picked;
  picked.reserve(static_cast<size_t>(m));
  picked.push_back(0);
  std::vector<double> best(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    best[static_cast<size_t>(i)] = dist2(pts, i, {pts.at(0, 0), pts.at(0, 1), pts.at(0, 2)});
  while (static_cast<int>(picked.size()) < m) {
    int arg = 0;
    for (int i = 1; i < n; ++i)
      if (best[static_cast<size_t>(i)] > best[static_cast<size_t>(arg)]) arg = i;
    picked.push_back(arg);
    const Vec3 c = {pts.at(arg, 0), pts.at(arg, 1), pts.at(arg, 2)};
    for (int i = 0; i < n; ++i)
      best[static_cast<size_t>(i)] = std::min(best[static_cast<size_t>(i)], dist2(pts, i, c));
  }
  return picked;
}

// K nearest distinct coordinates within the radius (duplicates collapse to the
// lowest-index representative); padded cyclically when fewer are available.
std::vector<int> radius_group(const Tensor& pts, const Vec3& center, double radius, int k) {
  const double r2 = radius * radius;
  std::vector<std::pair<double, int>> cand;
  for (int i = 0; i < pts.rows(); ++i) {
    double d2 = dist2(pts, i, center);
    if (d2 <= r2) cand.emplace_back(d2, i);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<int> out;
  for (const auto& [d2, i] : cand) {
    bool dup = false;
    for (int j : out)
      if (same_coord(pts, i, j)) {
        dup = true;
        break;
      }
    if (!dup) out.push_back(i);
    if (static_cast<int>(out.size()) == k) break;
  }
  if (out.empty()) throw ContractError("radius group is empty");  // center is always in range
  const size_t have = out.size();
  while (static_cast<int>(out.size()) < k) out.push_back(out[out.size() % have]);
  return out;
}

InterpEntry nn3_stencil(const Tensor& pts, int rows, const Vec3& q) {
  int idx[3] = {-1, -1, -1};
  double d2[3] = {0, 0, 0};
  int have = 0;
  for (int i = 0; i < rows; ++i) {
    double d = dist2(pts, i, q);
    int pos = have;
    while (pos > 0 && d < d2[pos - 1]) --pos;
    if (pos < 3) {
      for (int s = std::min(have, 2); s > pos; --s) {
        d2[s] = d2[s - 1];
        idx[s] = idx[s - 1];
      }
      d2[pos] = d;
      idx[pos] = i;
      have = std::min(have + 1, 3);
    }
  }
  InterpEntry e;
  if (have == 0) throw ContractError("interpolation over an empty point set");
  if (d2[0] < 1e-18) {  // exact hit: that point's feature row verbatim
    e.idx = {idx[0], 0, 0};
    e.w = {1.0, 0.0, 0.0};
    return e;
  }
  double wsum = 0.0;
  double w[3] = {0, 0, 0};
  for (int s = 0; s < have; ++s) {
    w[s] = 1.0 / std::sqrt(d2[s]);
    wsum += w[s];
  }
  for (int s = 0; s < 3; ++s) {
    e.idx[s] = (s < have) ? idx[s] : 0;
    e.w[s] = (s < have) ? w[s] / wsum : 0.0;
  }
  return e;
}

}  // namespace

LinearParams init_linear(int in, int out, Rng& rng) {
  LinearParams p;
  p.w = Tensor({in, out});
  const double a = std::sqrt(1.0 / in);
  for (int64_t i = 0; i < p.w.size(); ++i) p.w[i] = rng.uniform(-a, a);
  p.b = Tensor({1, out});
  return p;
}

SceneIndex SceneIndex::build(const Scene& scene, const ModelConfig& cfg) {
  scene.validate();
  const int n = scene.size();

  SceneIndex ix;
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int c = 0; c < 3; ++c) {
      if (scene.points.at(a, c) != scene.points.at(b, c))
        return scene.points.at(a, c) < scene.points.at(b, c);
    }
    return a < b;
  });
  ix.canon_to_orig = order;
  ix.points = Tensor({n, 3});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) ix.points.at(i, c) = scene.points.at(order[static_cast<size_t>(i)], c);

  ix.fps1 = farthest_point_sample(ix.points, cfg.sa1_centroids);
  ix.m1 = static_cast<int>(ix.fps1.size());
  Tensor level1({ix.m1, 3});
  for (int i = 0; i < ix.m1; ++i)
    for (int c = 0; c < 3; ++c) level1.at(i, c) = ix.points.at(ix.fps1[static_cast<size_t>(i)], c);

  ix.groups1.reserve(static_cast<size_t>(ix.m1) * cfg.sa1_k);
  ix.local1 = Tensor({ix.m1 * cfg.sa1_k, 3});
  for (int i = 0; i < ix.m1; ++i) {
    const Vec3 c = {level1.at(i, 0), level1.at(i, 1), level1.at(i, 2)};
    auto grp = radius_group(ix.points, c, cfg.sa1_radius, cfg.sa1_k);
    for (int k = 0; k < cfg.sa1_k; ++k) {
      ix.groups1.push_back(grp[static_cast<size_t>(k)]);
      for (int d = 0; d < 3; ++d)
        ix.local1.at(i * cfg.sa1_k + k, d) = ix.points.at(grp[static_cast<size_t>(k)], d) - c[d];
    }
  }

  ix.fps2 = farthest_point_sample(level1, cfg.sa2_centroids);
  ix.m2 = static_cast<int>(ix.fps2.size());
  Tensor level2({ix.m2, 3});
  for (int i = 0; i < ix.m2; ++i)
    for (int c = 0; c < 3; ++c) level2.at(i, c) = level1.at(ix.fps2[static_cast<size_t>(i)], c);

  ix.groups2.reserve(static_cast<size_t>(ix.m2) * cfg.sa2_k);
  ix.local2 = Tensor({ix.m2 * cfg.sa2_k, 3});
  for (int i = 0; i < ix.m2; ++i) {
    const Vec3 c = {level2.at(i, 0), level2.at(i, 1), level2.at(i, 2)};
    auto grp = radius_group(level1, c, cfg.sa2_radius, cfg.sa2_k);
    for (int k = 0; k < cfg.sa2_k; ++k) {
      ix.groups2.push_back(grp[static_cast<size_t>(k)]);
      for (int d = 0; d < 3; ++d)
        ix.local2.at(i * cfg.sa2_k + k, d) = level1.at(grp[static_cast<size_t>(k)], d) - c[d];
    }
  }

  ix.fp2_stencil.reserve(static_cast<size_t>(ix.m1));
  for (int i = 0; i < ix.m1; ++i)
    ix.fp2_stencil.push_back(
        nn3_stencil(level2, ix.m2, {level1.at(i, 0), level1.at(i, 1), level1.at(i, 2)}));

  ix.fp1_stencil.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    ix.fp1_stencil.push_back(
        nn3_stencil(level1, ix.m1, {ix.points.at(i, 0), ix.points.at(i, 1), ix.points.at(i, 2)}));

  return ix;
}

InterpEntry SceneIndex::query_stencil(const Vec3& e) const {
  return nn3_stencil(points, points.rows(), e);
}

Var Binder::operator()(const Tensor& t) {
  for (const auto& [ptr, var] : bound_)
    if (ptr == &t) return var;
  Var v = tape_.leaf(t, train_);
  bound_.emplace_back(&t, v);
  return v;
}

SceneFeatureVars encode_scene_vars(Binder& bind, const SceneIndex& ix,
                                   const SceneEncoderParams& p, const ModelConfig& cfg) {
  Tape& tp = bind.tape();
  Var h = tp.constant(ix.local1);
  h = tp.relu(linear(tp, h, bind(p.sa1_l1.w), bind(p.sa1_l1.b)));
  h = tp.relu(linear(tp, h, bind(p.sa1_l2.w), bind(p.sa1_l2.b)));
  Var f1 = tp.segment_max_rows(h, cfg.sa1_k);  // m1 x c2

  Var g2 = tp.concat({tp.constant(ix.local2), tp.gather_rows(f1, ix.groups2)}, 1);
  g2 = tp.relu(linear(tp, g2, bind(p.sa2_l1.w), bind(p.sa2_l1.b)));
  g2 = tp.relu(linear(tp, g2, bind(p.sa2_l2.w), bind(p.sa2_l2.b)));
  Var f2 = tp.segment_max_rows(g2, cfg.sa2_k);  // m2 x c2'

  Var up1 = tp.weighted_gather_rows(f2, ix.fp2_stencil);  // m1 x c2'
  Var g1 = tp.relu(linear(tp, tp.concat({up1, f1}, 1), bind(p.fp2.w), bind(p.fp2.b)));

  Var up0 = tp.weighted_gather_rows(g1, ix.fp1_stencil);  // n x fp_width
  Var fp = tp.relu(linear(tp, tp.concat({up0, tp.constant(ix.points)}, 1), bind(p.fp1.w),
                          bind(p.fp1.b)));

  SceneFeatureVars out;
  out.per_point = fp;
  out.global = tp.max_rows(fp);
  return out;
}

Var ambient_context_vars(Binder& bind, std::vector<InterpEntry> stencils, int frames,
                         Var per_point, const SceneEncoderParams& p) {
  Tape& tp = bind.tape();
  const int total = static_cast<int>(stencils.size());
  if (frames < 1 || total % frames != 0)
    throw DimensionError("vertex rows must split evenly into frames");
  Var iv = tp.weighted_gather_rows(per_point, std::move(stencils));
  Var h = tp.relu(linear(tp, iv, bind(p.ambient.w), bind(p.ambient.b)));
  return tp.segment_max_rows(h, total / frames);
}

SceneFeatures encode_scene(const Scene& scene, const SceneEncoderParams& params,
                           const ModelConfig& cfg) {
  SceneIndex ix = SceneIndex::build(scene, cfg);
  Tape tp;
  Binder bind(tp, false);
  SceneFeatureVars vars = encode_scene_vars(bind, ix, params, cfg);
  const Tensor& canon = tp.value(vars.per_point);
  SceneFeatures out;
  out.per_point = Tensor({scene.size(), cfg.latent});
  for (int i = 0; i < scene.size(); ++i) {
    const int orig = ix.canon_to_orig[static_cast<size_t>(i)];
    for (int c = 0; c < cfg.latent; ++c) out.per_point.at(orig, c) = canon.at(i, c);
  }
  out.global = tp.value(vars.global);
  return out;
}

Tensor interpolate_features(const SceneFeatures& feats, const Scene& scene, const Vec3& e) {
  if (feats.per_point.rows() != scene.size())
    throw DimensionError("feature rows do not match scene point count");
  InterpEntry st = nn3_stencil(scene.points, scene.size(), e);
  const int d = feats.per_point.cols();
  Tensor out({d});
  for (int k = 0; k < 3; ++k) {
    if (st.w[k] == 0.0) continue;
    for (int c = 0; c < d; ++c) out[c] += st.w[k] * feats.per_point.at(st.idx[k], c);
  }
  return out;
}

Tensor ambient_context(const BodyMesh& mesh, const SceneFeatures& feats, const Scene& scene,
                       const SceneEncoderParams& params) {
  const int v = mesh.vertices.rows();
  const int d = feats.per_point.cols();
  const int out_d = params.ambient.w.cols();
  Tensor out = Tensor::full({out_d}, -1e300);
  for (int i = 0; i < v; ++i) {
    Tensor f = interpolate_features(feats, scene, {mesh.vertices.at(i, 0), mesh.vertices.at(i, 1),
                                                   mesh.vertices.at(i, 2)});
    for (int j = 0; j < out_d; ++j) {
      double a = params.ambient.b[j];
      for (int c = 0; c < d; ++c) a += f[c] * params.ambient.w.at(c, j);
      out[j] = std::max(out[j], std::max(a, 0.0));
    }
  }
  return out;
}

Tensor gaze_feature(const SceneFeatures& feats, const Scene& scene, const Vec3& g, bool valid,
                    const Tensor& missing_bias) {
  if (valid) return interpolate_features(feats, scene, g);
  Tensor out({missing_bias.cols()});
  for (int c = 0; c < missing_bias.cols(); ++c) out[c] = missing_bias[c];
  return out;
}

SceneEncoderParams init_scene_encoder(const ModelConfig& cfg, Rng& rng) {
  SceneEncoderParams p;
  p.sa1_l1 = init_linear(3, cfg.sa1_c1, rng);
  p.sa1_l2 = init_linear(cfg.sa1_c1, cfg.sa1_c2, rng);
  p.sa2_l1 = init_linear(3 + cfg.sa1_c2, cfg.sa2_c1, rng);
  p.sa2_l2 = init_linear(cfg.sa2_c1, cfg.sa2_c2, rng);
  p.fp2 = init_linear(cfg.sa2_c2 + cfg.sa1_c2, cfg.fp_width, rng);
  p.fp1 = init_linear(cfg.fp_width + 3, cfg.latent, rng);
  p.ambient = init_linear(cfg.latent, cfg.latent, rng);
  return p;
}

}  // namespace gimo
