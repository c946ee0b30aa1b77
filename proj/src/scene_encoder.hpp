#pragma once

#include <vector>

#include "body_model.hpp"
#include "model_config.hpp"
#include "scene.hpp"
#include "tensor.hpp"

namespace gimo {

struct LinearParams {
  Tensor w;
  Tensor b;  // stored as 1 x out
};

// Weights of the hierarchical point encoder plus the shared per-vertex MLP of
// the body-context feature.
struct SceneEncoderParams {
  LinearParams sa1_l1, sa1_l2;
  LinearParams sa2_l1, sa2_l2;
  LinearParams fp2, fp1;
  LinearParams ambient;
};

struct SceneFeatures {
  Tensor per_point;  // n x d_p, rows aligned with the scene's point order
  Tensor global;     // 1 x d_o
};

// Geometry-only preprocessing of a scene: canonical point order, farthest-point
// samples, radius groups and interpolation stencils. Depends only on point
// positions, so it is computed once per scene and reused across passes.
struct SceneIndex {
  Tensor points;                   // n x 3 in canonical (sorted) order
  std::vector<int> canon_to_orig;  // canonical row -> input row
  int m1 = 0, m2 = 0;

  std::vector<int> fps1;           // canonical indices of level-1 centroids
  Tensor local1;                   // (m1*k1) x 3 offsets to centroid
  std::vector<int> groups1;        // (m1*k1) canonical indices

  std::vector<int> fps2;           // level-1 rows chosen as level-2 centroids
  Tensor local2;                   // (m2*k2) x 3
  std::vector<int> groups2;        // (m2*k2) level-1 rows

  std::vector<InterpEntry> fp2_stencil;  // level-2 rows -> each level-1 position
  std::vector<InterpEntry> fp1_stencil;  // level-1 rows -> each canonical point

  static SceneIndex build(const Scene& scene, const ModelConfig& cfg);

  // Inverse-distance 3-NN stencil of an arbitrary query point over the
  // canonical cloud (exact-hit rule below 1e-9 distance).
  InterpEntry query_stencil(const Vec3& e) const;
};

struct SceneFeatureVars {
  Var per_point;  // n x latent, canonical order
  Var global;     // 1 x latent
};

// Binds a parameter tensor to a tape leaf, deduplicating repeated binds.
class Binder {
 public:
  Binder(Tape& tape, bool train) : tape_(tape), train_(train) {}
  Var operator()(const Tensor& t);
  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  bool train_;
  std::vector<std::pair<const Tensor*, Var>> bound_;
};

// Tape-level encoder used by training and prediction.
SceneFeatureVars encode_scene_vars(Binder& bind, const SceneIndex& index,
                                   const SceneEncoderParams& params, const ModelConfig& cfg);

// Tape-level body-context feature: one row per frame, pooled over mesh
// vertices. `stencils` holds frames*V interpolation entries over the
// canonical cloud (see SceneIndex::query_stencil).
Var ambient_context_vars(Binder& bind, std::vector<InterpEntry> stencils, int frames,
                         Var per_point, const SceneEncoderParams& params);

// --- value-level operations ------------------------------------------------

SceneFeatures encode_scene(const Scene& scene, const SceneEncoderParams& params,
                           const ModelConfig& cfg);

Tensor interpolate_features(const SceneFeatures& feats, const Scene& scene, const Vec3& e);

Tensor ambient_context(const BodyMesh& mesh, const SceneFeatures& feats, const Scene& scene,
                       const SceneEncoderParams& params);

Tensor gaze_feature(const SceneFeatures& feats, const Scene& scene, const Vec3& g, bool valid,
                    const Tensor& missing_bias);

// Fan-in-scaled uniform weights, zero biases.
LinearParams init_linear(int in, int out, Rng& rng);

// Parameter initialization; enumeration order is the serialization order.
SceneEncoderParams init_scene_encoder(const ModelConfig& cfg, Rng& rng);

}  // namespace gimo
