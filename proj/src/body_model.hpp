#pragma once

#include <array>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace gimo {

using Vec3 = std::array<double, 3>;

// One motion frame: global translation t, global orientation r (axis-angle),
// body pose embedding h, shape beta, hand pose p. beta and p ride along in the
// data model but never drive geometry.
struct PoseFrame {
  Vec3 t{0.0, 0.0, 0.0};
  Vec3 r{0.0, 0.0, 0.0};
  std::vector<double> h = std::vector<double>(32, 0.0);
  std::vector<double> beta = std::vector<double>(10, 0.0);
  std::vector<double> p = std::vector<double>(24, 0.0);

  void validate() const;
  // The 38 learned parameters (t, r, h) as one flat row.
  std::vector<double> param_vector() const;
  static PoseFrame from_params(const double* v, const PoseFrame& carry);
};

struct MotionSequence {
  std::vector<PoseFrame> frames;
  double rate = 2.0;  // frames per second

  size_t size() const { return frames.size(); }
  void validate() const;
};

struct BodyMesh {
  Tensor vertices;  // V x 3
  Tensor joints;    // J x 3
};

// Linear parametric body: a fixed vertex cloud, a pose basis mapping the 32-D
// embedding to vertex offsets, and a row-stochastic joint regressor.
struct BodyTemplate {
  int vertex_count = 0;
  int joint_count = 0;
  Tensor base_vertices;    // V x 3
  Tensor base_joints;      // J x 3
  Tensor pose_basis;       // (3V) x 32
  Tensor joint_regressor;  // J x V

  void validate() const;

  // The body shared by every build: V=64, J=15, generated from a fixed seed.
  static const BodyTemplate& standard();
  // Tiny body for gradient-check scale tests: V=8, J=4.
  static const BodyTemplate& micro();

  static BodyTemplate generate(int vertices, int joints, uint64_t seed);
  void save(const std::string& path) const;
  static BodyTemplate load(const std::string& path);
};

// Rotation matrix (row-major 3x3) from an axis-angle vector; series fallback
// below 1e-6 magnitude.
std::array<double, 9> rodrigues(const Vec3& r);

// Equivalent axis-angle with norm in [0, pi].
Vec3 canonicalize_axis_angle(const Vec3& r);

BodyMesh decode_pose(const PoseFrame& x, const BodyTemplate& tpl);

}  // namespace gimo
