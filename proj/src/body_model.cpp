#include "body_model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace gimo {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

void check_finite3(const Vec3& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string(what) + " contains a non-finite value");
}

}  // namespace

void PoseFrame::validate() const {
  check_finite3(t, "translation");
  check_finite3(r, "orientation");
  if (h.size() != 32 || beta.size() != 10 || p.size() != 24)
    throw DimensionError("pose frame dims must be (3,3,32,10,24)");
  for (double v : h)
    if (!std::isfinite(v)) throw NumericError("pose embedding contains a non-finite value");
}

std::vector<double> PoseFrame::param_vector() const {
  std::vector<double> v;
  v.reserve(38);
  v.insert(v.end(), t.begin(), t.end());
  v.insert(v.end(), r.begin(), r.end());
  v.insert(v.end(), h.begin(), h.end());
  return v;
}

PoseFrame PoseFrame::from_params(const double* v, const PoseFrame& carry) {
  PoseFrame f;
  f.t = {v[0], v[1], v[2]};
  f.r = {v[3], v[4], v[5]};
  f.h.assign(v + 6, v + 38);
  f.beta = carry.beta;
  f.p = carry.p;
  return f;
}

void MotionSequence::validate() const {
  if (frames.empty()) throw ContractError("motion sequence must be non-empty");
  if (rate <= 0.0) throw ContractError("motion sequence rate must be positive");
  for (const PoseFrame& f : frames) f.validate();
}

void BodyTemplate::validate() const {
  const int v = vertex_count, j = joint_count;
  if (base_vertices.shape() != std::vector<int>{v, 3} ||
      base_joints.shape() != std::vector<int>{j, 3} ||
      pose_basis.shape() != std::vector<int>{3 * v, 32} ||
      joint_regressor.shape() != std::vector<int>{j, v})
    throw DimensionError("body template block shapes are inconsistent");
  for (int row = 0; row < j; ++row) {
    double s = 0.0;
    for (int c = 0; c < v; ++c) {
      double w = joint_regressor.at(row, c);
      if (w < 0.0) throw ContractError("joint regressor must be nonnegative");
      s += w;
    }
    if (std::fabs(s - 1.0) > 1e-9) throw ContractError("joint regressor rows must sum to 1");
  }
  for (int c = 0; c < 32; ++c) {
    double n2 = 0.0;
    for (int row = 0; row < 3 * v; ++row) n2 += pose_basis.at(row, c) * pose_basis.at(row, c);
    if (std::sqrt(n2) > 0.5) throw ContractError("pose basis column norm exceeds 0.5 m");
  }
}

std::array<double, 9> rodrigues(const Vec3& r) {
  const double theta2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  const double theta = std::sqrt(theta2);
  double c1, c2;  // sin(t)/t and (1-cos(t))/t^2
  if (theta < 1e-6) {
    c1 = 1.0 - theta2 / 6.0;
    c2 = 0.5 - theta2 / 24.0;
  } else {
    c1 = std::sin(theta) / theta;
    c2 = (1.0 - std::cos(theta)) / theta2;
  }
  // R = I + c1 [r]x + c2 [r]x^2
  const double x = r[0], y = r[1], z = r[2];
  return {1.0 + c2 * (-z * z - y * y), c2 * x * y - c1 * z, c2 * x * z + c1 * y,
          c2 * x * y + c1 * z, 1.0 + c2 * (-z * z - x * x), c2 * y * z - c1 * x,
          c2 * x * z - c1 * y, c2 * y * z + c1 * x, 1.0 + c2 * (-y * y - x * x)};
}

Vec3 canonicalize_axis_angle(const Vec3& r) {
  check_finite3(r, "orientation");
  const double theta = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  if (theta <= 1e-12) return r;
  double k = std::fmod(theta, 2.0 * kPi);
  const double canon = (k <= kPi) ? k : k - 2.0 * kPi;
  const double s = canon / theta;
  return {r[0] * s, r[1] * s, r[2] * s};
}

BodyMesh decode_pose(const PoseFrame& x, const BodyTemplate& tpl) {
  x.validate();
  const int v = tpl.vertex_count, j = tpl.joint_count;
  const auto rot = rodrigues(x.r);

  BodyMesh mesh;
  mesh.vertices = Tensor({v, 3});
  mesh.joints = Tensor({j, 3});
  for (int i = 0; i < v; ++i) {
    double p[3];
    for (int c = 0; c < 3; ++c) {
      double off = 0.0;
      for (int e = 0; e < 32; ++e) off += tpl.pose_basis.at(3 * i + c, e) * x.h[e];
      p[c] = tpl.base_vertices.at(i, c) + off;
    }
    for (int c = 0; c < 3; ++c)
      mesh.vertices.at(i, c) = rot[3 * c] * p[0] + rot[3 * c + 1] * p[1] + rot[3 * c + 2] * p[2] +
                               x.t[c];
  }
  for (int row = 0; row < j; ++row)
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int i = 0; i < v; ++i) s += tpl.joint_regressor.at(row, i) * mesh.vertices.at(i, c);
      mesh.joints.at(row, c) = s;
    }
  return mesh;
}

namespace {

// Approximate joint sites of a standing body, pelvis at the origin (meters).
const std::vector<Vec3>& joint_sites15() {
  static const std::vector<Vec3> sites = {
      {0.00, 0.00, 0.00},    // pelvis
      {0.00, 0.02, 0.22},    // spine
      {0.00, 0.02, 0.42},    // chest
      {0.00, 0.00, 0.58},    // neck
      {0.00, 0.02, 0.70},    // head
      {-0.20, 0.00, 0.50},   // left shoulder
      {0.20, 0.00, 0.50},    // right shoulder
      {-0.32, 0.02, 0.24},   // left elbow
      {0.32, 0.02, 0.24},    // right elbow
      {-0.36, 0.06, 0.00},   // left wrist
      {0.36, 0.06, 0.00},    // right wrist
      {-0.10, 0.00, -0.06},  // left hip
      {0.10, 0.00, -0.06},   // right hip
      {-0.12, 0.02, -0.48},  // left knee
      {0.12, 0.02, -0.48},   // right knee
  };
  return sites;
}

}  // namespace

BodyTemplate BodyTemplate::generate(int vertices, int joints, uint64_t seed) {
  const auto& sites = joint_sites15();
  if (joints > static_cast<int>(sites.size()))
    throw ContractError("at most 15 joints are supported");
  Rng rng(seed);

  BodyTemplate tpl;
  tpl.vertex_count = vertices;
  tpl.joint_count = joints;
  tpl.base_vertices = Tensor({vertices, 3});
  for (int i = 0; i < vertices; ++i) {
    const Vec3& s = sites[i % joints];
    for (int c = 0; c < 3; ++c) tpl.base_vertices.at(i, c) = s[c] + rng.normal(0.0, 0.12);
  }

  tpl.pose_basis = Tensor({3 * vertices, 32});
  for (int c = 0; c < 32; ++c) {
    double n2 = 0.0;
    std::vector<double> col(3 * vertices);
    for (int rr = 0; rr < 3 * vertices; ++rr) {
      col[rr] = rng.normal();
      n2 += col[rr] * col[rr];
    }
    const double scale = 0.1 / std::sqrt(n2);
    for (int rr = 0; rr < 3 * vertices; ++rr) tpl.pose_basis.at(rr, c) = col[rr] * scale;
  }

  tpl.joint_regressor = Tensor({joints, vertices});
  constexpr double kSigma2 = 2.0 * 0.15 * 0.15;
  for (int row = 0; row < joints; ++row) {
    double total = 0.0;
    for (int i = 0; i < vertices; ++i) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        double d = tpl.base_vertices.at(i, c) - sites[row][c];
        d2 += d * d;
      }
      double w = std::exp(-d2 / kSigma2);
      tpl.joint_regressor.at(row, i) = w;
      total += w;
    }
    for (int i = 0; i < vertices; ++i) tpl.joint_regressor.at(row, i) /= total;
  }

  tpl.base_joints = Tensor({joints, 3});
  for (int row = 0; row < joints; ++row)
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int i = 0; i < vertices; ++i)
        s += tpl.joint_regressor.at(row, i) * tpl.base_vertices.at(i, c);
      tpl.base_joints.at(row, c) = s;
    }

  tpl.validate();
  return tpl;
}

const BodyTemplate& BodyTemplate::standard() {
  static const BodyTemplate tpl = generate(64, 15, 0x47494d4f424f4459ull);
  return tpl;
}

const BodyTemplate& BodyTemplate::micro() {
  static const BodyTemplate tpl = generate(8, 4, 0x47494d4f4d494352ull);
  return tpl;
}

void BodyTemplate::save(const std::string& path) const {
  std::ostringstream out;
  out << "GIMO-BODY v1\n" << vertex_count << " " << joint_count << "\n";
  auto dump = [&out](const Tensor& t) {
    for (int r = 0; r < t.rows(); ++r) {
      for (int c = 0; c < t.cols(); ++c) out << (c ? " " : "") << format_double(t.at(r, c));
      out << "\n";
    }
  };
  dump(base_vertices);
  dump(base_joints);
  dump(pose_basis);
  dump(joint_regressor);
  write_text_file(path, out.str());
}

BodyTemplate BodyTemplate::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open body template: " + path);
  std::string header;
  std::getline(f, header);
  if (header != "GIMO-BODY v1") throw ParseError("bad body template header in " + path);
  BodyTemplate tpl;
  if (!(f >> tpl.vertex_count >> tpl.joint_count) || tpl.vertex_count < 1 || tpl.joint_count < 1)
    throw ParseError("bad body template counts in " + path);
  auto read = [&f, &path](Tensor& t, int rows, int cols) {
    t = Tensor({rows, cols});
    for (int64_t i = 0; i < t.size(); ++i)
      if (!(f >> t[i])) throw ParseError("truncated body template: " + path);
  };
  read(tpl.base_vertices, tpl.vertex_count, 3);
  read(tpl.base_joints, tpl.joint_count, 3);
  read(tpl.pose_basis, 3 * tpl.vertex_count, 32);
  read(tpl.joint_regressor, tpl.joint_count, tpl.vertex_count);
  tpl.validate();
  return tpl;
}

}  // namespace gimo
