#include "metrics.hpp"

#include <cmath>

namespace gimo {

namespace {

PoseErrors frame_errors(const PoseFrame& pred, const PoseFrame& gt, const BodyTemplate& tpl) {
  PoseErrors e;
  for (int c = 0; c < 3; ++c) e.trans += std::fabs(pred.t[c] - gt.t[c]);
  Vec3 a = canonicalize_axis_angle(pred.r);
  Vec3 b = canonicalize_axis_angle(gt.r);
  for (int c = 0; c < 3; ++c) e.ori += std::fabs(a[c] - b[c]);
  BodyMesh mp = decode_pose(pred, tpl);
  BodyMesh mg = decode_pose(gt, tpl);
  double acc = 0.0;
  for (int j = 0; j < tpl.joint_count; ++j) {
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      double d = mp.joints.at(j, c) - mg.joints.at(j, c);
      d2 += d * d;
    }
    acc += std::sqrt(d2);
  }
  e.mpjpe = 1000.0 * acc / tpl.joint_count;
  return e;
}

}  // namespace

PoseErrors destination_error(const MotionSequence& pred, const MotionSequence& gt,
                             const BodyTemplate& tpl) {
  if (pred.size() != gt.size() || pred.frames.empty())
    throw ContractError("destination_error requires equal-length non-empty sequences");
  return frame_errors(pred.frames.back(), gt.frames.back(), tpl);
}

PoseErrors path_error(const MotionSequence& pred, const MotionSequence& gt,
                      const BodyTemplate& tpl) {
  if (pred.size() != gt.size() || pred.frames.empty())
    throw ContractError("path_error requires equal-length non-empty sequences");
  PoseErrors acc;
  for (size_t k = 0; k < pred.size(); ++k) {
    PoseErrors e = frame_errors(pred.frames[k], gt.frames[k], tpl);
    acc.trans += e.trans;
    acc.ori += e.ori;
    acc.mpjpe += e.mpjpe;
  }
  const double n = static_cast<double>(pred.size());
  acc.trans /= n;
  acc.ori /= n;
  acc.mpjpe /= n;
  return acc;
}

}  // namespace gimo
