#include "losses.hpp"

#include <cmath>
#include <cstring>

namespace gimo {

namespace {

void check_lengths(const MotionSequence& pred, const MotionSequence& gt) {
  if (pred.size() != gt.size() || pred.frames.empty())
    throw ContractError("loss requires equal-length non-empty sequences, got " +
                        std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
}

}  // namespace

double loss_translation(const MotionSequence& pred, const MotionSequence& gt) {
  check_lengths(pred, gt);
  double acc = 0.0;
  for (size_t k = 0; k < pred.size(); ++k)
    for (int c = 0; c < 3; ++c) acc += std::fabs(pred.frames[k].t[c] - gt.frames[k].t[c]);
  return acc / static_cast<double>(pred.size());
}

double loss_orientation(const MotionSequence& pred, const MotionSequence& gt) {
  check_lengths(pred, gt);
  double acc = 0.0;
  for (size_t k = 0; k < pred.size(); ++k) {
    Vec3 a = canonicalize_axis_angle(pred.frames[k].r);
    Vec3 b = canonicalize_axis_angle(gt.frames[k].r);
    for (int c = 0; c < 3; ++c) acc += std::fabs(a[c] - b[c]);
  }
  return acc / static_cast<double>(pred.size());
}

double loss_pose(const MotionSequence& pred, const MotionSequence& gt) {
  check_lengths(pred, gt);
  double acc = 0.0;
  for (size_t k = 0; k < pred.size(); ++k)
    for (size_t c = 0; c < 32; ++c) acc += std::fabs(pred.frames[k].h[c] - gt.frames[k].h[c]);
  return acc / static_cast<double>(pred.size());
}

double loss_total(const MotionSequence& pred, const MotionSequence& gt, const LossWeights& w) {
  return w.lambda_t * loss_translation(pred, gt) + w.lambda_o * loss_orientation(pred, gt) +
         w.lambda_p * loss_pose(pred, gt);
}

Tensor sequence_params(const MotionSequence& seq) {
  Tensor out({static_cast<int>(seq.size()), 38});
  for (size_t k = 0; k < seq.size(); ++k) {
    auto pv = seq.frames[k].param_vector();
    std::memcpy(out.data() + static_cast<int64_t>(k) * 38, pv.data(), sizeof(double) * 38);
  }
  return out;
}

LossVars loss_vars(Tape& tp, Var outputs, const Tensor& gt_params, const LossWeights& w) {
  const Tensor& out = tp.value(outputs);
  if (out.shape() != gt_params.shape())
    throw ContractError("loss shapes disagree: " + out.shape_str() + " vs " +
                        gt_params.shape_str());
  const int t = out.rows();
  const double inv_t = 1.0 / t;
  Var gt = tp.constant(gt_params);

  Var dt = tp.sub(tp.slice_cols(outputs, 0, 3), tp.slice_cols(gt, 0, 3));
  Var pred_r = tp.canon_rows(tp.slice_cols(outputs, 3, 6));
  Var gt_r = tp.canon_rows(tp.slice_cols(gt, 3, 6));
  Var dr = tp.sub(pred_r, gt_r);
  Var dh = tp.sub(tp.slice_cols(outputs, 6, 38), tp.slice_cols(gt, 6, 38));

  LossVars l;
  l.translation = tp.scale(tp.sum(tp.abs_op(dt)), inv_t);
  l.orientation = tp.scale(tp.sum(tp.abs_op(dr)), inv_t);
  l.pose = tp.scale(tp.sum(tp.abs_op(dh)), inv_t);
  l.total = tp.add(tp.add(tp.scale(l.translation, w.lambda_t), tp.scale(l.orientation, w.lambda_o)),
                   tp.scale(l.pose, w.lambda_p));
  return l;
}

}  // namespace gimo
