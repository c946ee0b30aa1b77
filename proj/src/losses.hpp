#pragma once

#include "body_model.hpp"
#include "tensor.hpp"

namespace gimo {

struct LossWeights {
  double lambda_t = 1.0;
  double lambda_o = 1.0;
  double lambda_p = 1.0;
};

// Per-frame-mean L1 losses over the predicted parameters. Orientation residuals
// are taken on canonicalized axis-angle on both sides.
double loss_translation(const MotionSequence& pred, const MotionSequence& gt);
double loss_orientation(const MotionSequence& pred, const MotionSequence& gt);
double loss_pose(const MotionSequence& pred, const MotionSequence& gt);
double loss_total(const MotionSequence& pred, const MotionSequence& gt, const LossWeights& w);

struct LossVars {
  Var translation;
  Var orientation;
  Var pose;
  Var total;
};

// Tape-level loss over raw network outputs (t_out x 38) against ground-truth
// parameters in the same layout.
LossVars loss_vars(Tape& tp, Var outputs, const Tensor& gt_params, const LossWeights& w);

// Ground-truth parameter matrix of a sequence (rows of t, r, h).
Tensor sequence_params(const MotionSequence& seq);

}  // namespace gimo
