#pragma once

#include "body_model.hpp"

namespace gimo {

// Translation/orientation errors in parameter space (L1, canonical axis-angle
// for orientation) and MPJPE in millimeters.
struct PoseErrors {
  double trans = 0.0;
  double ori = 0.0;
  double mpjpe = 0.0;
};

// Errors of the final predicted pose only.
PoseErrors destination_error(const MotionSequence& pred, const MotionSequence& gt,
                             const BodyTemplate& tpl);

// The same three quantities averaged over all predicted frames.
PoseErrors path_error(const MotionSequence& pred, const MotionSequence& gt,
                      const BodyTemplate& tpl);

}  // namespace gimo
