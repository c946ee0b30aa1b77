#pragma once

#include <string>

#include "body_model.hpp"
#include "scene.hpp"

namespace gimo {

enum class Split { train, test_known, test_new };

std::string split_name(Split s);
Split split_from(const std::string& name);

// One training/evaluation sample: observed motion and gaze, the scene it
// happened in, and the ground-truth future.
struct Episode {
  MotionSequence past;    // 6 frames at 2 fps
  GazeTrack gaze;         // one gaze point per past frame
  MotionSequence future;  // 10 frames
  std::string scene_id;
  int intent_id = -1;
  Split split = Split::train;

  void validate() const;
};

}  // namespace gimo
