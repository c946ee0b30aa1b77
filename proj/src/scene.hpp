#pragma once

#include <string>
#include <vector>

#include "tensor.hpp"

namespace gimo {

// 3D scene as a labeled point cloud. Labels mark goal objects in synthetic
// scenes (-1 for unlabeled points such as the floor).
struct Scene {
  Tensor points;  // n x 3, meters
  std::vector<int> labels;
  std::string id;

  int size() const { return points.rows(); }
  void validate() const;

  void save(const std::string& path) const;
  static Scene load(const std::string& path);
};

// One 3D gaze point per input frame plus a per-frame validity flag.
struct GazeTrack {
  Tensor points;  // t x 3
  std::vector<bool> valid;

  int size() const { return points.rows(); }
  void validate(int expected_len) const;
};

}  // namespace gimo
