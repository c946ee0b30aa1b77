#include "scene.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace gimo {

void Scene::validate() const {
  const int n = size();
  if (n < 16) throw ContractError("scene too small: " + std::to_string(n) + " points (minimum 16)");
  if (points.rank() != 2 || points.cols() != 3)
    throw DimensionError("scene points must be n x 3, got " + points.shape_str());
  if (!points.all_finite()) throw NumericError("scene contains non-finite coordinates");
  if (!labels.empty() && static_cast<int>(labels.size()) != n)
    throw DimensionError("scene label count does not match point count");
  double lo[3], hi[3];
  for (int c = 0; c < 3; ++c) lo[c] = hi[c] = points.at(0, c);
  for (int i = 1; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      lo[c] = std::min(lo[c], points.at(i, c));
      hi[c] = std::max(hi[c], points.at(i, c));
    }
  double diag2 = 0.0;
  for (int c = 0; c < 3; ++c) diag2 += (hi[c] - lo[c]) * (hi[c] - lo[c]);
  if (diag2 > 400.0) throw ContractError("scene bounding box diagonal exceeds 20 m");
}

void Scene::save(const std::string& path) const {
  std::ostringstream out;
  out << "GIMO-SCENE v1\n" << size() << "\n";
  for (int i = 0; i < size(); ++i) {
    out << format_double(points.at(i, 0)) << " " << format_double(points.at(i, 1)) << " "
        << format_double(points.at(i, 2));
    if (!labels.empty()) out << " " << labels[i];
    out << "\n";
  }
  write_text_file(path, out.str());
}

Scene Scene::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open scene file: " + path);
  std::string header;
  std::getline(f, header);
  if (header != "GIMO-SCENE v1") throw ParseError(path + ":1: bad scene header");
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ":2: missing point count");
  int n = 0;
  try {
    n = std::stoi(line);
  } catch (const std::exception&) {
    throw ParseError(path + ":2: bad point count '" + line + "'");
  }
  Scene scene;
  scene.points = Tensor({std::max(n, 1), 3});
  bool any_label = false, all_label = true;
  for (int i = 0; i < n; ++i) {
    if (!std::getline(f, line))
      throw ParseError(path + ":" + std::to_string(3 + i) + ": truncated point list");
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x >> y >> z))
      throw ParseError(path + ":" + std::to_string(3 + i) + ": malformed point line");
    scene.points.at(i, 0) = x;
    scene.points.at(i, 1) = y;
    scene.points.at(i, 2) = z;
    int label;
    if (ss >> label) {
      if (scene.labels.empty()) scene.labels.assign(static_cast<size_t>(n), -1);
      scene.labels[static_cast<size_t>(i)] = label;
      any_label = true;
    } else {
      all_label = false;
    }
  }
  if (any_label && !all_label)
    throw ParseError(path + ": labels must be present on all points or none");
  scene.validate();
  return scene;
}

void GazeTrack::validate(int expected_len) const {
  if (points.rank() != 2 || points.cols() != 3)
    throw DimensionError("gaze track must be t x 3, got " + points.shape_str());
  if (points.rows() != expected_len)
    throw ContractError("gaze track length " + std::to_string(points.rows()) +
                        " does not match past-motion length " + std::to_string(expected_len));
  if (static_cast<int>(valid.size()) != points.rows())
    throw DimensionError("gaze validity mask length mismatch");
  if (!points.all_finite()) throw NumericError("gaze track contains non-finite coordinates");
}

}  // namespace gimo
