#pragma once

#include <string>

namespace gimo {

// Architecture hyperparameters shared by the scene encoder and the fusion
// network. `defaults` is the desk-scale model; `micro` is the reduced
// configuration used by gradient-fidelity tests.
struct ModelConfig {
  int latent = 256;  // transformer width; also d_p and d_o of the scene features
  int layers = 6;
  int heads = 4;
  int ffn_hidden = 256;
  int t_in = 6;
  int t_out = 10;

  int sa1_centroids = 256;
  int sa2_centroids = 64;
  double sa1_radius = 0.4;
  double sa2_radius = 0.8;
  int sa1_k = 32;
  int sa2_k = 16;
  int sa1_c1 = 32;
  int sa1_c2 = 64;
  int sa2_c1 = 64;
  int sa2_c2 = 128;
  int fp_width = 128;

  static constexpr int kPoseDim = 38;  // t(3) + r(3) + h(32)
  static constexpr int kHDim = 32;

  static ModelConfig defaults() { return ModelConfig{}; }

  static ModelConfig micro() {
    ModelConfig c;
    c.latent = 16;
    c.layers = 2;
    c.heads = 2;
    c.ffn_hidden = 16;
    c.sa1_centroids = 16;
    c.sa2_centroids = 8;
    c.sa1_radius = 1.2;
    c.sa2_radius = 2.4;
    c.sa1_k = 8;
    c.sa2_k = 8;
    c.sa1_c1 = 8;
    c.sa1_c2 = 16;
    c.sa2_c1 = 16;
    c.sa2_c2 = 16;
    c.fp_width = 16;
    return c;
  }

  std::string serialize() const;
  static ModelConfig deserialize(const std::string& line);
  bool operator==(const ModelConfig&) const = default;
};

}  // namespace gimo
