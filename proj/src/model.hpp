#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "episode.hpp"
#include "model_config.hpp"
#include "scene_encoder.hpp"

namespace gimo {

enum class Variant { full, no_gaze, pointnet_global, vanilla, rnn_gaze, echo, hold };

std::string variant_name(Variant v);
Variant variant_from(const std::string& name);
// Variants with learnable parameters (the two baselines echo/hold have none).
bool variant_trainable(Variant v);

struct AttentionParams {
  Tensor wq, wk, wv;
};

struct LayerNormParams {
  Tensor gain, bias;  // rank-1 {d}
};

struct FfnParams {
  LinearParams l1, l2;
};

struct CrossLayerParams {
  LayerNormParams ln_q, ln_kv;
  AttentionParams attn;
  LayerNormParams ln_f;
  FfnParams ffn;
};

struct SelfLayerParams {
  LayerNormParams ln;
  AttentionParams attn;
  LayerNormParams ln_f;
  FfnParams ffn;
};

// Attention stack mapping a t_i-length input to a t_q-length output: one
// cross-attention layer driven by the query sequence, then self-attention
// layers on the latent.
struct CrossTransformerParams {
  CrossLayerParams cross;
  std::vector<SelfLayerParams> selfs;
};

struct DecoderLayerParams {
  LayerNormParams ln_self;
  AttentionParams self_attn;
  LayerNormParams ln_q, ln_kv;
  AttentionParams cross_attn;
  LayerNormParams ln_f;
  FfnParams ffn;
};

struct RnnLayerParams {
  Tensor w_ih, w_hh, b;
};

struct RnnParams {
  LinearParams input;  // 41 -> latent (38 motion params + 3 gaze)
  std::vector<RnnLayerParams> layers;
  LinearParams head;  // latent -> 38
};

// All learned weights of one model variant, plus the architecture description
// needed to rebuild it from a checkpoint.
struct ModelParams {
  Variant variant = Variant::full;
  ModelConfig config;

  SceneEncoderParams scene;           // hierarchical encoder (not pointnet_global)
  LinearParams pn_l1, pn_l2, pn_fc;   // pointnet_global scene encoder
  LinearParams mv_lin, gaze_lin;      // pointnet_global feature maps
  LinearParams motion_embed;          // 38 -> latent
  Tensor missing_gaze;                // 1 x latent
  CrossTransformerParams ct_ms, ct_mg, ct_gm;
  LinearParams fuse_proj;             // 3*latent -> latent
  Tensor input_pe;                    // t_in x latent
  CrossTransformerParams ct_pred;
  Tensor h_position;                  // t_out x latent
  LinearParams head;                  // latent -> 38
  std::vector<SelfLayerParams> enc_layers;    // vanilla
  std::vector<DecoderLayerParams> dec_layers; // vanilla
  Tensor token_pe;                    // (3*t_in+1) x latent, vanilla
  RnnParams rnn;                      // rnn_gaze

  static ModelParams init(Variant v, const ModelConfig& cfg, uint64_t seed);

  // Enumerates the blocks this variant owns, in a fixed order shared by the
  // optimizer and the checkpoint format.
  void for_each_param(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  size_t scalar_count() const;
};

// --- forward passes ---------------------------------------------------------

struct AttentionResult {
  Tensor output;   // l_q x d_V
  Tensor weights;  // l_q x l_kv, averaged over heads
};

// Scaled dot-product attention over projected inputs (value-level).
AttentionResult attention(const Tensor& q, const Tensor& k, const Tensor& v,
                          const AttentionParams& params, int heads);

// Tape-level attention; when `record` is non-null the head-averaged weight
// matrix of this call is stored there.
Var attention_vars(Binder& bind, Var q, Var k, Var v, const AttentionParams& params, int heads,
                   Tensor* record = nullptr);

Var cross_transformer_vars(Binder& bind, Var query, Var input, const CrossTransformerParams& params,
                           const ModelConfig& cfg, Tensor* layer0_record = nullptr);

Tensor cross_transformer(const Tensor& query_seq, const Tensor& input_seq,
                         const CrossTransformerParams& params, const ModelConfig& cfg);

struct FusedFeatures {
  Tensor motion;  // f_mg: gaze-informed motion feature
  Tensor gaze;    // f_gm: motion-modulated gaze feature
};

FusedFeatures fuse_bidirectional(const Tensor& f_m, const Tensor& f_g, const Tensor& f_mv,
                                 const ModelParams& params);

// Everything predict() derives from one scene.
struct SceneContext {
  const Scene* scene = nullptr;
  SceneIndex index;

  static SceneContext build(const Scene& scene, const ModelConfig& cfg);
};

struct ForwardResult {
  Var outputs;       // t_out x 38 on the tape
  Tensor attention;  // 10 x 6 first-layer prediction cross-attention (full only)
};

// Builds the variant's forward graph on the binder's tape. `shared_scene`
// lets a caller reuse one scene encoding across episodes of a batch.
ForwardResult forward_model(Binder& bind, const Episode& ep, const ModelParams& P,
                            const BodyTemplate& tpl, const SceneContext& ctx,
                            const SceneFeatureVars* shared_scene = nullptr,
                            bool want_attention = false);

MotionSequence predict(const Episode& ep, const ModelParams& params, const BodyTemplate& tpl,
                       const SceneContext& ctx);

MotionSequence predict_variant(const Episode& ep, const ModelParams& params,
                               const BodyTemplate& tpl, const SceneContext& ctx);

// First-layer cross-attention of the prediction transformer: rows are the 10
// output queries, columns the 6 fused input tokens.
Tensor attention_map(const Episode& ep, const ModelParams& params, const BodyTemplate& tpl,
                     const SceneContext& ctx);

}  // namespace gimo
