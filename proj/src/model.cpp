#include "model.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace gimo {

// --- episode / variant helpers ---------------------------------------------

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test_known: return "test_known";
    case Split::test_new: return "test_new";
  }
  throw ContractError("unknown split");
}

Split split_from(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test_known") return Split::test_known;
  if (name == "test_new") return Split::test_new;
  throw ParseError("unknown split tag '" + name + "'");
}

void Episode::validate() const {
  if (past.size() != 6) throw ContractError("episode must have 6 past frames");
  if (!future.frames.empty() && future.size() != 10)
    throw ContractError("episode future must have 10 frames");
  past.validate();
  if (!future.frames.empty()) future.validate();
  gaze.validate(static_cast<int>(past.size()));
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_gaze: return "no_gaze";
    case Variant::pointnet_global: return "pointnet_global";
    case Variant::vanilla: return "vanilla";
    case Variant::rnn_gaze: return "rnn_gaze";
    case Variant::echo: return "echo";
    case Variant::hold: return "hold";
  }
  throw ContractError("unknown variant");
}

Variant variant_from(const std::string& name) {
  for (Variant v : {Variant::full, Variant::no_gaze, Variant::pointnet_global, Variant::vanilla,
                    Variant::rnn_gaze, Variant::echo, Variant::hold})
    if (variant_name(v) == name) return v;
  throw ParseError("unknown variant '" + name + "'");
}

bool variant_trainable(Variant v) { return v != Variant::echo && v != Variant::hold; }

std::string ModelConfig::serialize() const {
  std::ostringstream s;
  s << latent << " " << layers << " " << heads << " " << ffn_hidden << " " << t_in << " " << t_out
    << " " << sa1_centroids << " " << sa2_centroids << " " << format_double(sa1_radius) << " "
    << format_double(sa2_radius) << " " << sa1_k << " " << sa2_k << " " << sa1_c1 << " " << sa1_c2
    << " " << sa2_c1 << " " << sa2_c2 << " " << fp_width;
  return s.str();
}

ModelConfig ModelConfig::deserialize(const std::string& line) {
  ModelConfig c;
  std::istringstream s(line);
  if (!(s >> c.latent >> c.layers >> c.heads >> c.ffn_hidden >> c.t_in >> c.t_out >>
        c.sa1_centroids >> c.sa2_centroids >> c.sa1_radius >> c.sa2_radius >> c.sa1_k >> c.sa2_k >>
        c.sa1_c1 >> c.sa1_c2 >> c.sa2_c1 >> c.sa2_c2 >> c.fp_width))
    throw ParseError("bad model config line: " + line);
  return c;
}

// --- parameter enumeration ---------------------------------------------------

namespace {

template <typename MP, typename Fn>
void enumerate_params(MP& P, Fn&& fn) {
  auto lin = [&](const std::string& n, auto& p) {
    fn(n + ".w", p.w);
    fn(n + ".b", p.b);
  };
  auto ln = [&](const std::string& n, auto& p) {
    fn(n + ".gain", p.gain);
    fn(n + ".bias", p.bias);
  };
  auto attn = [&](const std::string& n, auto& p) {
    fn(n + ".wq", p.wq);
    fn(n + ".wk", p.wk);
    fn(n + ".wv", p.wv);
  };
  auto ffn = [&](const std::string& n, auto& p) {
    lin(n + ".l1", p.l1);
    lin(n + ".l2", p.l2);
  };
  auto cross_layer = [&](const std::string& n, auto& p) {
    ln(n + ".ln_q", p.ln_q);
    ln(n + ".ln_kv", p.ln_kv);
    attn(n + ".attn", p.attn);
    ln(n + ".ln_f", p.ln_f);
    ffn(n + ".ffn", p.ffn);
  };
  auto self_layer = [&](const std::string& n, auto& p) {
    ln(n + ".ln", p.ln);
    attn(n + ".attn", p.attn);
    ln(n + ".ln_f", p.ln_f);
    ffn(n + ".ffn", p.ffn);
  };
  auto ct = [&](const std::string& n, auto& p) {
    cross_layer(n + ".cross", p.cross);
    for (size_t i = 0; i < p.selfs.size(); ++i)
      self_layer(n + ".self" + std::to_string(i), p.selfs[i]);
  };
  auto scene = [&](const std::string& n, auto& p) {
    lin(n + ".sa1_l1", p.sa1_l1);
    lin(n + ".sa1_l2", p.sa1_l2);
    lin(n + ".sa2_l1", p.sa2_l1);
    lin(n + ".sa2_l2", p.sa2_l2);
    lin(n + ".fp2", p.fp2);
    lin(n + ".fp1", p.fp1);
    lin(n + ".ambient", p.ambient);
  };
  auto dec_layer = [&](const std::string& n, auto& p) {
    ln(n + ".ln_self", p.ln_self);
    attn(n + ".self_attn", p.self_attn);
    ln(n + ".ln_q", p.ln_q);
    ln(n + ".ln_kv", p.ln_kv);
    attn(n + ".cross_attn", p.cross_attn);
    ln(n + ".ln_f", p.ln_f);
    ffn(n + ".ffn", p.ffn);
  };

  switch (P.variant) {
    case Variant::full:
      scene("scene", P.scene);
      lin("motion_embed", P.motion_embed);
      fn("missing_gaze", P.missing_gaze);
      ct("ct_ms", P.ct_ms);
      ct("ct_mg", P.ct_mg);
      ct("ct_gm", P.ct_gm);
      lin("fuse_proj", P.fuse_proj);
      fn("input_pe", P.input_pe);
      ct("ct_pred", P.ct_pred);
      fn("h_position", P.h_position);
      lin("head", P.head);
      break;
    case Variant::no_gaze:
      scene("scene", P.scene);
      lin("motion_embed", P.motion_embed);
      ct("ct_ms", P.ct_ms);
      lin("fuse_proj", P.fuse_proj);
      fn("input_pe", P.input_pe);
      ct("ct_pred", P.ct_pred);
      fn("h_position", P.h_position);
      lin("head", P.head);
      break;
    case Variant::pointnet_global:
      lin("pn_l1", P.pn_l1);
      lin("pn_l2", P.pn_l2);
      lin("pn_fc", P.pn_fc);
      lin("mv_lin", P.mv_lin);
      lin("gaze_lin", P.gaze_lin);
      lin("motion_embed", P.motion_embed);
      fn("missing_gaze", P.missing_gaze);
      ct("ct_ms", P.ct_ms);
      ct("ct_mg", P.ct_mg);
      ct("ct_gm", P.ct_gm);
      lin("fuse_proj", P.fuse_proj);
      fn("input_pe", P.input_pe);
      ct("ct_pred", P.ct_pred);
      fn("h_position", P.h_position);
      lin("head", P.head);
      break;
    case Variant::vanilla:
      scene("scene", P.scene);
      lin("motion_embed", P.motion_embed);
      fn("missing_gaze", P.missing_gaze);
      fn("token_pe", P.token_pe);
      for (size_t i = 0; i < P.enc_layers.size(); ++i)
        self_layer("enc" + std::to_string(i), P.enc_layers[i]);
      for (size_t i = 0; i < P.dec_layers.size(); ++i)
        dec_layer("dec" + std::to_string(i), P.dec_layers[i]);
      fn("h_position", P.h_position);
      lin("head", P.head);
      break;
    case Variant::rnn_gaze:
      lin("rnn.input", P.rnn.input);
      for (size_t i = 0; i < P.rnn.layers.size(); ++i) {
        const std::string n = "rnn.layer" + std::to_string(i);
        fn(n + ".w_ih", P.rnn.layers[i].w_ih);
        fn(n + ".w_hh", P.rnn.layers[i].w_hh);
        fn(n + ".b", P.rnn.layers[i].b);
      }
      lin("rnn.head", P.rnn.head);
      break;
    case Variant::echo:
    case Variant::hold:
      break;
  }
}

LayerNormParams init_ln(int d) {
  LayerNormParams p;
  p.gain = Tensor::full({d}, 1.0);
  p.bias = Tensor({d});
  return p;
}

AttentionParams init_attn(int d, Rng& rng) {
  AttentionParams p;
  auto w = [&rng, d]() {
    Tensor t({d, d});
    const double a = std::sqrt(1.0 / d);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
    return t;
  };
  p.wq = w();
  p.wk = w();
  p.wv = w();
  return p;
}

FfnParams init_ffn(const ModelConfig& cfg, Rng& rng) {
  FfnParams p;
  p.l1 = init_linear(cfg.latent, cfg.ffn_hidden, rng);
  p.l2 = init_linear(cfg.ffn_hidden, cfg.latent, rng);
  return p;
}

CrossTransformerParams init_ct(const ModelConfig& cfg, Rng& rng) {
  CrossTransformerParams p;
  p.cross.ln_q = init_ln(cfg.latent);
  p.cross.ln_kv = init_ln(cfg.latent);
  p.cross.attn = init_attn(cfg.latent, rng);
  p.cross.ln_f = init_ln(cfg.latent);
  p.cross.ffn = init_ffn(cfg, rng);
  p.selfs.resize(static_cast<size_t>(std::max(0, cfg.layers - 1)));
  for (auto& s : p.selfs) {
    s.ln = init_ln(cfg.latent);
    s.attn = init_attn(cfg.latent, rng);
    s.ln_f = init_ln(cfg.latent);
    s.ffn = init_ffn(cfg, rng);
  }
  return p;
}

Tensor init_table(int rows, int cols, double stddev, Rng& rng) {
  Tensor t({rows, cols});
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

ModelParams ModelParams::init(Variant v, const ModelConfig& cfg, uint64_t seed) {
  Rng rng(derive_seed(seed, "model-init"));
  ModelParams P;
  P.variant = v;
  P.config = cfg;
  const int d = cfg.latent;

  auto init_pipeline_tail = [&] {
    P.fuse_proj = init_linear(3 * d, d, rng);
    P.input_pe = init_table(cfg.t_in, d, 0.1, rng);
    P.ct_pred = init_ct(cfg, rng);
    P.h_position = init_table(cfg.t_out, d, 1.0, rng);
    P.head = init_linear(d, ModelConfig::kPoseDim, rng);
  };

  switch (v) {
    case Variant::full:
      P.scene = init_scene_encoder(cfg, rng);
      P.motion_embed = init_linear(ModelConfig::kPoseDim, d, rng);
      P.missing_gaze = Tensor({1, d});
      P.ct_ms = init_ct(cfg, rng);
      P.ct_mg = init_ct(cfg, rng);
      P.ct_gm = init_ct(cfg, rng);
      init_pipeline_tail();
      break;
    case Variant::no_gaze:
      P.scene = init_scene_encoder(cfg, rng);
      P.motion_embed = init_linear(ModelConfig::kPoseDim, d, rng);
      P.ct_ms = init_ct(cfg, rng);
      init_pipeline_tail();
      break;
    case Variant::pointnet_global:
      P.pn_l1 = init_linear(3, cfg.sa1_c2, rng);
      P.pn_l2 = init_linear(cfg.sa1_c2, cfg.sa2_c2, rng);
      P.pn_fc = init_linear(cfg.sa2_c2, d, rng);
      P.mv_lin = init_linear(d, d, rng);
      P.gaze_lin = init_linear(3, d, rng);
      P.motion_embed = init_linear(ModelConfig::kPoseDim, d, rng);
      P.missing_gaze = Tensor({1, d});
      P.ct_ms = init_ct(cfg, rng);
      P.ct_mg = init_ct(cfg, rng);
      P.ct_gm = init_ct(cfg, rng);
      init_pipeline_tail();
      break;
    case Variant::vanilla: {
      P.scene = init_scene_encoder(cfg, rng);
      P.motion_embed = init_linear(ModelConfig::kPoseDim, d, rng);
      P.missing_gaze = Tensor({1, d});
      P.token_pe = init_table(3 * cfg.t_in + 1, d, 0.1, rng);
      P.enc_layers.resize(static_cast<size_t>(cfg.layers));
      for (auto& s : P.enc_layers) {
        s.ln = init_ln(d);
        s.attn = init_attn(d, rng);
        s.ln_f = init_ln(d);
        s.ffn = init_ffn(cfg, rng);
      }
      P.dec_layers.resize(static_cast<size_t>(cfg.layers));
      for (auto& dl : P.dec_layers) {
        dl.ln_self = init_ln(d);
        dl.self_attn = init_attn(d, rng);
        dl.ln_q = init_ln(d);
        dl.ln_kv = init_ln(d);
        dl.cross_attn = init_attn(d, rng);
        dl.ln_f = init_ln(d);
        dl.ffn = init_ffn(cfg, rng);
      }
      P.h_position = init_table(cfg.t_out, d, 1.0, rng);
      P.head = init_linear(d, ModelConfig::kPoseDim, rng);
      break;
    }
    case Variant::rnn_gaze: {
      P.rnn.input = init_linear(ModelConfig::kPoseDim + 3, d, rng);
      P.rnn.layers.resize(3);
      for (auto& l : P.rnn.layers) {
        const double a = std::sqrt(1.0 / d);
        l.w_ih = Tensor({d, d});
        l.w_hh = Tensor({d, d});
        for (int64_t i = 0; i < l.w_ih.size(); ++i) l.w_ih[i] = rng.uniform(-a, a);
        for (int64_t i = 0; i < l.w_hh.size(); ++i) l.w_hh[i] = rng.uniform(-a, a);
        l.b = Tensor({1, d});
      }
      P.rnn.head = init_linear(d, ModelConfig::kPoseDim, rng);
      break;
    }
    case Variant::echo:
    case Variant::hold:
      break;
  }
  return P;
}

void ModelParams::for_each_param(const std::function<void(const std::string&, Tensor&)>& fn) {
  enumerate_params(*this, [&](const std::string& n, Tensor& t) {
    if (t.empty()) throw ContractError("parameter block '" + n + "' is uninitialized");
    fn(n, t);
  });
}

void ModelParams::for_each_param(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  enumerate_params(*this, [&](const std::string& n, const Tensor& t) {
    if (t.empty()) throw ContractError("parameter block '" + n + "' is uninitialized");
    fn(n, t);
  });
}

size_t ModelParams::scalar_count() const {
  size_t n = 0;
  for_each_param([&](const std::string&, const Tensor& t) { n += static_cast<size_t>(t.size()); });
  return n;
}

// --- attention and transformer stacks ----------------------------------------

Var attention_vars(Binder& bind, Var q, Var k, Var v, const AttentionParams& p, int heads,
                   Tensor* record) {
  Tape& tp = bind.tape();
  const int dK = p.wq.cols();
  const int dV = p.wv.cols();
  if (heads < 1 || dK % heads != 0 || dV % heads != 0)
    throw ContractError("head count " + std::to_string(heads) + " must divide d_K and d_V");
  if (tp.value(k).rows() != tp.value(v).rows())
    throw DimensionError("key and value sequences must have equal length");
  Var Q = tp.matmul(q, bind(p.wq));
  Var K = tp.matmul(k, bind(p.wk));
  Var V = tp.matmul(v, bind(p.wv));
  const int hk = dK / heads, hv = dV / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hk));
  const int lq = tp.value(q).rows(), lkv = tp.value(k).rows();
  Tensor avg({lq, lkv});
  std::vector<Var> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var Qh = heads == 1 ? Q : tp.slice_cols(Q, h * hk, (h + 1) * hk);
    Var Kh = heads == 1 ? K : tp.slice_cols(K, h * hk, (h + 1) * hk);
    Var Vh = heads == 1 ? V : tp.slice_cols(V, h * hv, (h + 1) * hv);
    Var probs = tp.softmax(tp.scale(tp.matmul(Qh, tp.transpose(Kh)), scale), 1);
    if (record) {
      const Tensor& pv = tp.value(probs);
      for (int64_t i = 0; i < pv.size(); ++i) avg[i] += pv[i] / heads;
    }
    outs.push_back(tp.matmul(probs, Vh));
  }
  if (record) *record = std::move(avg);
  return heads == 1 ? outs[0] : tp.concat(outs, 1);
}

AttentionResult attention(const Tensor& q, const Tensor& k, const Tensor& v,
                          const AttentionParams& params, int heads) {
  Tape tp;
  Binder bind(tp, false);
  AttentionResult res;
  Var out = attention_vars(bind, tp.constant(q), tp.constant(k), tp.constant(v), params, heads,
                           &res.weights);
  res.output = tp.value(out);
  return res;
}

namespace {

Var ffn_vars(Binder& bind, Var x, const FfnParams& p) {
  Tape& tp = bind.tape();
  return linear(tp, tp.relu(linear(tp, x, bind(p.l1.w), bind(p.l1.b))), bind(p.l2.w),
                bind(p.l2.b));
}

Var ln_vars(Binder& bind, Var x, const LayerNormParams& p) {
  return bind.tape().layer_norm(x, bind(p.gain), bind(p.bias));
}

Var self_layer_vars(Binder& bind, Var x, const SelfLayerParams& p, int heads) {
  Tape& tp = bind.tape();
  Var a = ln_vars(bind, x, p.ln);
  x = tp.add(x, attention_vars(bind, a, a, a, p.attn, heads));
  return tp.add(x, ffn_vars(bind, ln_vars(bind, x, p.ln_f), p.ffn));
}

}  // namespace

Var cross_transformer_vars(Binder& bind, Var query, Var input, const CrossTransformerParams& p,
                           const ModelConfig& cfg, Tensor* layer0_record) {
  Tape& tp = bind.tape();
  if (tp.value(query).cols() != cfg.latent || tp.value(input).cols() != cfg.latent)
    throw DimensionError("cross transformer expects width " + std::to_string(cfg.latent));
  Var qn = ln_vars(bind, query, p.cross.ln_q);
  Var kvn = ln_vars(bind, input, p.cross.ln_kv);
  Var x = tp.add(query, attention_vars(bind, qn, kvn, kvn, p.cross.attn, cfg.heads, layer0_record));
  x = tp.add(x, ffn_vars(bind, ln_vars(bind, x, p.cross.ln_f), p.cross.ffn));
  for (const auto& s : p.selfs) x = self_layer_vars(bind, x, s, cfg.heads);
  return x;
}

Tensor cross_transformer(const Tensor& query_seq, const Tensor& input_seq,
                         const CrossTransformerParams& params, const ModelConfig& cfg) {
  Tape tp;
  Binder bind(tp, false);
  Var out = cross_transformer_vars(bind, tp.constant(query_seq), tp.constant(input_seq), params,
                                   cfg);
  return tp.value(out);
}

FusedFeatures fuse_bidirectional(const Tensor& f_m, const Tensor& f_g, const Tensor& f_mv,
                                 const ModelParams& P) {
  if (f_m.rows() != P.config.t_in || f_g.rows() != f_m.rows() || f_mv.rows() != f_m.rows())
    throw ContractError("fusion inputs must all have length " + std::to_string(P.config.t_in));
  Tape tp;
  Binder bind(tp, false);
  Var m = tp.constant(f_m), g = tp.constant(f_g), mv = tp.constant(f_mv);
  Var f_ms = cross_transformer_vars(bind, mv, m, P.ct_ms, P.config);
  Var f_mg = cross_transformer_vars(bind, g, f_ms, P.ct_mg, P.config);
  Var f_gm = cross_transformer_vars(bind, m, g, P.ct_gm, P.config);
  FusedFeatures out;
  out.motion = tp.value(f_mg);
  out.gaze = tp.value(f_gm);
  return out;
}

// --- full prediction pipeline -------------------------------------------------

SceneContext SceneContext::build(const Scene& scene, const ModelConfig& cfg) {
  SceneContext ctx;
  ctx.scene = &scene;
  ctx.index = SceneIndex::build(scene, cfg);
  return ctx;
}

namespace {

struct EpisodeGeometry {
  Tensor motion_params;  // t_in x 38
  std::vector<InterpEntry> vert_stencils;
  std::vector<InterpEntry> gaze_stencils;  // zero-weight rows for invalid frames
  Tensor invalid_mask;   // t_in x latent, 1 where gaze missing
  Tensor valid_mask;     // complement
  Tensor gaze_points;    // t_in x 3, zeros for invalid frames
};

EpisodeGeometry build_geometry(const Episode& ep, const ModelParams& P, const BodyTemplate& tpl,
                               const SceneContext& ctx) {
  const ModelConfig& cfg = P.config;
  const int t = cfg.t_in;
  EpisodeGeometry g;
  g.motion_params = Tensor({t, ModelConfig::kPoseDim});
  for (int i = 0; i < t; ++i) {
    auto pv = ep.past.frames[static_cast<size_t>(i)].param_vector();
    std::memcpy(g.motion_params.data() + static_cast<int64_t>(i) * ModelConfig::kPoseDim,
                pv.data(), sizeof(double) * pv.size());
  }
  g.invalid_mask = Tensor({t, cfg.latent});
  g.valid_mask = Tensor({t, cfg.latent});
  g.gaze_points = Tensor({t, 3});
  g.gaze_stencils.resize(static_cast<size_t>(t));
  for (int i = 0; i < t; ++i) {
    const bool ok = ep.gaze.valid[static_cast<size_t>(i)];
    for (int c = 0; c < cfg.latent; ++c) {
      g.invalid_mask.at(i, c) = ok ? 0.0 : 1.0;
      g.valid_mask.at(i, c) = ok ? 1.0 : 0.0;
    }
    if (ok) {
      const Vec3 gp = {ep.gaze.points.at(i, 0), ep.gaze.points.at(i, 1), ep.gaze.points.at(i, 2)};
      for (int c = 0; c < 3; ++c) g.gaze_points.at(i, c) = gp[c];
      if (P.variant != Variant::pointnet_global && P.variant != Variant::rnn_gaze)
        g.gaze_stencils[static_cast<size_t>(i)] = ctx.index.query_stencil(gp);
    }
  }
  if (P.variant != Variant::pointnet_global && P.variant != Variant::rnn_gaze) {
    const int v = tpl.vertex_count;
    g.vert_stencils.reserve(static_cast<size_t>(t) * v);
    for (int i = 0; i < t; ++i) {
      BodyMesh mesh = decode_pose(ep.past.frames[static_cast<size_t>(i)], tpl);
      for (int j = 0; j < v; ++j)
        g.vert_stencils.push_back(ctx.index.query_stencil(
            {mesh.vertices.at(j, 0), mesh.vertices.at(j, 1), mesh.vertices.at(j, 2)}));
    }
  }
  return g;
}

Var gaze_feature_vars(Binder& bind, const EpisodeGeometry& g, const ModelParams& P,
                      Var per_point) {
  Tape& tp = bind.tape();
  Var gathered = tp.weighted_gather_rows(per_point, g.gaze_stencils);
  Var missing = tp.mul(tp.tile_rows(bind(P.missing_gaze), P.config.t_in),
                       tp.constant(g.invalid_mask));
  return tp.add(gathered, missing);
}

Var rnn_forward(Binder& bind, const EpisodeGeometry& g, const ModelParams& P) {
  Tape& tp = bind.tape();
  const ModelConfig& cfg = P.config;
  const int d = cfg.latent;
  std::vector<Var> hidden(P.rnn.layers.size());
  for (auto& h : hidden) h = tp.constant(Tensor({1, d}));

  auto step = [&](Var in) {
    for (size_t l = 0; l < P.rnn.layers.size(); ++l) {
      const auto& lp = P.rnn.layers[l];
      Var pre = tp.add(tp.add(tp.matmul(in, bind(lp.w_ih)), tp.matmul(hidden[l], bind(lp.w_hh))),
                       bind(lp.b));
      hidden[l] = tp.tanh_op(pre);
      in = hidden[l];
    }
    return in;
  };

  for (int i = 0; i < cfg.t_in; ++i) {
    const double* row = g.motion_params.data() + static_cast<int64_t>(i) * ModelConfig::kPoseDim;
    Tensor x({1, ModelConfig::kPoseDim}, std::vector<double>(row, row + ModelConfig::kPoseDim));
    Tensor gz({1, 3}, {g.gaze_points.at(i, 0), g.gaze_points.at(i, 1), g.gaze_points.at(i, 2)});
    Var u = tp.concat({tp.constant(std::move(x)), tp.constant(std::move(gz))}, 1);
    step(linear(tp, u, bind(P.rnn.input.w), bind(P.rnn.input.b)));
  }

  std::vector<Var> out_rows;
  out_rows.reserve(static_cast<size_t>(cfg.t_out));
  for (int k = 0; k < cfg.t_out; ++k) {
    Var y = linear(tp, hidden.back(), bind(P.rnn.head.w), bind(P.rnn.head.b));
    out_rows.push_back(y);
    Var u = tp.concat({y, tp.constant(Tensor({1, 3}))}, 1);
    step(linear(tp, u, bind(P.rnn.input.w), bind(P.rnn.input.b)));
  }
  return tp.concat(out_rows, 0);
}

}  // namespace

ForwardResult forward_model(Binder& bind, const Episode& ep, const ModelParams& P,
                            const BodyTemplate& tpl, const SceneContext& ctx,
                            const SceneFeatureVars* shared_scene, bool want_attention) {
  ep.validate();
  Tape& tp = bind.tape();
  const ModelConfig& cfg = P.config;
  if (cfg.t_in != 6 || cfg.t_out != 10)
    throw ContractError("prediction horizons are fixed at 6 in / 10 out");

  ForwardResult res;

  if (P.variant == Variant::echo) {
    if (ep.future.frames.empty()) throw ContractError("echo baseline needs a ground-truth future");
    Tensor out({cfg.t_out, ModelConfig::kPoseDim});
    for (int i = 0; i < cfg.t_out; ++i) {
      auto pv = ep.future.frames[static_cast<size_t>(i)].param_vector();
      std::memcpy(out.data() + static_cast<int64_t>(i) * ModelConfig::kPoseDim, pv.data(),
                  sizeof(double) * pv.size());
    }
    res.outputs = tp.constant(out);
    return res;
  }
  if (P.variant == Variant::hold) {
    Tensor out({cfg.t_out, ModelConfig::kPoseDim});
    auto pv = ep.past.frames.back().param_vector();
    for (int i = 0; i < cfg.t_out; ++i)
      std::memcpy(out.data() + static_cast<int64_t>(i) * ModelConfig::kPoseDim, pv.data(),
                  sizeof(double) * pv.size());
    res.outputs = tp.constant(out);
    return res;
  }

  EpisodeGeometry geo = build_geometry(ep, P, tpl, ctx);

  if (P.variant == Variant::rnn_gaze) {
    res.outputs = rnn_forward(bind, geo, P);
    return res;
  }

  Var f_m = linear(tp, tp.constant(geo.motion_params), bind(P.motion_embed.w),
                   bind(P.motion_embed.b));

  Var f_mv, f_g, fo;
  if (P.variant == Variant::pointnet_global) {
    Var h = tp.relu(linear(tp, tp.constant(ctx.index.points), bind(P.pn_l1.w), bind(P.pn_l1.b)));
    h = tp.relu(linear(tp, h, bind(P.pn_l2.w), bind(P.pn_l2.b)));
    fo = linear(tp, tp.max_rows(h), bind(P.pn_fc.w), bind(P.pn_fc.b));
    f_mv = tp.tile_rows(linear(tp, fo, bind(P.mv_lin.w), bind(P.mv_lin.b)), cfg.t_in);
    Var g_lin = linear(tp, tp.constant(geo.gaze_points), bind(P.gaze_lin.w), bind(P.gaze_lin.b));
    f_g = tp.add(tp.mul(g_lin, tp.constant(geo.valid_mask)),
                 tp.mul(tp.tile_rows(bind(P.missing_gaze), cfg.t_in),
                        tp.constant(geo.invalid_mask)));
  } else {
    SceneFeatureVars feats =
        shared_scene ? *shared_scene : encode_scene_vars(bind, ctx.index, P.scene, cfg);
    fo = feats.global;
    f_mv = ambient_context_vars(bind, geo.vert_stencils, cfg.t_in, feats.per_point, P.scene);
    if (P.variant != Variant::no_gaze) f_g = gaze_feature_vars(bind, geo, P, feats.per_point);
  }

  Var out_latent;
  if (P.variant == Variant::vanilla) {
    Var tokens = tp.concat({f_m, f_g, f_mv, fo}, 0);  // (3t+1) x latent
    tokens = tp.add(tokens, bind(P.token_pe));
    for (const auto& l : P.enc_layers) tokens = self_layer_vars(bind, tokens, l, cfg.heads);
    Var x = bind(P.h_position);
    for (const auto& dl : P.dec_layers) {
      Var a = ln_vars(bind, x, dl.ln_self);
      x = tp.add(x, attention_vars(bind, a, a, a, dl.self_attn, cfg.heads));
      Var qn = ln_vars(bind, x, dl.ln_q);
      Var kvn = ln_vars(bind, tokens, dl.ln_kv);
      x = tp.add(x, attention_vars(bind, qn, kvn, kvn, dl.cross_attn, cfg.heads));
      x = tp.add(x, ffn_vars(bind, ln_vars(bind, x, dl.ln_f), dl.ffn));
    }
    out_latent = x;
  } else {
    Var f_ms = cross_transformer_vars(bind, f_mv, f_m, P.ct_ms, cfg);
    Var gaze_slot, motion_slot;
    if (P.variant == Variant::no_gaze) {
      motion_slot = f_ms;  // Eq. 7-8 dropped: scene-updated motion passes through
      gaze_slot = tp.constant(Tensor({cfg.t_in, cfg.latent}));
    } else {
      motion_slot = cross_transformer_vars(bind, f_g, f_ms, P.ct_mg, cfg);
      gaze_slot = cross_transformer_vars(bind, f_m, f_g, P.ct_gm, cfg);
    }
    Var fused = tp.concat({gaze_slot, motion_slot, tp.tile_rows(fo, cfg.t_in)}, 1);
    Var tokens = tp.add(linear(tp, fused, bind(P.fuse_proj.w), bind(P.fuse_proj.b)),
                        bind(P.input_pe));
    out_latent = cross_transformer_vars(bind, bind(P.h_position), tokens, P.ct_pred, cfg,
                                        want_attention ? &res.attention : nullptr);
  }
  res.outputs = linear(tp, out_latent, bind(P.head.w), bind(P.head.b));
  return res;
}

namespace {

MotionSequence sequence_from_outputs(const Tensor& out, const Episode& ep) {
  MotionSequence seq;
  seq.rate = ep.past.rate;
  seq.frames.reserve(static_cast<size_t>(out.rows()));
  const PoseFrame& carry = ep.past.frames.back();
  for (int i = 0; i < out.rows(); ++i)
    seq.frames.push_back(
        PoseFrame::from_params(out.data() + static_cast<int64_t>(i) * ModelConfig::kPoseDim,
                               carry));
  return seq;
}

}  // namespace

MotionSequence predict(const Episode& ep, const ModelParams& params, const BodyTemplate& tpl,
                       const SceneContext& ctx) {
  if (params.variant != Variant::full)
    throw ContractError("predict() runs the full pipeline; use predict_variant for ablations");
  return predict_variant(ep, params, tpl, ctx);
}

MotionSequence predict_variant(const Episode& ep, const ModelParams& params,
                               const BodyTemplate& tpl, const SceneContext& ctx) {
  Tape tp;
  Binder bind(tp, false);
  ForwardResult res = forward_model(bind, ep, params, tpl, ctx);
  return sequence_from_outputs(tp.value(res.outputs), ep);
}

Tensor attention_map(const Episode& ep, const ModelParams& params, const BodyTemplate& tpl,
                     const SceneContext& ctx) {
  if (params.variant != Variant::full)
    throw ContractError("attention maps are defined for the full variant");
  Tape tp;
  Binder bind(tp, false);
  ForwardResult res = forward_model(bind, ep, params, tpl, ctx, nullptr, true);
  return res.attention;
}

}  // namespace gimo
