#pragma once

#include <optional>
#include <string>
#include <vector>

#include "marvel/blocks.hpp"
#include "marvel/data.hpp"
#include "marvel/model_config.hpp"
#include "marvel/vision.hpp"
#include "marvel/vocab.hpp"

namespace marvel {

enum class PosKind { Prompt, Feature, Text };

// One encoder input sequence before embedding: token ids for the text
// segment plus switches for the image segment. `layout` tags every position.
struct InputPlan {
  std::vector<int> text_ids;
  const GridImage* image = nullptr;
  bool use_features = false;
  bool use_prompts = false;
  std::vector<PosKind> layout;

  int n_pos() const { return static_cast<int>(layout.size()); }
};

// Plugin and text_only fusions produce a single joint plan; sum and concat
// keep the caption and feature sides separate and combine embeddings.
struct AssembledInput {
  FusionMode mode = FusionMode::Plugin;
  std::optional<InputPlan> joint;
  std::optional<InputPlan> caption_side;
  std::optional<InputPlan> feature_side;
};

template <typename S>
struct EncodeResult {
  Var<S> embedding;                  // 1 x d_model
  std::vector<MatX<S>> cross_probs;  // per head, 1 x n_pos (joint path only)
  std::vector<PosKind> layout;
};

// The unified text/image encoder: one encoder-decoder language model whose
// input sequence may carry projected grid features between learned prompt
// embeddings. The document embedding is the single decoder step's output
// state, read through its cross-attention over the encoder.
template <typename S>
class Model {
 public:
  Model(ModelConfig cfg, Vocab vocab, uint64_t seed) : cfg_(cfg), vocab_(std::move(vocab)) {
    cfg_.validate();
    build_params();
    params_.init_seeded(seed);
  }

  const ModelConfig& cfg() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }

  AssembledInput assemble(const Query& q) const {
    AssembledInput out;
    out.mode = FusionMode::TextOnly;
    out.joint = text_plan(q.text, "query " + q.id);
    return out;
  }

  AssembledInput assemble(const Document& doc, const EncodeOptions& opt) const {
    AssembledInput out;
    out.mode = opt.fusion;
    if (doc.modality == Modality::Text) {
      out.mode = FusionMode::TextOnly;
      out.joint = text_plan(doc.text, "document " + doc.id);
      return out;
    }
    if (opt.fusion == FusionMode::TextOnly) {
      out.joint = text_plan(doc.text, "image document " + doc.id);
      return out;
    }
    if (!doc.image) throw DataError("image document without pixels: " + doc.id);

    if (opt.fusion == FusionMode::Plugin) {
      InputPlan p;
      p.image = &*doc.image;
      p.use_prompts = !opt.drop_prompt;
      p.use_features = !opt.drop_features;
      if (!opt.drop_caption) p.text_ids = tokenize(doc.text, vocab_, cfg_.max_text_len);
      if (p.use_prompts) p.layout.push_back(PosKind::Prompt);
      if (p.use_features)
        p.layout.insert(p.layout.end(), static_cast<size_t>(cfg_.n_patches()), PosKind::Feature);
      if (p.use_prompts) p.layout.push_back(PosKind::Prompt);
      p.layout.insert(p.layout.end(), p.text_ids.size(), PosKind::Text);
      if (p.layout.empty())
        throw ContractError("assemble: all content dropped for document " + doc.id);
      out.joint = std::move(p);
      return out;
    }

    // sum / concat: encode caption and image features separately.
    if (!opt.drop_caption) {
      InputPlan cap;
      cap.text_ids = tokenize(doc.text, vocab_, cfg_.max_text_len);
      cap.layout.assign(cap.text_ids.size(), PosKind::Text);
      if (!cap.layout.empty()) out.caption_side = std::move(cap);
    }
    if (!opt.drop_features) {
      InputPlan feat;
      feat.image = &*doc.image;
      feat.use_features = true;
      feat.layout.assign(static_cast<size_t>(cfg_.n_patches()), PosKind::Feature);
      out.feature_side = std::move(feat);
    }
    if (!out.caption_side && !out.feature_side)
      throw ContractError("assemble: all content dropped for document " + doc.id);
    if (opt.fusion == FusionMode::Concat && (!out.caption_side || !out.feature_side))
      throw ContractError("assemble: concat fusion needs both caption and features: " + doc.id);
    return out;
  }

  EncodeResult<S> encode(TapeBinding<S>& bind, const AssembledInput& in,
                         bool capture_attn = false) const {
    EncodeResult<S> res;
    if (in.joint) {
      res.layout = in.joint->layout;
      res.embedding = encode_plan(bind, *in.joint, capture_attn ? &res.cross_probs : nullptr);
    } else if (in.mode == FusionMode::Sum) {
      if (in.caption_side && in.feature_side) {
        res.embedding = add(encode_plan(bind, *in.caption_side, nullptr),
                            encode_plan(bind, *in.feature_side, nullptr));
      } else {
        const InputPlan& only = in.caption_side ? *in.caption_side : *in.feature_side;
        res.embedding = encode_plan(bind, only, nullptr);
      }
    } else if (in.mode == FusionMode::Concat) {
      Var<S> cap = encode_plan(bind, *in.caption_side, nullptr);
      Var<S> feat = encode_plan(bind, *in.feature_side, nullptr);
      Var<S> cat = concat_cols<S>({cap, feat});
      res.embedding =
          add_rowvec(matmul(cat, bind.use("lm.concat_proj.w")), bind.use("lm.concat_proj.b"));
    } else {
      throw ContractError("encode: malformed assembled input");
    }
    const MatX<S>& v = res.embedding.value();
    if (!v.allFinite()) throw NumericError("encode: non-finite embedding");
    if (!(v.norm() > S(0))) throw NumericError("encode: zero-norm embedding");
    return res;
  }

  // Convenience inference paths; embeddings returned as doubles for the
  // index and evaluation layers.
  Eigen::VectorXd embed(const Query& q) const { return embed_input(assemble(q)); }
  Eigen::VectorXd embed(const Document& doc, const EncodeOptions& opt) const {
    return embed_input(assemble(doc, opt));
  }

  // Per-head decoder-to-encoder attention over the joint input, [heads x n_pos].
  MatX<S> cross_attention_map(const Document& doc, const EncodeOptions& opt,
                              std::vector<PosKind>* layout_out = nullptr) const {
    if (opt.fusion != FusionMode::Plugin)
      throw ContractError("cross_attention_map: plugin fusion required");
    if (doc.modality != Modality::Image)
      throw ContractError("cross_attention_map: image document required");
    Tape<S> tape;
    TapeBinding<S> bind(tape, const_cast<ParamStore<S>&>(params_), false);
    EncodeResult<S> res = encode(bind, assemble(doc, opt), true);
    MatX<S> out(static_cast<Eigen::Index>(res.cross_probs.size()),
                res.cross_probs.empty() ? 0 : res.cross_probs[0].cols());
    for (size_t h = 0; h < res.cross_probs.size(); ++h) out.row(static_cast<Eigen::Index>(h)) =
        res.cross_probs[h].row(0);
    if (layout_out) *layout_out = res.layout;
    return out;
  }

  // Projected grid features of an image, [49 x d_model]; inference-only.
  MatX<S> projected_features(const GridImage& img) const {
    Tape<S> tape;
    TapeBinding<S> bind(tape, const_cast<ParamStore<S>&>(params_), false);
    return project(bind, grid_features(bind, img, cfg_)).value();
  }

 private:
  InputPlan text_plan(const std::string& text, const std::string& what) const {
    InputPlan p;
    p.text_ids = tokenize(text, vocab_, cfg_.max_text_len);
    if (p.text_ids.empty()) throw ContractError("assemble: no tokens in " + what);
    p.layout.assign(p.text_ids.size(), PosKind::Text);
    return p;
  }

  Eigen::VectorXd embed_input(const AssembledInput& in) const {
    Tape<S> tape;
    TapeBinding<S> bind(tape, const_cast<ParamStore<S>&>(params_), false);
    const MatX<S>& e = encode(bind, in).embedding.value();
    Eigen::VectorXd out(e.cols());
    for (Eigen::Index j = 0; j < e.cols(); ++j) out(j) = static_cast<double>(e(0, j));
    return out;
  }

  // Embeds one plan and runs encoder + single decoder step. Text tokens get
  // segment-relative learned positions; feature and prompt rows get none, so
  // their order information comes from the vision encoder alone.
  Var<S> encode_plan(TapeBinding<S>& bind, const InputPlan& plan,
                     std::vector<MatX<S>>* probs_out) const {
    std::vector<Var<S>> rows;
    if (plan.use_prompts) rows.push_back(bind.use("prompts.img_start"));
    if (plan.use_features) {
      if (!plan.image) throw ContractError("encode: plan wants features but has no image");
      rows.push_back(project(bind, grid_features(bind, *plan.image, cfg_)));
    }
    if (plan.use_prompts) rows.push_back(bind.use("prompts.img_end"));
    if (!plan.text_ids.empty()) {
      Var<S> tok = gather_rows(bind.use("lm.tok_embed"), plan.text_ids);
      std::vector<int> pos(plan.text_ids.size());
      for (size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
      rows.push_back(add(tok, gather_rows(bind.use("lm.pos"), pos)));
    }
    if (rows.empty()) throw ContractError("encode: empty input sequence");
    Var<S> x = rows.size() == 1 ? rows[0] : concat_rows(rows);

    for (int l = 0; l < cfg_.n_enc_blocks; ++l)
      x = encoder_block(bind, x, "lm.enc" + std::to_string(l), cfg_.n_heads);
    x = rmsnorm(x, bind.use("lm.enc_final_norm"));

    Var<S> d = gather_rows(bind.use("lm.tok_embed"), std::vector<int>{Vocab::kDecStart});
    for (int l = 0; l < cfg_.n_dec_blocks; ++l) {
      std::string p = "lm.dec" + std::to_string(l);
      Var<S> sn = rmsnorm(d, bind.use(p + ".self.norm"));
      d = add(d, multi_head_attention(bind, sn, sn, p + ".self", cfg_.n_heads).out);
      Var<S> cn = rmsnorm(d, bind.use(p + ".cross.norm"));
      AttnResult<S> cross =
          multi_head_attention(bind, cn, x, p + ".cross", cfg_.n_heads, probs_out != nullptr);
      if (probs_out && l == cfg_.n_dec_blocks - 1) *probs_out = cross.head_probs;
      d = add(d, cross.out);
      d = add(d, feed_forward(bind, rmsnorm(d, bind.use(p + ".ffn.norm")), p + ".ffn"));
    }
    return rmsnorm(d, bind.use("lm.dec_final_norm"));
  }

  void build_params() {
    int v = vocab_.size();
    if (v <= Vocab::kNumSpecials) throw DataError("model: vocabulary has no regular tokens");
    params_.add("lm.tok_embed", ParamGroup::LM, v, cfg_.d_model);
    params_.add("lm.pos", ParamGroup::LM, cfg_.max_text_len, cfg_.d_model);
    for (int l = 0; l < cfg_.n_enc_blocks; ++l)
      add_encoder_block_params(params_, ParamGroup::LM, "lm.enc" + std::to_string(l), cfg_.d_model,
                               cfg_.ff);
    params_.add("lm.enc_final_norm", ParamGroup::LM, 1, cfg_.d_model, InitKind::One);
    for (int l = 0; l < cfg_.n_dec_blocks; ++l) {
      std::string p = "lm.dec" + std::to_string(l);
      params_.add(p + ".self.norm", ParamGroup::LM, 1, cfg_.d_model, InitKind::One);
      for (const char* w : {".self.wq", ".self.wk", ".self.wv", ".self.wo"})
        params_.add(p + w, ParamGroup::LM, cfg_.d_model, cfg_.d_model);
      params_.add(p + ".cross.norm", ParamGroup::LM, 1, cfg_.d_model, InitKind::One);
      for (const char* w : {".cross.wq", ".cross.wk", ".cross.wv", ".cross.wo"})
        params_.add(p + w, ParamGroup::LM, cfg_.d_model, cfg_.d_model);
      params_.add(p + ".ffn.norm", ParamGroup::LM, 1, cfg_.d_model, InitKind::One);
      params_.add(p + ".ffn.w1", ParamGroup::LM, cfg_.d_model, cfg_.ff);
      params_.add(p + ".ffn.b1", ParamGroup::LM, 1, cfg_.ff, InitKind::Zero);
      params_.add(p + ".ffn.w2", ParamGroup::LM, cfg_.ff, cfg_.d_model);
      params_.add(p + ".ffn.b2", ParamGroup::LM, 1, cfg_.d_model, InitKind::Zero);
    }
    params_.add("lm.dec_final_norm", ParamGroup::LM, 1, cfg_.d_model, InitKind::One);
    params_.add("lm.concat_proj.w", ParamGroup::LM, 2 * cfg_.d_model, cfg_.d_model);
    params_.add("lm.concat_proj.b", ParamGroup::LM, 1, cfg_.d_model, InitKind::Zero);
    params_.add("prompts.img_start", ParamGroup::Prompts, 1, cfg_.d_model);
    params_.add("prompts.img_end", ParamGroup::Prompts, 1, cfg_.d_model);
    add_vision_params(params_, cfg_);
  }

  ModelConfig cfg_;
  Vocab vocab_;
  ParamStore<S> params_;
};

}  // namespace marvel
