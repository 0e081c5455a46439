#pragma once

#include <string>

#include "marvel/common.hpp"

namespace marvel {

// Desk-scale geometry. The language half keeps the encoder/decoder/cross-
// attention structure of the full model at d_model=32; the vision half is a
// 2-block patch-grid transformer whose 49-token output preserves the plugin
// interface of the full-scale visual encoder.
struct ModelConfig {
  // language model
  int d_model = 32;
  int n_heads = 4;
  int ff = 64;
  int n_enc_blocks = 2;
  int n_dec_blocks = 1;
  int max_text_len = 128;
  // vision encoder
  int d_vis = 32;
  int vis_heads = 4;
  int vis_ff = 64;
  int n_vis_blocks = 2;
  int patch_size = 4;
  int image_h = 28;
  int image_w = 28;
  int channels = 1;

  int grid_rows() const { return image_h / patch_size; }
  int grid_cols() const { return image_w / patch_size; }
  int n_patches() const { return grid_rows() * grid_cols(); }
  int patch_dim() const { return patch_size * patch_size * channels; }

  void validate() const {
    if (d_model <= 0 || d_vis <= 0) throw ContractError("config: dims must be positive");
    if (d_model % n_heads != 0) throw ContractError("config: d_model % n_heads != 0");
    if (d_vis % vis_heads != 0) throw ContractError("config: d_vis % vis_heads != 0");
    if (image_h % patch_size != 0 || image_w % patch_size != 0)
      throw ShapeError("config: image dims not divisible by patch size");
    if (n_patches() != 49)
      throw ShapeError("config: patch grid must be 7x7 (49 patches), got " +
                       std::to_string(n_patches()));
  }
};

enum class FusionMode { Plugin, Sum, Concat, TextOnly };

inline FusionMode fusion_from_name(const std::string& s) {
  if (s == "plugin") return FusionMode::Plugin;
  if (s == "sum") return FusionMode::Sum;
  if (s == "concat") return FusionMode::Concat;
  if (s == "text_only") return FusionMode::TextOnly;
  throw DataError("unknown fusion mode: " + s);
}

inline const char* fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::Plugin: return "plugin";
    case FusionMode::Sum: return "sum";
    case FusionMode::Concat: return "concat";
    case FusionMode::TextOnly: return "text_only";
  }
  return "?";
}

// Per-encode options: fusion mode plus the input-ablation switches.
struct EncodeOptions {
  FusionMode fusion = FusionMode::Plugin;
  bool drop_caption = false;
  bool drop_features = false;
  bool drop_prompt = false;
};

}  // namespace marvel
