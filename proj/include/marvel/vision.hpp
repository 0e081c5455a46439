#pragma once

#include <string>

#include "marvel/blocks.hpp"
#include "marvel/image.hpp"
#include "marvel/model_config.hpp"

namespace marvel {

// Splits a grid image into the 7x7 patch sequence. Patches are ordered
// row-major over the grid; within a patch, pixels are row-major and
// channel-minor. Shape: [49 x patch_size^2 * channels].
template <typename S>
MatX<S> patchify(const GridImage& img, int patch_size) {
  img.validate();
  if (img.height % patch_size != 0 || img.width % patch_size != 0)
    throw ShapeError("patchify: image dims not divisible by patch size");
  int gr = img.height / patch_size;
  int gc = img.width / patch_size;
  if (gr * gc != 49)
    throw ShapeError("patchify: expected a 7x7 patch grid, got " + std::to_string(gr) + "x" +
                     std::to_string(gc));
  int pd = patch_size * patch_size * img.channels;
  MatX<S> out(49, pd);
  for (int py = 0; py < gr; ++py) {
    for (int px = 0; px < gc; ++px) {
      Eigen::Index row = py * gc + px;
      Eigen::Index k = 0;
      for (int dy = 0; dy < patch_size; ++dy)
        for (int dx = 0; dx < patch_size; ++dx)
          for (int c = 0; c < img.channels; ++c)
            out(row, k++) =
                static_cast<S>(img.at(py * patch_size + dy, px * patch_size + dx, c));
    }
  }
  return out;
}

// Registers the vision-encoder and projection parameters.
template <typename S>
void add_vision_params(ParamStore<S>& ps, const ModelConfig& cfg) {
  ps.add("vis.patch_embed", ParamGroup::Vision, cfg.patch_dim(), cfg.d_vis);
  ps.add("vis.pos", ParamGroup::Vision, cfg.n_patches(), cfg.d_vis);
  for (int l = 0; l < cfg.n_vis_blocks; ++l)
    add_encoder_block_params(ps, ParamGroup::Vision, "vis.blk" + std::to_string(l), cfg.d_vis,
                             cfg.vis_ff);
  ps.add("vis.final_norm", ParamGroup::Vision, 1, cfg.d_vis, InitKind::One);
  ps.add("proj.w", ParamGroup::Projection, cfg.d_vis, cfg.d_model);
  ps.add("proj.b", ParamGroup::Projection, 1, cfg.d_model, InitKind::Zero);
}

// Last-layer per-patch hidden states of the vision encoder, [49 x d_vis].
// Outputs are taken after the final norm.
template <typename S>
Var<S> grid_features(TapeBinding<S>& bind, const GridImage& img, const ModelConfig& cfg) {
  Var<S> patches = bind.tape().constant(patchify<S>(img, cfg.patch_size));
  Var<S> x = add(matmul(patches, bind.use("vis.patch_embed")), bind.use("vis.pos"));
  for (int l = 0; l < cfg.n_vis_blocks; ++l)
    x = encoder_block(bind, x, "vis.blk" + std::to_string(l), cfg.vis_heads);
  return rmsnorm(x, bind.use("vis.final_norm"));
}

// Affine map of grid features into the language model's input space,
// [49 x d_vis] -> [49 x d_model].
template <typename S>
Var<S> project(TapeBinding<S>& bind, Var<S> features) {
  Var<S> w = bind.use("proj.w");
  if (features.cols() != w.rows()) throw ShapeError("project: d_vis mismatch");
  return add_rowvec(matmul(features, w), bind.use("proj.b"));
}

}  // namespace marvel
