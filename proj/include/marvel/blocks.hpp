#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "marvel/binding.hpp"
#include "marvel/ops.hpp"

namespace marvel {

template <typename S>
struct AttnResult {
  Var<S> out;
  // Per-head attention distributions (value snapshots), rows = query
  // positions, cols = key positions. Filled only when requested.
  std::vector<MatX<S>> head_probs;
};

// Multi-head scaled dot-product attention. Parameters under `prefix`:
// .wq .wk .wv .wo, all [d x d], no biases.
template <typename S>
AttnResult<S> multi_head_attention(TapeBinding<S>& bind, Var<S> xq, Var<S> xkv,
                                   const std::string& prefix, int n_heads,
                                   bool capture_probs = false) {
  Var<S> q = matmul(xq, bind.use(prefix + ".wq"));
  Var<S> k = matmul(xkv, bind.use(prefix + ".wk"));
  Var<S> v = matmul(xkv, bind.use(prefix + ".wv"));
  Eigen::Index d = q.cols();
  if (d % n_heads != 0) throw ShapeError("attention: d % heads != 0");
  Eigen::Index dh = d / n_heads;
  S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  AttnResult<S> res;
  std::vector<Var<S>> heads;
  heads.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Var<S> qh = slice_cols(q, h * dh, dh);
    Var<S> kh = slice_cols(k, h * dh, dh);
    Var<S> vh = slice_cols(v, h * dh, dh);
    Var<S> probs = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    if (capture_probs) res.head_probs.push_back(probs.value());
    heads.push_back(matmul(probs, vh));
  }
  res.out = matmul(concat_cols(heads), bind.use(prefix + ".wo"));
  return res;
}

// Two-layer feed-forward with GELU. Parameters: .w1 .b1 .w2 .b2.
template <typename S>
Var<S> feed_forward(TapeBinding<S>& bind, Var<S> x, const std::string& prefix) {
  Var<S> h = gelu(add_rowvec(matmul(x, bind.use(prefix + ".w1")), bind.use(prefix + ".b1")));
  return add_rowvec(matmul(h, bind.use(prefix + ".w2")), bind.use(prefix + ".b2"));
}

// Pre-norm self-attention transformer block:
//   x + MHA(norm(x)); then + FFN(norm(.)).
template <typename S>
Var<S> encoder_block(TapeBinding<S>& bind, Var<S> x, const std::string& prefix, int n_heads) {
  Var<S> normed = rmsnorm(x, bind.use(prefix + ".att.norm"));
  Var<S> a = add(x, multi_head_attention(bind, normed, normed, prefix + ".att", n_heads).out);
  Var<S> normed2 = rmsnorm(a, bind.use(prefix + ".ffn.norm"));
  return add(a, feed_forward(bind, normed2, prefix + ".ffn"));
}

// Registers one encoder block's parameters.
template <typename S>
void add_encoder_block_params(ParamStore<S>& ps, ParamGroup group, const std::string& prefix,
                              int d, int ff) {
  ps.add(prefix + ".att.norm", group, 1, d, InitKind::One);
  for (const char* w : {".att.wq", ".att.wk", ".att.wv", ".att.wo"})
    ps.add(prefix + w, group, d, d);
  ps.add(prefix + ".ffn.norm", group, 1, d, InitKind::One);
  ps.add(prefix + ".ffn.w1", group, d, ff);
  ps.add(prefix + ".ffn.b1", group, 1, ff, InitKind::Zero);
  ps.add(prefix + ".ffn.w2", group, ff, d);
  ps.add(prefix + ".ffn.b2", group, 1, d, InitKind::Zero);
}

}  // namespace marvel
