#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "marvel/rng.hpp"
#include "marvel/vision.hpp"

using namespace marvel;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_vis = 8;
  cfg.vis_heads = 2;
  cfg.vis_ff = 16;
  cfg.n_vis_blocks = 2;
  return cfg;
}

GridImage const_image(float v, int h = 28, int w = 28, int c = 1) {
  GridImage img;
  img.height = h;
  img.width = w;
  img.channels = c;
  img.pixels.assign(static_cast<size_t>(h) * w * c, v);
  return img;
}

GridImage random_image(Rng& rng, int h = 28, int w = 28, int c = 1) {
  GridImage img = const_image(0, h, w, c);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

ParamStore<double> vision_store(const ModelConfig& cfg, uint64_t seed = 3) {
  ParamStore<double> ps;
  add_vision_params(ps, cfg);
  ps.init_seeded(seed);
  return ps;
}

}  // namespace

TEST_CASE("patchify shape: 28x28x1 with patch 4 gives 49 patches of length 16") {
  GridImage img = const_image(0.25f);
  MatX<double> p = patchify<double>(img, 4);
  CHECK(p.rows() == 49);
  CHECK(p.cols() == 16);
}

TEST_CASE("patchify of a constant image yields 49 identical patch vectors") {
  MatX<double> p = patchify<double>(const_image(0.7f), 4);
  for (int i = 1; i < 49; ++i) CHECK(p.row(i) == p.row(0));
}

TEST_CASE("one bright pixel at (0,0) changes only patch 0") {
  GridImage base = const_image(0.2f);
  GridImage bright = base;
  bright.at(0, 0, 0) = 1.0f;
  MatX<double> pb = patchify<double>(base, 4);
  MatX<double> pq = patchify<double>(bright, 4);
  CHECK(pb.row(0) != pq.row(0));
  for (int i = 1; i < 49; ++i) CHECK(pb.row(i) == pq.row(i));
}

TEST_CASE("patchify rejects bad geometry") {
  CHECK_THROWS_AS(patchify<double>(const_image(0, 30, 28, 1), 4), ShapeError);
  // divisible but not a 7x7 grid
  CHECK_THROWS_AS(patchify<double>(const_image(0, 28, 28, 1), 2), ShapeError);
  CHECK_THROWS_AS(patchify<double>(const_image(0, 16, 16, 1), 4), ShapeError);
}

TEST_CASE("grid_features has 49 rows and is deterministic") {
  ModelConfig cfg = tiny_cfg();
  ParamStore<double> ps = vision_store(cfg);
  Rng rng(5);
  GridImage img = random_image(rng);

  Tape<double> t1;
  TapeBinding<double> b1(t1, ps, false);
  MatX<double> f1 = grid_features(b1, img, cfg).value();
  CHECK(f1.rows() == 49);
  CHECK(f1.cols() == cfg.d_vis);

  Tape<double> t2;
  TapeBinding<double> b2(t2, ps, false);
  MatX<double> f2 = grid_features(b2, img, cfg).value();
  CHECK(f1 == f2);
}

TEST_CASE("zero positional embeddings make grid_features patch-equivariant") {
  ModelConfig cfg = tiny_cfg();
  ParamStore<double> ps = vision_store(cfg);
  ps.at("vis.pos").value.setZero();

  Rng rng(17);
  GridImage img = random_image(rng);
  // Swap the pixel blocks of patches 3 and 40 (patch row-major order).
  auto patch_origin = [&](int p) { return std::pair{(p / 7) * 4, (p % 7) * 4}; };
  GridImage swapped = img;
  auto [y3, x3] = patch_origin(3);
  auto [y40, x40] = patch_origin(40);
  for (int dy = 0; dy < 4; ++dy)
    for (int dx = 0; dx < 4; ++dx)
      std::swap(swapped.at(y3 + dy, x3 + dx, 0), swapped.at(y40 + dy, x40 + dx, 0));

  Tape<double> t;
  TapeBinding<double> bind(t, ps, false);
  MatX<double> fa = grid_features(bind, img, cfg).value();
  Tape<double> t2;
  TapeBinding<double> bind2(t2, ps, false);
  MatX<double> fb = grid_features(bind2, swapped, cfg).value();

  MatX<double> expect = fa;
  expect.row(3) = fa.row(40);
  expect.row(40) = fa.row(3);
  CHECK((fb - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("project: identity weights and zero bias reproduce the input") {
  ModelConfig cfg = tiny_cfg();  // d_vis == d_model == 8
  ParamStore<double> ps = vision_store(cfg);
  ps.at("proj.w").value = MatX<double>::Identity(8, 8);
  ps.at("proj.b").value.setZero();
  Rng rng(2);
  GridImage img = random_image(rng);
  Tape<double> t;
  TapeBinding<double> bind(t, ps, false);
  Var<double> h = grid_features(bind, img, cfg);
  Var<double> p = project(bind, h);
  CHECK((p.value() - h.value()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("project: zero weights give 49 copies of the bias") {
  ModelConfig cfg = tiny_cfg();
  ParamStore<double> ps = vision_store(cfg);
  ps.at("proj.w").value.setZero();
  for (int j = 0; j < 8; ++j) ps.at("proj.b").value(0, j) = 0.1 * (j + 1);
  Rng rng(2);
  GridImage img = random_image(rng);
  Tape<double> t;
  TapeBinding<double> bind(t, ps, false);
  MatX<double> p = project(bind, grid_features(bind, img, cfg)).value();
  for (int i = 0; i < 49; ++i) CHECK((p.row(i) - ps.at("proj.b").value.row(0)).norm() < 1e-15);
}

TEST_CASE("project matches an independent matrix-multiply oracle") {
  ModelConfig cfg = tiny_cfg();
  ParamStore<double> ps = vision_store(cfg, 11);
  Rng rng(23);
  MatX<double> h(49, cfg.d_vis);
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = 0; j < h.cols(); ++j) h(i, j) = rng.uniform(-1, 1);

  Tape<double> t;
  TapeBinding<double> bind(t, ps, false);
  MatX<double> got = project(bind, t.constant(h)).value();

  const MatX<double>& w = ps.at("proj.w").value;
  const MatX<double>& b = ps.at("proj.b").value;
  for (int i = 0; i < 49; ++i)
    for (int j = 0; j < cfg.d_model; ++j) {
      double acc = b(0, j);
      for (int k = 0; k < cfg.d_vis; ++k) acc += h(i, k) * w(k, j);
      CHECK(std::fabs(got(i, j) - acc) < 1e-6);
    }
}

TEST_CASE("project is affine-linear in its input") {
  ModelConfig cfg = tiny_cfg();
  ParamStore<double> ps = vision_store(cfg, 13);
  Rng rng(29);
  MatX<double> h1(49, cfg.d_vis), h2(49, cfg.d_vis);
  for (Eigen::Index i = 0; i < h1.rows(); ++i)
    for (Eigen::Index j = 0; j < h1.cols(); ++j) {
      h1(i, j) = rng.uniform(-1, 1);
      h2(i, j) = rng.uniform(-1, 1);
    }
  double alpha = 0.7, beta = -1.3;

  Tape<double> t;
  TapeBinding<double> bind(t, ps, false);
  MatX<double> lhs = project(bind, t.constant(MatX<double>(alpha * h1 + beta * h2))).value();
  MatX<double> p1 = project(bind, t.constant(h1)).value();
  MatX<double> p2 = project(bind, t.constant(h2)).value();
  MatX<double> bias = ps.at("proj.b").value.replicate(49, 1);
  MatX<double> rhs = alpha * p1 + beta * p2 - (alpha + beta - 1) * bias;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("project rejects dimension mismatch") {
  ModelConfig cfg = tiny_cfg();
  ParamStore<double> ps = vision_store(cfg);
  Tape<double> t;
  TapeBinding<double> bind(t, ps, false);
  CHECK_THROWS_AS(project(bind, t.constant(MatX<double>::Ones(49, cfg.d_vis + 1))), ShapeError);
}

TEST_CASE("imgf round trip") {
  Rng rng(31);
  GridImage img = random_image(rng, 28, 28, 1);
  write_imgf(img, "test_img.imgf");
  GridImage back = read_imgf("test_img.imgf");
  CHECK(back.height == img.height);
  CHECK(back.width == img.width);
  CHECK(back.channels == img.channels);
  CHECK(back.pixels == img.pixels);
  std::remove("test_img.imgf");
}
