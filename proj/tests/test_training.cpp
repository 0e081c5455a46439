#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "marvel/forge.hpp"
#include "marvel/grad_check.hpp"
#include "marvel/trainer.hpp"

using namespace marvel;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.ff = 16;
  cfg.n_enc_blocks = 1;
  cfg.max_text_len = 16;
  cfg.d_vis = 8;
  cfg.vis_heads = 2;
  cfg.vis_ff = 16;
  cfg.n_vis_blocks = 1;
  return cfg;
}

SyntheticConfig tiny_synth() {
  SyntheticConfig sc;
  sc.seed = 5;
  sc.n_queries = 8;
  sc.n_text_docs = 8;
  sc.n_image_docs = 8;
  sc.vocab_size = 300;
  return sc;
}

Vocab vocab_of(const SyntheticData& data) {
  std::vector<std::string> texts;
  for (const auto& d : data.corpus.docs) texts.push_back(d.text);
  for (const auto& q : data.queries) texts.push_back(q.text);
  return build_vocab(texts, 1);
}

double cosd(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

// Independent scalar recomputation of the dual contrastive objective.
double oracle_pretrain(const std::vector<Eigen::VectorXd>& img,
                       const std::vector<Eigen::VectorXd>& cap, double tau) {
  const int n = static_cast<int>(img.size());
  double lic = 0, lci = 0;
  for (int i = 0; i < n; ++i) {
    double d1 = 0, d2 = 0;
    for (int j = 0; j < n; ++j) d1 += std::exp(cosd(img[i], cap[j]) / tau);
    for (int j = 0; j < n; ++j) d2 += std::exp(cosd(img[j], cap[i]) / tau);
    lic += -std::log(std::exp(cosd(img[i], cap[i]) / tau) / d1);
    lci += -std::log(std::exp(cosd(img[i], cap[i]) / tau) / d2);
  }
  return lic / n + lci / n;
}

// Independent scalar recomputation of the hard-negative cross-entropy.
double oracle_finetune(const Eigen::VectorXd& q, const Eigen::VectorXd& pos,
                       const std::vector<Eigen::VectorXd>& negs, double tau) {
  double denom = std::exp(cosd(q, pos) / tau);
  for (const auto& d : negs) denom += std::exp(cosd(q, d) / tau);
  return -std::log(std::exp(cosd(q, pos) / tau) / denom);
}

EncodeOptions image_side_opts() {
  EncodeOptions o;
  o.drop_caption = true;
  return o;
}

EncodeOptions caption_side_opts() {
  EncodeOptions o;
  o.fusion = FusionMode::TextOnly;
  return o;
}

}  // namespace

TEST_CASE("pretrain_loss: batch of one is exactly zero") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Model<double> model(tiny_cfg(), vocab_of(data), 42);
  Tape<double> tape;
  TapeBinding<double> bind(tape, model.params(), false);
  std::vector<const PretrainPair*> batch = {&data.pairs[0]};
  LossValue<double> loss = pretrain_loss(bind, model, batch, 0.01);
  CHECK(loss.total.scalar() == 0.0);
  CHECK(loss.l_ic == 0.0);
  CHECK(loss.l_ci == 0.0);
}

TEST_CASE("pretrain_loss: two clones give ln2 per direction") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Model<double> model(tiny_cfg(), vocab_of(data), 42);
  PretrainPair a = data.pairs[0];
  PretrainPair b = data.pairs[0];
  b.id = "p_other";  // same content, distinct id: all four scores equal
  Tape<double> tape;
  TapeBinding<double> bind(tape, model.params(), false);
  LossValue<double> loss = pretrain_loss(bind, model, {&a, &b}, 0.01);
  CHECK(loss.l_ic == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(loss.l_ci == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(loss.total.scalar() == doctest::Approx(1.3862943611).epsilon(1e-6));
}

TEST_CASE("pretrain_loss rejects duplicate pair ids") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Model<double> model(tiny_cfg(), vocab_of(data), 42);
  Tape<double> tape;
  TapeBinding<double> bind(tape, model.params(), false);
  std::vector<const PretrainPair*> batch = {&data.pairs[0], &data.pairs[0]};
  CHECK_THROWS_AS(pretrain_loss(bind, model, batch, 0.01), ContractError);
}

TEST_CASE("pretrain_loss matches the brute-force oracle on a batch of three") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Model<double> model(tiny_cfg(), vocab_of(data), 42);
  std::vector<const PretrainPair*> batch = {&data.pairs[0], &data.pairs[1], &data.pairs[2]};

  std::vector<Eigen::VectorXd> img, cap;
  for (const auto* p : batch) {
    Document d;
    d.id = p->id;
    d.modality = Modality::Image;
    d.text = p->caption;
    d.image = p->image;
    img.push_back(model.embed(d, image_side_opts()));
    cap.push_back(model.embed(d, caption_side_opts()));
  }
  double expect = oracle_pretrain(img, cap, 0.01);

  Tape<double> tape;
  TapeBinding<double> bind(tape, model.params(), false);
  LossValue<double> loss = pretrain_loss(bind, model, batch, 0.01);
  CHECK(loss.total.scalar() == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("dual_contrastive swaps directions under transposition") {
  Tape<double> tape;
  Rng rng(3);
  const int n = 4;
  std::vector<std::vector<Var<double>>> f(n, std::vector<Var<double>>(n));
  std::vector<std::vector<Var<double>>> ft(n, std::vector<Var<double>>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      MatX<double> v(1, 1);
      v(0, 0) = rng.uniform(-50, 50);
      f[i][j] = tape.constant(v);
    }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) ft[i][j] = f[j][i];
  auto [ic, ci] = dual_contrastive(f);
  auto [ic_t, ci_t] = dual_contrastive(ft);
  CHECK(ic.scalar() == doctest::Approx(ci_t.scalar()).epsilon(1e-12));
  CHECK(ci.scalar() == doctest::Approx(ic_t.scalar()).epsilon(1e-12));
}

TEST_CASE("finetune_loss: uniform candidate scores give ln(n)") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Model<double> model(tiny_cfg(), vocab_of(data), 42);
  Query q{"q", "w1 w2"};
  Document pos;
  pos.id = "pos";
  pos.modality = Modality::Text;
  pos.text = "w5 w6 w7";
  std::vector<Document> negs(3, pos);
  negs[0].id = "n0";
  negs[1].id = "n1";
  negs[2].id = "n2";  // same text as the positive: all scores equal
  TrainExample ex;
  ex.query = &q;
  ex.positive = &pos;
  for (auto& d : negs) ex.hard_negatives.push_back(&d);

  Tape<double> tape;
  TapeBinding<double> bind(tape, model.params(), false);
  LossValue<double> loss = finetune_loss(bind, model, {ex}, 0.01, false, EncodeOptions{});
  CHECK(loss.total.scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("contrastive_ce saturates to ~0 when the positive dominates") {
  Tape<double> tape;
  double tau = 0.01;
  auto leaf = [&](double v) {
    MatX<double> m(1, 1);
    m(0, 0) = v;
    return tape.constant(m);
  };
  std::vector<Var<double>> scores = {leaf(1.0 / tau), leaf(-1.0 / tau), leaf(-1.0 / tau)};
  double loss = contrastive_ce(scores).scalar();
  CHECK(loss >= 0.0);
  CHECK(loss < 1e-80);
}

TEST_CASE("contrastive_ce is shift invariant") {
  Tape<double> tape;
  Rng rng(9);
  auto leaf = [&](double v) {
    MatX<double> m(1, 1);
    m(0, 0) = v;
    return tape.constant(m);
  };
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Var<double>> scores, shifted;
    double c = rng.uniform(-30, 30);
    for (int i = 0; i < 5; ++i) {
      double s = rng.uniform(-40, 40);
      scores.push_back(leaf(s));
      shifted.push_back(leaf(s + c));
    }
    CHECK(std::fabs(contrastive_ce(scores).scalar() - contrastive_ce(shifted).scalar()) < 1e-6);
  }
}

TEST_CASE("finetune_loss matches the scalar oracle with 1 query and 2 hard negatives") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Model<double> model(tiny_cfg(), vocab_of(data), 42);
  const Query& q = data.queries[0];
  const Document* pos = &data.corpus.at(data.qrels.at(q.id).begin()->first);
  const Document* n1 = &data.corpus.docs[3];
  const Document* n2 = &data.corpus.docs[5];
  TrainExample ex;
  ex.query = &q;
  ex.positive = pos;
  ex.hard_negatives = {n1, n2};

  double expect = oracle_finetune(
      model.embed(q), model.embed(*pos, EncodeOptions{}),
      {model.embed(*n1, EncodeOptions{}), model.embed(*n2, EncodeOptions{})}, 0.01);

  Tape<double> tape;
  TapeBinding<double> bind(tape, model.params(), false);
  LossValue<double> loss = finetune_loss(bind, model, {ex}, 0.01, false, EncodeOptions{});
  CHECK(loss.total.scalar() == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("finetune_loss rejects the positive among its own negatives") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Model<double> model(tiny_cfg(), vocab_of(data), 42);
  const Query& q = data.queries[0];
  const Document* pos = &data.corpus.at(data.qrels.at(q.id).begin()->first);
  TrainExample ex;
  ex.query = &q;
  ex.positive = pos;
  ex.hard_negatives = {pos};
  Tape<double> tape;
  TapeBinding<double> bind(tape, model.params(), false);
  CHECK_THROWS_AS(finetune_loss(bind, model, {ex}, 0.01, false, EncodeOptions{}), ContractError);
}

TEST_CASE("gradients of both losses pass the finite-difference check") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Vocab vocab = vocab_of(data);

  SUBCASE("pretrain loss over vision+projection") {
    Model<double> model(tiny_cfg(), vocab, 42);
    model.params().set_trainable(trainable_for_phase("pretrain"));
    std::vector<const PretrainPair*> batch = {&data.pairs[0], &data.pairs[1]};
    auto loss_fn = [&](ParamStore<double>&, bool with_grad) {
      Tape<double> tape;
      TapeBinding<double> bind(tape, model.params(), true);
      LossValue<double> l = pretrain_loss(bind, model, batch, 0.05);
      if (with_grad) {
        tape.backward(l.total);
        bind.harvest_grads();
      }
      return static_cast<double>(l.total.scalar());
    };
    auto res = finite_diff_check<double>(model.params(), loss_fn);
    CAPTURE(res.worst_param);
    CHECK(res.max_rel_err < 1e-4);
  }

  SUBCASE("finetune loss over lm+projection+prompts") {
    Model<double> model(tiny_cfg(), vocab, 43);
    model.params().set_trainable(trainable_for_phase("finetune"));
    std::vector<TrainExample> batch;
    for (int i = 0; i < 2; ++i) {
      TrainExample ex;
      ex.query = &data.queries[i];
      ex.positive = &data.corpus.at(data.qrels.at(data.queries[i].id).begin()->first);
      ex.hard_negatives = {&data.corpus.docs[4 + i], &data.corpus.docs[6 + i]};
      batch.push_back(ex);
    }
    auto loss_fn = [&](ParamStore<double>&, bool with_grad) {
      Tape<double> tape;
      TapeBinding<double> bind(tape, model.params(), true);
      LossValue<double> l = finetune_loss(bind, model, batch, 0.05, true, EncodeOptions{});
      if (with_grad) {
        tape.backward(l.total);
        bind.harvest_grads();
      }
      return static_cast<double>(l.total.scalar());
    };
    auto res = finite_diff_check<double>(model.params(), loss_fn);
    CAPTURE(res.worst_param);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("adamw basics") {
  SUBCASE("zero grad and zero weight decay leave params unchanged") {
    ParamStore<float> ps;
    ps.add("w", ParamGroup::LM, 2, 2);
    ps.init_seeded(1);
    ps.set_trainable({ParamGroup::LM});
    MatX<float> before = ps.at("w").value;
    ps.at("w").grad = MatX<float>::Zero(2, 2);
    AdamW<float> opt(AdamWConfig{});
    opt.step(ps);
    CHECK(ps.at("w").value == before);
  }

  SUBCASE("one step on f(w)=w^2 at w=1 decreases w") {
    ParamStore<double> ps;
    ps.add("w", ParamGroup::LM, 1, 1);
    ps.at("w").value(0, 0) = 1.0;
    ps.set_trainable({ParamGroup::LM});
    ps.at("w").grad = MatX<double>::Constant(1, 1, 2.0);
    AdamWConfig cfg;
    cfg.lr = 0.01;
    AdamW<double> opt(cfg);
    opt.step(ps);
    CHECK(ps.at("w").value(0, 0) < 1.0);
  }

  SUBCASE("200 steps on a 2-parameter quadratic reach the minimizer within 1e-3") {
    ParamStore<double> ps;
    ps.add("w", ParamGroup::LM, 2, 1);
    ps.at("w").value(0, 0) = 1.7;
    ps.at("w").value(1, 0) = -0.9;
    ps.set_trainable({ParamGroup::LM});
    Eigen::Vector2d target(2.0, -1.0);
    AdamWConfig cfg;
    cfg.lr = 0.05;
    AdamW<double> opt(cfg);
    for (int step = 0; step < 200; ++step) {
      ps.at("w").grad = MatX<double>::Zero(2, 1);
      ps.at("w").grad(0, 0) = 2.0 * (ps.at("w").value(0, 0) - target(0));
      ps.at("w").grad(1, 0) = 2.0 * (ps.at("w").value(1, 0) - target(1));
      opt.step(ps);
    }
    CHECK(std::fabs(ps.at("w").value(0, 0) - target(0)) < 1e-3);
    CHECK(std::fabs(ps.at("w").value(1, 0) - target(1)) < 1e-3);
  }

  SUBCASE("non-finite gradient aborts with the parameter name") {
    ParamStore<float> ps;
    ps.add("w", ParamGroup::LM, 1, 1);
    ps.set_trainable({ParamGroup::LM});
    ps.at("w").grad = MatX<float>::Constant(1, 1, std::numeric_limits<float>::quiet_NaN());
    AdamW<float> opt(AdamWConfig{});
    CHECK_THROWS_WITH_AS(opt.step(ps), doctest::Contains("w"), NumericError);
  }
}

TEST_CASE("mine_hard_negatives skips judged-relevant docs and is seed-deterministic") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Model<float> model(tiny_cfg(), vocab_of(data), 42);

  SUBCASE("candidates come from ranks 2..k when rank 1 is relevant") {
    // 5-document text-only corpus; qrels mark the model's own top hit.
    Corpus small;
    for (int i = 0; i < 5; ++i) {
      Document d = data.corpus.docs[1 + 2 * i];  // text docs of the synthetic set
      REQUIRE(d.modality == Modality::Text);
      small.add(d);
    }
    Query q = data.queries[1];
    std::vector<std::pair<std::string, Eigen::VectorXd>> embs;
    for (const auto& d : small.docs) embs.emplace_back(d.id, model.embed(d, EncodeOptions{}));
    FlatIndex idx = FlatIndex::build(embs);
    auto ranked = idx.search(model.embed(q), 3);
    Qrels qrels;
    qrels[q.id][ranked[0].doc_id] = 1;

    for (uint64_t seed : {1ull, 2ull, 3ull, 9ull}) {
      auto mined =
          mine_hard_negatives(model, {q}, small, qrels, 3, 0, 1, seed, EncodeOptions{});
      REQUIRE(mined.size() == 1);
      CHECK((mined[0].docid == ranked[1].doc_id || mined[0].docid == ranked[2].doc_id));
      CHECK_FALSE(mined[0].fallback);
    }
  }

  SUBCASE("per_modality=1 yields exactly one image and one text negative per query") {
    auto mined = mine_hard_negatives(model, data.queries, data.corpus, data.qrels, 10, 1, 1, 7,
                                     EncodeOptions{});
    std::map<std::string, std::pair<int, int>> counts;
    for (const auto& m : mined) {
      if (m.modality == Modality::Image)
        counts[m.qid].first++;
      else
        counts[m.qid].second++;
    }
    CHECK(counts.size() == data.queries.size());
    for (const auto& [qid, c] : counts) {
      CHECK(c.first == 1);
      CHECK(c.second == 1);
    }
  }

  SUBCASE("same seed gives identical assignments") {
    auto a = mine_hard_negatives(model, data.queries, data.corpus, data.qrels, 10, 1, 1, 11,
                                 EncodeOptions{});
    auto b = mine_hard_negatives(model, data.queries, data.corpus, data.qrels, 10, 1, 1, 11,
                                 EncodeOptions{});
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].qid == b[i].qid);
      CHECK(a[i].docid == b[i].docid);
    }
  }

  SUBCASE("an empty modality partition falls back to a corpus-wide draw") {
    // top_k=1 with the single top hit marked relevant leaves both partitions
    // empty, so both negatives must come from the fallback pool.
    Query q = data.queries[0];
    std::vector<std::pair<std::string, Eigen::VectorXd>> embs;
    for (const auto& d : data.corpus.docs) embs.emplace_back(d.id, model.embed(d, EncodeOptions{}));
    FlatIndex idx = FlatIndex::build(embs);
    Qrels qrels = data.qrels;
    qrels[q.id][idx.search(model.embed(q), 1)[0].doc_id] = 1;
    auto mined = mine_hard_negatives(model, {q}, data.corpus, qrels, 1, 1, 1, 3, EncodeOptions{});
    REQUIRE(mined.size() == 2);
    CHECK(mined[0].fallback);
    CHECK(mined[1].fallback);
  }
}

TEST_CASE("freeze contracts: pretraining leaves the LM untouched, finetuning the vision module") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Vocab vocab = vocab_of(data);

  SUBCASE("pretrain") {
    Model<float> model(tiny_cfg(), vocab, 42);
    std::map<std::string, MatX<float>> before;
    for (const auto& e : model.params().entries()) before[e.name] = e.value;

    TrainConfig cfg;
    cfg.phase = "pretrain";
    cfg.max_steps = 3;
    cfg.batch_size = 4;
    cfg.eval_every = 0;
    train_pretrain(model, data.pairs, {}, cfg);

    bool proj_changed = false, vis_changed = false;
    for (const auto& e : model.params().entries()) {
      if (e.group == ParamGroup::LM || e.group == ParamGroup::Prompts)
        CHECK(e.value == before[e.name]);
      if (e.group == ParamGroup::Projection && e.value != before[e.name]) proj_changed = true;
      if (e.group == ParamGroup::Vision && e.value != before[e.name]) vis_changed = true;
    }
    CHECK(proj_changed);
    CHECK(vis_changed);
  }

  SUBCASE("finetune") {
    Model<float> model(tiny_cfg(), vocab, 42);
    std::map<std::string, MatX<float>> before;
    for (const auto& e : model.params().entries()) before[e.name] = e.value;

    TrainConfig cfg;
    cfg.phase = "finetune";
    cfg.stage = "dpr";
    cfg.max_steps = 3;
    cfg.batch_size = 4;
    cfg.eval_every = 0;
    train_finetune(model, data.queries, data.corpus, data.qrels, {}, {}, {}, cfg);

    bool proj_changed = false, lm_changed = false, prompts_changed = false;
    for (const auto& e : model.params().entries()) {
      if (e.group == ParamGroup::Vision) CHECK(e.value == before[e.name]);
      if (e.group == ParamGroup::Projection && e.value != before[e.name]) proj_changed = true;
      if (e.group == ParamGroup::LM && e.value != before[e.name]) lm_changed = true;
      if (e.group == ParamGroup::Prompts && e.value != before[e.name]) prompts_changed = true;
    }
    CHECK(proj_changed);
    CHECK(lm_changed);
    CHECK(prompts_changed);
  }
}

TEST_CASE("early stopping: a frozen dev metric stops after exactly 5 more evals") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Model<float> model(tiny_cfg(), vocab_of(data), 42);
  TrainConfig cfg;
  cfg.phase = "finetune";
  cfg.stage = "dpr";
  cfg.batch_size = 4;
  cfg.max_steps = 100;
  cfg.eval_every = 1;
  cfg.early_stop = 5;
  cfg.opt.lr = 0.0;  // freezes the dev metric by construction
  std::ostringstream log;
  TrainResult res = train_finetune(model, data.queries, data.corpus, data.qrels, data.queries,
                                   data.qrels, {}, cfg, &log);
  CHECK(res.evals.size() == 6);  // best at the first eval, then 5 non-improving
  CHECK(res.best_step == 1);
  int lines = 0;
  std::string line;
  std::istringstream is(log.str());
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 6);
}

TEST_CASE("trainer restores the best checkpoint") {
  SyntheticData data = gen_synthetic(tiny_synth());
  Model<float> model(tiny_cfg(), vocab_of(data), 42);
  TrainConfig cfg;
  cfg.phase = "finetune";
  cfg.stage = "dpr";
  cfg.batch_size = 4;
  cfg.max_steps = 4;
  cfg.eval_every = 2;
  cfg.opt.lr = 0.0;
  TrainResult res = train_finetune(model, data.queries, data.corpus, data.qrels, data.queries,
                                   data.qrels, {}, cfg);
  CHECK(res.best_step == 2);
  CHECK(res.best_metric >= 0.0);
  // With lr=0 the restored best equals the seeded initialization.
  Model<float> fresh(tiny_cfg(), vocab_of(data), 42);
  for (size_t i = 0; i < fresh.params().entries().size(); ++i)
    CHECK(model.params().entries()[i].value == fresh.params().entries()[i].value);
}
