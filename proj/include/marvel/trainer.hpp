#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "marvel/loss.hpp"
#include "marvel/metrics.hpp"
#include "marvel/optimizer.hpp"
#include "marvel/runfile.hpp"

namespace marvel {

struct TrainConfig {
  std::string phase = "finetune";  // pretrain | finetune
  std::string stage = "dpr";       // dpr (in-batch only) | ance (mined hard negatives)
  EncodeOptions doc_opts;
  double tau = 0.01;
  AdamWConfig opt;
  int batch_size = 8;
  int max_steps = 300;
  int eval_every = 500;
  int early_stop = 5;
  int eval_k = 100;
  uint64_t seed = 42;
  bool in_batch = true;
  std::optional<std::set<ParamGroup>> trainable_override;
};

struct EvalPoint {
  int step = 0;
  double mrr10 = 0, ndcg10 = 0, recall100 = 0;
};

struct TrainResult {
  int steps = 0;
  int best_step = -1;
  double best_metric = -1;
  std::vector<EvalPoint> evals;
};

// Encodes the corpus and queries and produces a validated run.
template <typename S>
RunFile retrieve_run(const Model<S>& model, const std::vector<Query>& queries,
                     const Corpus& corpus, const EncodeOptions& doc_opts, int k,
                     const std::string& tag) {
  std::vector<std::pair<std::string, Eigen::VectorXd>> embs;
  embs.reserve(corpus.docs.size());
  for (const auto& d : corpus.docs) embs.emplace_back(d.id, model.embed(d, doc_opts));
  FlatIndex index = FlatIndex::build(std::move(embs));
  std::vector<std::pair<std::string, std::vector<SearchHit>>> results;
  results.reserve(queries.size());
  for (const auto& q : queries) results.emplace_back(q.id, index.search(model.embed(q), k));
  return make_run(results, tag);
}

struct MinedNegative {
  std::string qid;
  std::string docid;
  Modality modality = Modality::Text;
  bool fallback = false;  // partition was empty; drawn corpus-wide instead
};

// Hard negatives from the current model's top-k retrieval: judged-relevant
// documents are dropped, the remainder partitioned by modality, and the
// requested count sampled per partition with the seeded generator. An empty
// partition falls back to a corpus-wide draw of that modality.
template <typename S>
std::vector<MinedNegative> mine_hard_negatives(const Model<S>& model,
                                               const std::vector<Query>& queries,
                                               const Corpus& corpus, const Qrels& qrels,
                                               int top_k, int per_image, int per_text,
                                               uint64_t seed, const EncodeOptions& doc_opts) {
  if (top_k < 1) throw ContractError("mine_hard_negatives: top_k must be >= 1");
  std::vector<std::pair<std::string, Eigen::VectorXd>> embs;
  for (const auto& d : corpus.docs) embs.emplace_back(d.id, model.embed(d, doc_opts));
  FlatIndex index = FlatIndex::build(std::move(embs));

  Rng rng(seed);
  std::vector<MinedNegative> out;
  for (const auto& q : queries) {
    std::set<std::string> relevant;
    if (auto it = qrels.find(q.id); it != qrels.end())
      for (const auto& [docid, rel] : it->second)
        if (rel > 0) relevant.insert(docid);

    std::vector<SearchHit> hits = index.search(model.embed(q), top_k);
    std::map<Modality, std::vector<std::string>> pool;
    for (const auto& h : hits) {
      if (relevant.count(h.doc_id)) continue;
      pool[corpus.at(h.doc_id).modality].push_back(h.doc_id);
    }

    for (auto [mod, want] : {std::pair{Modality::Image, per_image}, {Modality::Text, per_text}}) {
      if (want <= 0) continue;
      const std::vector<std::string>& cand = pool[mod];
      int from_pool = std::min<int>(want, static_cast<int>(cand.size()));
      for (int i : rng.sample_without_replacement(static_cast<int>(cand.size()), from_pool))
        out.push_back({q.id, cand[i], mod, false});
      if (from_pool < want) {
        std::set<std::string> have;
        for (size_t j = out.size() - from_pool; j < out.size(); ++j) have.insert(out[j].docid);
        std::vector<std::string> wide;
        for (const auto& d : corpus.docs)
          if (d.modality == mod && !relevant.count(d.id) && !have.count(d.id))
            wide.push_back(d.id);
        if (wide.empty() && from_pool == 0)
          throw DataError("mine_hard_negatives: corpus has no usable " +
                          std::string(modality_name(mod)) + " documents for query " + q.id);
        int take = std::min<int>(want - from_pool, static_cast<int>(wide.size()));
        for (int i : rng.sample_without_replacement(static_cast<int>(wide.size()), take))
          out.push_back({q.id, wide[i], mod, true});
      }
    }
  }
  return out;
}

namespace detail {

template <typename S>
std::vector<MatX<S>> snapshot_values(const ParamStore<S>& ps) {
  std::vector<MatX<S>> vals;
  vals.reserve(ps.entries().size());
  for (const auto& e : ps.entries()) vals.push_back(e.value);
  return vals;
}

template <typename S>
void restore_values(ParamStore<S>& ps, const std::vector<MatX<S>>& vals) {
  for (size_t i = 0; i < vals.size(); ++i) ps.entries()[i].value = vals[i];
}

inline void log_eval(std::ostream* log, const EvalPoint& p) {
  if (!log) return;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.6f\t%.6f\n", p.step, p.mrr10, p.ndcg10,
                p.recall100);
  (*log) << buf;
}

// Shared early-stopping state: strictly-better dev MRR@10 resets patience.
template <typename S>
struct BestTracker {
  double best = -1;
  int best_step = -1;
  int since = 0;
  std::vector<MatX<S>> snapshot;

  // Returns true when training should stop.
  bool observe(ParamStore<S>& ps, const EvalPoint& p, int patience) {
    if (p.mrr10 > best) {
      best = p.mrr10;
      best_step = p.step;
      since = 0;
      snapshot = snapshot_values(ps);
    } else {
      ++since;
    }
    return since >= patience;
  }
};

}  // namespace detail

// Finetuning loop for both stages. `mined` maps qid -> hard negative doc ids
// (empty map for the in-batch DPR stage). The model is left holding the best
// checkpoint seen on the dev metric (or the final parameters when no dev
// evaluation ran).
template <typename S>
TrainResult train_finetune(Model<S>& model, const std::vector<Query>& train_queries,
                           const Corpus& corpus, const Qrels& qrels,
                           const std::vector<Query>& dev_queries, const Qrels& dev_qrels,
                           const std::map<std::string, std::vector<std::string>>& mined,
                           const TrainConfig& cfg, std::ostream* metrics_log = nullptr) {
  if (cfg.phase != "finetune") throw ContractError("train_finetune: phase mismatch");
  if (cfg.stage != "dpr" && cfg.stage != "ance")
    throw DataError("train_finetune: unknown stage " + cfg.stage);
  if (cfg.stage == "ance" && mined.empty())
    throw DataError("train_finetune: ance stage needs mined negatives");
  model.params().set_trainable(cfg.trainable_override ? *cfg.trainable_override
                                                      : trainable_for_phase("finetune"));

  // Positive document per query: lowest relevant doc id present in the corpus.
  std::map<std::string, const Document*> positive;
  for (const auto& q : train_queries) {
    auto it = qrels.find(q.id);
    if (it == qrels.end()) throw DataError("train: query " + q.id + " has no qrels");
    const Document* pos = nullptr;
    for (const auto& [docid, rel] : it->second) {
      if (rel > 0 && corpus.has(docid)) {
        pos = &corpus.at(docid);
        break;
      }
    }
    if (!pos) throw DataError("train: query " + q.id + " has no relevant document in corpus");
    positive[q.id] = pos;
  }

  AdamW<S> opt(cfg.opt);
  Rng rng(cfg.seed);
  TrainResult res;
  detail::BestTracker<S> tracker;
  bool stop = false;

  std::vector<int> order(train_queries.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  while (!stop && res.steps < cfg.max_steps) {
    rng.shuffle(order);
    for (size_t at = 0; at < order.size() && !stop; at += cfg.batch_size) {
      size_t end = std::min(order.size(), at + cfg.batch_size);
      std::vector<TrainExample> batch;
      for (size_t i = at; i < end; ++i) {
        const Query& q = train_queries[order[i]];
        TrainExample ex;
        ex.query = &q;
        ex.positive = positive.at(q.id);
        if (cfg.stage == "ance") {
          auto it = mined.find(q.id);
          if (it == mined.end())
            throw DataError("train: no mined negatives for query " + q.id);
          for (const auto& docid : it->second) ex.hard_negatives.push_back(&corpus.at(docid));
        }
        batch.push_back(std::move(ex));
      }
      // In-batch-only batches need at least two queries to produce negatives.
      if (cfg.stage == "dpr" && batch.size() < 2) continue;

      Tape<S> tape;
      TapeBinding<S> bind(tape, model.params(), true);
      LossValue<S> loss = finetune_loss(bind, model, batch, cfg.tau, cfg.in_batch, cfg.doc_opts);
      tape.backward(loss.total);
      bind.harvest_grads();
      opt.step(model.params());
      model.params().zero_grads();
      ++res.steps;

      if (!dev_queries.empty() && cfg.eval_every > 0 && res.steps % cfg.eval_every == 0) {
        RunFile run = retrieve_run(model, dev_queries, corpus, cfg.doc_opts, cfg.eval_k, "dev");
        EvalPoint p;
        p.step = res.steps;
        p.mrr10 = mrr_at_k(run, dev_qrels, 10).mean;
        p.ndcg10 = ndcg_at_k(run, dev_qrels, 10).mean;
        p.recall100 = recall_at_k(run, dev_qrels, 100).mean;
        res.evals.push_back(p);
        detail::log_eval(metrics_log, p);
        stop = tracker.observe(model.params(), p, cfg.early_stop);
      }
      if (res.steps >= cfg.max_steps) break;
    }
  }

  if (tracker.best_step >= 0) {
    detail::restore_values(model.params(), tracker.snapshot);
    res.best_step = tracker.best_step;
    res.best_metric = tracker.best;
  }
  return res;
}

// Visual-module adaption pretraining over image-caption pairs. The dev
// metric is image->caption MRR@10 within the dev pair pool.
template <typename S>
TrainResult train_pretrain(Model<S>& model, const std::vector<PretrainPair>& pairs,
                           const std::vector<PretrainPair>& dev_pairs, const TrainConfig& cfg,
                           std::ostream* metrics_log = nullptr) {
  if (cfg.phase != "pretrain") throw ContractError("train_pretrain: phase mismatch");
  if (pairs.size() < 2) throw DataError("train_pretrain: need at least 2 pairs");
  model.params().set_trainable(cfg.trainable_override ? *cfg.trainable_override
                                                      : trainable_for_phase("pretrain"));

  auto eval_dev = [&](int step) {
    EvalPoint p;
    p.step = step;
    std::vector<std::pair<std::string, Eigen::VectorXd>> caps;
    Qrels dev_qrels;
    EncodeOptions caption_side;
    caption_side.fusion = FusionMode::TextOnly;
    EncodeOptions image_side;
    image_side.fusion = FusionMode::Plugin;
    image_side.drop_caption = true;
    std::vector<std::pair<std::string, std::vector<SearchHit>>> results;
    for (const auto& pr : dev_pairs) {
      Document d;
      d.id = pr.id;
      d.modality = Modality::Image;
      d.text = pr.caption;
      d.image = pr.image;
      caps.emplace_back(pr.id, model.embed(d, caption_side));
      dev_qrels[pr.id][pr.id] = 1;
    }
    FlatIndex index = FlatIndex::build(std::move(caps));
    for (const auto& pr : dev_pairs) {
      Document d;
      d.id = pr.id;
      d.modality = Modality::Image;
      d.text = pr.caption;
      d.image = pr.image;
      results.emplace_back(pr.id, index.search(model.embed(d, image_side), cfg.eval_k));
    }
    RunFile run = make_run(results, "pretrain_dev");
    p.mrr10 = mrr_at_k(run, dev_qrels, 10).mean;
    p.ndcg10 = ndcg_at_k(run, dev_qrels, 10).mean;
    p.recall100 = recall_at_k(run, dev_qrels, 100).mean;
    return p;
  };

  AdamW<S> opt(cfg.opt);
  Rng rng(cfg.seed);
  TrainResult res;
  detail::BestTracker<S> tracker;
  bool stop = false;

  std::vector<int> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  while (!stop && res.steps < cfg.max_steps) {
    rng.shuffle(order);
    for (size_t at = 0; at < order.size() && !stop; at += cfg.batch_size) {
      size_t end = std::min(order.size(), at + cfg.batch_size);
      if (end - at < 2) continue;  // a single pair has no in-batch negatives
      std::vector<const PretrainPair*> batch;
      for (size_t i = at; i < end; ++i) batch.push_back(&pairs[order[i]]);

      Tape<S> tape;
      TapeBinding<S> bind(tape, model.params(), true);
      LossValue<S> loss = pretrain_loss(bind, model, batch, cfg.tau);
      tape.backward(loss.total);
      bind.harvest_grads();
      opt.step(model.params());
      model.params().zero_grads();
      ++res.steps;

      if (!dev_pairs.empty() && cfg.eval_every > 0 && res.steps % cfg.eval_every == 0) {
        EvalPoint p = eval_dev(res.steps);
        res.evals.push_back(p);
        detail::log_eval(metrics_log, p);
        stop = tracker.observe(model.params(), p, cfg.early_stop);
      }
      if (res.steps >= cfg.max_steps) break;
    }
  }

  if (tracker.best_step >= 0) {
    detail::restore_values(model.params(), tracker.snapshot);
    res.best_step = tracker.best_step;
    res.best_metric = tracker.best;
  }
  return res;
}

}  // namespace marvel
