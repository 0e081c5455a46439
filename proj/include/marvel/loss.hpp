#pragma once

#include <set>
#include <string>
#include <vector>

#include "marvel/encoder.hpp"

namespace marvel {

// Scalar loss node plus reporting-only components (plain doubles).
template <typename S>
struct LossValue {
  Var<S> total;
  double l_ic = 0;             // image->caption direction (pretraining)
  double l_ci = 0;             // caption->image direction (pretraining)
  double align = 0;            // mean f(q, d+)/tau (finetuning)
  double image_neg_mass = 0;   // mean sum of exp(f(q, d-)/tau) over image negatives
  double text_neg_mass = 0;    // same over text negatives
};

// -log softmax cross-entropy with the positive at index 0. Inputs are scalar
// score nodes already scaled by 1/tau.
template <typename S>
Var<S> contrastive_ce(const std::vector<Var<S>>& scores) {
  if (scores.empty()) throw ContractError("contrastive_ce: no candidates");
  Var<S> lse = logsumexp_rows(transpose(stack_scalars(scores)));
  return sub(lse, scores[0]);
}

// Dual-direction contrastive losses over a square score matrix f[i][j]
// (scaled by 1/tau): rows treat item i as the query over all j, columns the
// reverse; the diagonal holds the aligned pairs.
template <typename S>
std::pair<Var<S>, Var<S>> dual_contrastive(const std::vector<std::vector<Var<S>>>& f) {
  const int n = static_cast<int>(f.size());
  std::vector<Var<S>> ic_terms, ci_terms;
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(f[i].size()) != n) throw ShapeError("dual_contrastive: ragged scores");
    ic_terms.push_back(sub(logsumexp_rows(transpose(stack_scalars(f[i]))), f[i][i]));
    std::vector<Var<S>> col;
    col.reserve(n);
    for (int j = 0; j < n; ++j) col.push_back(f[j][i]);
    ci_terms.push_back(sub(logsumexp_rows(transpose(stack_scalars(col))), f[i][i]));
  }
  return {mean(stack_scalars(ic_terms)), mean(stack_scalars(ci_terms))};
}

// Image-caption contrastive pretraining loss, both directions, in-batch
// negatives. The image side is encoded as prompts+features only and the
// caption side as text only, so neither side leaks the other.
template <typename S>
LossValue<S> pretrain_loss(TapeBinding<S>& bind, const Model<S>& model,
                           const std::vector<const PretrainPair*>& batch, double tau) {
  if (batch.empty()) throw ContractError("pretrain_loss: empty batch");
  if (!(tau > 0)) throw ContractError("pretrain_loss: tau must be > 0");
  std::set<std::string> ids;
  for (const auto* p : batch)
    if (!ids.insert(p->id).second)
      throw ContractError("pretrain_loss: duplicate pair id " + p->id + " degenerates negatives");

  const int n = static_cast<int>(batch.size());
  std::vector<Var<S>> image_emb, caption_emb;
  image_emb.reserve(n);
  caption_emb.reserve(n);
  for (const auto* p : batch) {
    if (!p->image) throw DataError("pretrain_loss: pair " + p->id + " has no image");
    Document img_doc;
    img_doc.id = p->id;
    img_doc.modality = Modality::Image;
    img_doc.text = p->caption;
    img_doc.image = p->image;
    EncodeOptions image_side;
    image_side.fusion = FusionMode::Plugin;
    image_side.drop_caption = true;
    image_emb.push_back(model.encode(bind, model.assemble(img_doc, image_side)).embedding);
    EncodeOptions caption_side;
    caption_side.fusion = FusionMode::TextOnly;
    caption_emb.push_back(model.encode(bind, model.assemble(img_doc, caption_side)).embedding);
  }

  // All pairwise scores, f[i][j] = cos(image_i, caption_j) / tau.
  S inv_tau = static_cast<S>(1.0 / tau);
  std::vector<std::vector<Var<S>>> f(n, std::vector<Var<S>>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      f[i][j] = scale(cosine_sim(image_emb[i], caption_emb[j]), inv_tau);

  auto [l_ic, l_ci] = dual_contrastive(f);

  LossValue<S> out;
  out.total = add(l_ic, l_ci);
  out.l_ic = static_cast<double>(l_ic.scalar());
  out.l_ci = static_cast<double>(l_ci.scalar());
  if (!std::isfinite(static_cast<double>(out.total.scalar())))
    throw NumericError("pretrain_loss: non-finite loss");
  return out;
}

// One query's training candidates.
struct TrainExample {
  const Query* query = nullptr;
  const Document* positive = nullptr;
  std::vector<const Document*> hard_negatives;
};

// Modality-balanced hard-negative cross-entropy (softmax over the positive
// and all candidate negatives, scores scaled by 1/tau). With in_batch on,
// other queries' positives and hard negatives join the candidate set.
template <typename S>
LossValue<S> finetune_loss(TapeBinding<S>& bind, const Model<S>& model,
                           const std::vector<TrainExample>& batch, double tau, bool in_batch,
                           const EncodeOptions& doc_opts) {
  if (batch.empty()) throw ContractError("finetune_loss: empty batch");
  if (!(tau > 0)) throw ContractError("finetune_loss: tau must be > 0");
  for (const auto& ex : batch)
    for (const auto* d : ex.hard_negatives)
      if (d->id == ex.positive->id)
        throw ContractError("finetune_loss: positive " + d->id + " appears in its own negatives");

  // Encode each distinct document once per step.
  std::map<std::string, Var<S>> doc_emb;
  std::map<std::string, Modality> doc_mod;
  auto encode_doc = [&](const Document* d) {
    if (doc_emb.count(d->id)) return;
    doc_emb.emplace(d->id, model.encode(bind, model.assemble(*d, doc_opts)).embedding);
    doc_mod.emplace(d->id, d->modality);
  };
  std::vector<Var<S>> query_emb;
  for (const auto& ex : batch) {
    query_emb.push_back(model.encode(bind, model.assemble(*ex.query)).embedding);
    encode_doc(ex.positive);
    for (const auto* d : ex.hard_negatives) encode_doc(d);
  }

  S inv_tau = static_cast<S>(1.0 / tau);
  std::vector<Var<S>> per_query_loss;
  LossValue<S> out;
  for (size_t qi = 0; qi < batch.size(); ++qi) {
    const auto& ex = batch[qi];
    // Candidates: own positive first, then negatives, deduplicated by id.
    std::vector<const std::string*> neg_ids;
    std::set<std::string> used = {ex.positive->id};
    auto add_neg = [&](const Document* d) {
      if (used.insert(d->id).second) neg_ids.push_back(&d->id);
    };
    for (const auto* d : ex.hard_negatives) add_neg(d);
    if (in_batch) {
      for (size_t qj = 0; qj < batch.size(); ++qj) {
        if (qj == qi) continue;
        add_neg(batch[qj].positive);
        for (const auto* d : batch[qj].hard_negatives) add_neg(d);
      }
    }

    Var<S> pos_score = scale(cosine_sim(query_emb[qi], doc_emb.at(ex.positive->id)), inv_tau);
    std::vector<Var<S>> scores = {pos_score};
    for (const auto* id : neg_ids)
      scores.push_back(scale(cosine_sim(query_emb[qi], doc_emb.at(*id)), inv_tau));
    per_query_loss.push_back(contrastive_ce(scores));

    out.align += static_cast<double>(pos_score.scalar()) / static_cast<double>(batch.size());
    for (size_t ni = 0; ni < neg_ids.size(); ++ni) {
      double mass = std::exp(static_cast<double>(scores[ni + 1].scalar()));
      if (doc_mod.at(*neg_ids[ni]) == Modality::Image)
        out.image_neg_mass += mass / static_cast<double>(batch.size());
      else
        out.text_neg_mass += mass / static_cast<double>(batch.size());
    }
  }
  out.total = mean(stack_scalars(per_query_loss));
  if (!std::isfinite(static_cast<double>(out.total.scalar())))
    throw NumericError("finetune_loss: non-finite loss");
  return out;
}

}  // namespace marvel
