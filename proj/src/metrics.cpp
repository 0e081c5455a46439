#include "marvel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "marvel/rng.hpp"

namespace marvel {

namespace {

struct RankedQuery {
  std::string qid;
  std::vector<std::string> docs;  // in rank order
};

std::vector<RankedQuery> group_run(const RunFile& run) {
  std::vector<RankedQuery> out;
  for (const auto& r : run.records) {
    if (out.empty() || out.back().qid != r.qid) out.push_back({r.qid, {}});
    out.back().docs.push_back(r.docid);
  }
  return out;
}

std::set<std::string> relevant_docs(const Qrels& qrels, const std::string& qid) {
  std::set<std::string> rel;
  auto it = qrels.find(qid);
  if (it == qrels.end()) return rel;
  for (const auto& [docid, r] : it->second)
    if (r > 0) rel.insert(docid);
  return rel;
}

template <typename PerQuery>
MetricReport compute(const std::string& name, const RunFile& run, const Qrels& qrels,
                     const PerQuery& score_query) {
  MetricReport rep;
  rep.metric = name;
  for (const auto& q : group_run(run)) {
    if (!qrels.count(q.qid)) {
      rep.warnings.push_back("query " + q.qid + " not in qrels; excluded");
      continue;
    }
    std::set<std::string> rel = relevant_docs(qrels, q.qid);
    if (rel.empty()) {
      rep.warnings.push_back("query " + q.qid + " has no relevant documents; excluded");
      continue;
    }
    rep.per_query.emplace_back(q.qid, score_query(q, rel));
  }
  std::sort(rep.per_query.begin(), rep.per_query.end());
  rep.n = static_cast<int>(rep.per_query.size());
  double sum = 0;
  for (auto& [qid, v] : rep.per_query) sum += v;
  rep.mean = rep.n ? sum / rep.n : 0.0;
  return rep;
}

}  // namespace

MetricReport mrr_at_k(const RunFile& run, const Qrels& qrels, int k) {
  return compute("mrr@" + std::to_string(k), run, qrels,
                 [k](const RankedQuery& q, const std::set<std::string>& rel) {
                   int limit = std::min<int>(k, static_cast<int>(q.docs.size()));
                   for (int i = 0; i < limit; ++i)
                     if (rel.count(q.docs[i])) return 1.0 / (i + 1);
                   return 0.0;
                 });
}

MetricReport ndcg_at_k(const RunFile& run, const Qrels& qrels, int k) {
  return compute("ndcg@" + std::to_string(k), run, qrels,
                 [k](const RankedQuery& q, const std::set<std::string>& rel) {
                   int limit = std::min<int>(k, static_cast<int>(q.docs.size()));
                   double dcg = 0;
                   for (int i = 0; i < limit; ++i)
                     if (rel.count(q.docs[i])) dcg += 1.0 / std::log2(i + 2.0);
                   double idcg = 0;
                   int ideal = std::min<int>(k, static_cast<int>(rel.size()));
                   for (int i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(i + 2.0);
                   return dcg / idcg;
                 });
}

MetricReport recall_at_k(const RunFile& run, const Qrels& qrels, int k) {
  return compute("recall@" + std::to_string(k), run, qrels,
                 [k](const RankedQuery& q, const std::set<std::string>& rel) {
                   int limit = std::min<int>(k, static_cast<int>(q.docs.size()));
                   int hit = 0;
                   for (int i = 0; i < limit; ++i)
                     if (rel.count(q.docs[i])) ++hit;
                   return static_cast<double>(hit) / static_cast<double>(rel.size());
                 });
}

double permutation_test(const std::vector<double>& a, const std::vector<double>& b,
                        int iterations, uint64_t seed) {
  if (a.size() != b.size()) throw ContractError("permutation_test: length mismatch");
  if (a.empty()) throw ContractError("permutation_test: empty input");
  size_t n = a.size();
  double observed = 0;
  for (size_t i = 0; i < n; ++i) observed += a[i] - b[i];
  observed = std::fabs(observed / static_cast<double>(n));

  Rng rng(seed);
  int count = 0;
  for (int it = 0; it < iterations; ++it) {
    double s = 0;
    for (size_t i = 0; i < n; ++i) {
      double d = a[i] - b[i];
      s += (rng.next_u64() & 1) ? d : -d;
    }
    if (std::fabs(s / static_cast<double>(n)) >= observed) ++count;
  }
  return static_cast<double>(count + 1) / static_cast<double>(iterations + 1);
}

std::pair<std::vector<double>, std::vector<double>> paired_values(const MetricReport& a,
                                                                  const MetricReport& b) {
  std::map<std::string, double> bv(b.per_query.begin(), b.per_query.end());
  std::vector<double> xs, ys;
  for (const auto& [qid, v] : a.per_query) {
    auto it = bv.find(qid);
    if (it == bv.end()) continue;
    xs.push_back(v);
    ys.push_back(it->second);
  }
  return {xs, ys};
}

}  // namespace marvel
