#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "marvel/data.hpp"
#include "marvel/runfile.hpp"

namespace marvel {

struct MetricReport {
  std::string metric;
  std::vector<std::pair<std::string, double>> per_query;  // sorted by qid
  double mean = 0.0;
  int n = 0;
  std::vector<std::string> warnings;
};

// Binary-gain ranking metrics. Queries absent from the qrels, or with no
// judged-relevant document, are excluded with a warning rather than scored 0.
MetricReport mrr_at_k(const RunFile& run, const Qrels& qrels, int k = 10);
MetricReport ndcg_at_k(const RunFile& run, const Qrels& qrels, int k = 10);
MetricReport recall_at_k(const RunFile& run, const Qrels& qrels, int k = 100);

// Two-sided paired sign-flip permutation test on the mean difference.
// p = (#{|perm diff| >= |observed|} + 1) / (iterations + 1).
double permutation_test(const std::vector<double>& a, const std::vector<double>& b,
                        int iterations = 10000, uint64_t seed = 42);

// Pairs two reports over their common queries, in qid order.
std::pair<std::vector<double>, std::vector<double>> paired_values(const MetricReport& a,
                                                                  const MetricReport& b);

}  // namespace marvel
