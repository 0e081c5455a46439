#include "marvel/runfile.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace marvel {

namespace {

// Rounds through the on-disk 6-decimal representation so that the value a
// reader parses back is bit-identical to the one we keep in memory.
double round6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return std::strtod(buf, nullptr);
}

}  // namespace

RunFile make_run(const std::vector<std::pair<std::string, std::vector<SearchHit>>>& results,
                 const std::string& tag) {
  RunFile run;
  std::set<std::string> seen;
  for (const auto& [qid, hits] : results) {
    if (!seen.insert(qid).second) throw ContractError("make_run: repeated query id " + qid);
    std::vector<SearchHit> rounded = hits;
    for (auto& h : rounded) h.score = round6(h.score);
    std::stable_sort(rounded.begin(), rounded.end(), [](const SearchHit& a, const SearchHit& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.doc_id < b.doc_id;
    });
    int rank = 1;
    for (const auto& h : rounded) run.records.push_back({qid, h.doc_id, rank++, h.score, tag});
  }
  validate_run(run);
  return run;
}

void validate_run(const RunFile& run) {
  std::set<std::string> closed;
  const std::string* cur = nullptr;
  int prev_rank = 0;
  double prev_score = 0;
  const std::string* prev_doc = nullptr;
  for (const auto& r : run.records) {
    if (!cur || *cur != r.qid) {
      if (cur) closed.insert(*cur);
      if (closed.count(r.qid)) throw ContractError("run: query " + r.qid + " is not contiguous");
      cur = &r.qid;
      prev_rank = 0;
      prev_doc = nullptr;
    }
    if (r.rank != prev_rank + 1)
      throw ContractError("run: ranks for " + r.qid + " are not contiguous from 1");
    if (prev_rank > 0) {
      if (r.score > prev_score)
        throw ContractError("run: scores increase within query " + r.qid);
      if (r.score == prev_score && prev_doc && !(*prev_doc < r.docid))
        throw ContractError("run: tie not broken by ascending doc id in query " + r.qid);
    }
    prev_rank = r.rank;
    prev_score = r.score;
    prev_doc = &r.docid;
  }
}

void write_run(const RunFile& run, const std::string& path) {
  validate_run(run);
  std::ofstream f(path);
  if (!f) throw DataError("cannot open run for writing: " + path);
  f << "# qid Q0 docid rank score tag\n";
  char buf[64];
  for (const auto& r : run.records) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.score);
    f << r.qid << " Q0 " << r.docid << ' ' << r.rank << ' ' << buf << ' ' << r.tag << "\n";
  }
  if (!f) throw DataError("run write failed: " + path);
}

RunFile read_run(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open run: " + path);
  RunFile run;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    RunRecord r;
    std::string q0, score_str;
    if (!(is >> r.qid >> q0 >> r.docid >> r.rank >> score_str >> r.tag) || q0 != "Q0")
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected 'qid Q0 docid rank score tag'");
    try {
      size_t used = 0;
      r.score = std::stod(score_str, &used);
      if (used != score_str.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad score '" + score_str + "'");
    }
    run.records.push_back(std::move(r));
  }
  validate_run(run);
  return run;
}

}  // namespace marvel
