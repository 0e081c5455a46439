#pragma once

#include <string>
#include <vector>

#include "marvel/index.hpp"

namespace marvel {

struct RunRecord {
  std::string qid;
  std::string docid;
  int rank = 0;  // 1-based, contiguous per query
  double score = 0.0;
  std::string tag;

  bool operator==(const RunRecord&) const = default;
};

struct RunFile {
  std::vector<RunRecord> records;

  bool operator==(const RunFile&) const = default;
};

// Builds a run from per-query hits. Scores are rounded to the 6-decimal
// on-disk precision first and hits re-sorted by (score desc, docid asc), so
// the in-memory run round-trips bit-exactly through write_run/read_run.
RunFile make_run(const std::vector<std::pair<std::string, std::vector<SearchHit>>>& results,
                 const std::string& tag);

// Line format: `qid Q0 docid rank score tag`, score with 6 decimals.
void write_run(const RunFile& run, const std::string& path);
RunFile read_run(const std::string& path);

// Checks the run invariants: per query contiguous ranks from 1,
// non-increasing scores, ties broken by ascending doc id.
void validate_run(const RunFile& run);

}  // namespace marvel
