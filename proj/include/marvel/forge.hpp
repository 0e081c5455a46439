#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "marvel/data.hpp"
#include "marvel/index.hpp"

namespace marvel {

// ---- HTML mining -----------------------------------------------------------

struct AnchorPair {
  std::string text;    // anchor text, inline markup stripped, whitespace collapsed
  std::string target;  // href value (the linked page id)
};

struct ImageCandidate {
  std::string id;  // assigned by the pipeline, "<page>#img<n>"
  std::string url;
  std::string alt;
  bool has_alt = false;
  std::string page;
};

struct HtmlExtract {
  std::vector<AnchorPair> anchors;
  std::vector<ImageCandidate> images;  // ids/pages unset at this level
  std::string text;                    // tag-stripped page text
  int malformed = 0;                   // skipped malformed regions
};

// Tolerant single-pass extraction; unclosed tags and stray markup are
// skipped and counted, never fatal.
HtmlExtract parse_html(const std::string& html);

std::vector<AnchorPair> extract_anchors(const std::string& html);
std::vector<ImageCandidate> extract_images(const std::string& html);

struct HtmlPage {
  std::string id;
  std::string html;
};

// A directory of .html files (page id = file stem, sorted) or a single
// concatenated file with `#PAGE <id>` separator lines.
std::vector<HtmlPage> load_html_pages(const std::string& path);

// ---- Filter chain ----------------------------------------------------------

enum class AltUnit { Chars, Words };

struct FilterDecision {
  std::string candidate_id;
  bool keep = false;
  std::string rule;  // first failing rule, "-" for keeps

  bool operator==(const FilterDecision&) const = default;
};

// Rule order: extension (jpg/png/jpeg, before any query string), url keyword
// blocklist (logo/button/icon/plugin/widget), then the alt-text rules
// (empty-alt, no-alt-attribute, alt-too-short with length >= min_alt).
std::vector<FilterDecision> filter_images(const std::vector<ImageCandidate>& candidates,
                                          AltUnit unit = AltUnit::Chars, int min_alt = 5);

std::vector<ImageCandidate> kept_images(const std::vector<ImageCandidate>& candidates,
                                        const std::vector<FilterDecision>& decisions);

void save_filter_audit(const std::vector<FilterDecision>& decisions, const std::string& path);

// ---- Alignment and relevance filters ---------------------------------------

struct AlignmentDecision {
  std::string id;
  double score = 0;
  bool kept = false;
};

// Keep iff score >= threshold; a score outside [-1, 1] is a data error.
std::vector<AlignmentDecision> filter_by_alignment(
    const std::vector<std::string>& ids, const std::function<double(const std::string&)>& scorer,
    double threshold = 0.3);

struct RelevanceDecision {
  std::string qid;
  int rank = 0;  // 1-based rank of the paired document in the query's retrieval
  bool kept = false;
};

// Keep a query iff its paired document ranks within `cutoff` when the query
// is run against the supplied document embeddings.
std::vector<RelevanceDecision> relevance_filter(
    const std::vector<Query>& queries, const std::map<std::string, std::string>& paired_doc,
    const std::vector<std::pair<std::string, Eigen::VectorXd>>& doc_embeddings,
    const std::function<Eigen::VectorXd(const std::string&)>& embed_query, int cutoff = 10);

// ---- Splits ----------------------------------------------------------------

struct SplitResult {
  std::vector<Query> train, dev, test;
};

// Seeded sampling without replacement; remainder becomes train, original
// order preserved within each split.
SplitResult split_queries(const std::vector<Query>& all, int dev_n, int test_n, uint64_t seed);

// ---- Synthetic corpus ------------------------------------------------------

struct SyntheticConfig {
  uint64_t seed = 42;
  int n_queries = 64;
  int n_text_docs = 128;
  int n_image_docs = 128;
  int vocab_size = 4000;  // topic word pool
  int image_h = 28, image_w = 28, channels = 1;
  int queries_per_topic = 2;
  int words_per_topic = 10;
};

struct SyntheticData {
  Corpus corpus;  // images in memory, image_path unset
  std::vector<Query> queries;
  Qrels qrels;
  std::vector<PretrainPair> pairs;  // one per image document
};

// Topic-structured corpus: each query shares vocabulary with exactly one
// answer document, answer modalities alternate so half the queries have
// image answers, and image pixels are a per-topic pattern plus noise.
SyntheticData gen_synthetic(const SyntheticConfig& cfg);

// Writes corpus/queries/qrels/pairs plus .imgf pixel files under dir.
void save_synthetic(const SyntheticData& data, const std::string& dir);

}  // namespace marvel
