#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "marvel/image.hpp"

namespace marvel {

enum class Modality { Text, Image };

inline const char* modality_name(Modality m) { return m == Modality::Text ? "text" : "image"; }
inline Modality modality_from_name(const std::string& s) {
  if (s == "text") return Modality::Text;
  if (s == "image") return Modality::Image;
  throw ParseError("unknown modality: " + s);
}

struct Query {
  std::string id;
  std::string text;
};

// A retrievable unit: a text document, or an image document whose `text`
// field is the caption and whose pixels are loaded eagerly from image_path.
struct Document {
  std::string id;
  Modality modality = Modality::Text;
  std::string text;
  std::string image_path;        // empty for text documents
  std::optional<GridImage> image;
};

struct Corpus {
  std::vector<Document> docs;
  std::map<std::string, int> by_id;

  const Document& at(const std::string& id) const;
  bool has(const std::string& id) const { return by_id.count(id) != 0; }
  void add(Document doc);
};

// qid -> docid -> relevance (binary).
using Qrels = std::map<std::string, std::map<std::string, int>>;

// Image-caption pair for visual-module pretraining.
struct PretrainPair {
  std::string id;
  std::string image_path;
  std::string caption;
  std::optional<GridImage> image;
};

// Corpus file: one tab-separated record per line:
//   id <tab> modality <tab> text <tab> image_path
// Image pixels are loaded from image_path resolved against the corpus file's
// directory unless load_images is false.
Corpus load_corpus(const std::string& path, bool load_images = true);
void save_corpus(const Corpus& corpus, const std::string& path);

// Queries file: id <tab> text.
std::vector<Query> load_queries(const std::string& path);
void save_queries(const std::vector<Query>& queries, const std::string& path);

// Qrels file: qid 0 docid rel, whitespace-separated.
Qrels load_qrels(const std::string& path);
void save_qrels(const Qrels& qrels, const std::string& path);

// Pairs file: id <tab> image_path <tab> caption.
std::vector<PretrainPair> load_pairs(const std::string& path, bool load_images = true);
void save_pairs(const std::vector<PretrainPair>& pairs, const std::string& path);

// Tabs and newlines inside text fields become spaces on write.
std::string sanitize_field(const std::string& s);

}  // namespace marvel
