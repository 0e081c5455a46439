#include "marvel/data.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace marvel {

namespace fs = std::filesystem;

const Document& Corpus::at(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw DataError("no such document: " + id);
  return docs[it->second];
}

void Corpus::add(Document doc) {
  if (by_id.count(doc.id)) throw DataError("duplicate document id: " + doc.id);
  by_id[doc.id] = static_cast<int>(docs.size());
  docs.push_back(std::move(doc));
}

std::string sanitize_field(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  return out;
}

namespace {

std::vector<std::string> split_tsv(const std::string& line, size_t max_fields) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (fields.size() + 1 < max_fields) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) break;
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  fields.push_back(line.substr(start));
  return fields;
}

std::string resolve(const std::string& base_file, const std::string& rel) {
  fs::path p(rel);
  if (p.is_absolute()) return rel;
  return (fs::path(base_file).parent_path() / p).string();
}

}  // namespace

Corpus load_corpus(const std::string& path, bool load_images) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open corpus: " + path);
  Corpus corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tsv(line, 4);
    if (fields.size() < 3)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 3-4 tab fields");
    Document d;
    d.id = fields[0];
    d.modality = modality_from_name(fields[1]);
    d.text = fields[2];
    d.image_path = fields.size() > 3 ? fields[3] : "";
    if (d.modality == Modality::Image) {
      if (d.image_path.empty())
        throw DataError(path + ":" + std::to_string(lineno) + ": image document without image_path");
      if (load_images) d.image = read_imgf(resolve(path, d.image_path));
    } else if (!d.image_path.empty()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": text document with image_path");
    }
    corpus.add(std::move(d));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open corpus for writing: " + path);
  for (const auto& d : corpus.docs) {
    f << d.id << '\t' << modality_name(d.modality) << '\t' << sanitize_field(d.text) << '\t'
      << d.image_path << "\n";
  }
}

std::vector<Query> load_queries(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open queries: " + path);
  std::vector<Query> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tsv(line, 2);
    if (fields.size() != 2)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected id<TAB>text");
    out.push_back({fields[0], fields[1]});
  }
  return out;
}

void save_queries(const std::vector<Query>& queries, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open queries for writing: " + path);
  for (const auto& q : queries) f << q.id << '\t' << sanitize_field(q.text) << "\n";
}

Qrels load_qrels(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open qrels: " + path);
  Qrels qrels;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string qid, zero, docid;
    int rel;
    if (!(is >> qid >> zero >> docid >> rel))
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 'qid 0 docid rel'");
    qrels[qid][docid] = rel;
  }
  return qrels;
}

void save_qrels(const Qrels& qrels, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open qrels for writing: " + path);
  for (const auto& [qid, docs] : qrels)
    for (const auto& [docid, rel] : docs) f << qid << " 0 " << docid << ' ' << rel << "\n";
}

std::vector<PretrainPair> load_pairs(const std::string& path, bool load_images) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open pairs: " + path);
  std::vector<PretrainPair> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tsv(line, 3);
    if (fields.size() != 3)
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected id<TAB>image_path<TAB>caption");
    PretrainPair p;
    p.id = fields[0];
    p.image_path = fields[1];
    p.caption = fields[2];
    if (load_images) p.image = read_imgf(resolve(path, p.image_path));
    out.push_back(std::move(p));
  }
  return out;
}

void save_pairs(const std::vector<PretrainPair>& pairs, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open pairs for writing: " + path);
  for (const auto& p : pairs)
    f << p.id << '\t' << p.image_path << '\t' << sanitize_field(p.caption) << "\n";
}

}  // namespace marvel
