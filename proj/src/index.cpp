#include "marvel/index.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

namespace marvel {

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double na = a.norm(), nb = b.norm();
  if (!(na > 0) || !(nb > 0)) throw NumericError("cosine: zero-norm input");
  return a.dot(b) / (na * nb);
}

FlatIndex FlatIndex::build(std::vector<std::pair<std::string, Eigen::VectorXd>> embeddings) {
  if (embeddings.empty()) throw DataError("build_index: no embeddings");
  std::sort(embeddings.begin(), embeddings.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Eigen::Index d = embeddings[0].second.size();
  FlatIndex idx;
  idx.ids_.reserve(embeddings.size());
  idx.matrix_.resize(static_cast<Eigen::Index>(embeddings.size()), d);
  for (size_t i = 0; i < embeddings.size(); ++i) {
    const auto& [id, v] = embeddings[i];
    if (i > 0 && id == embeddings[i - 1].first)
      throw DataError("build_index: duplicate doc id: " + id);
    if (v.size() != d) throw ShapeError("build_index: dimension mismatch for " + id);
    double n = v.norm();
    if (!(n > 0)) throw DataError("build_index: zero-norm embedding for doc " + id);
    idx.matrix_.row(static_cast<Eigen::Index>(i)) = (v / n).transpose();
    idx.ids_.push_back(id);
  }
  return idx;
}

std::vector<SearchHit> FlatIndex::search(const Eigen::VectorXd& query, int k) const {
  if (k < 1) throw ContractError("search: k must be >= 1");
  if (query.size() != matrix_.cols()) throw ShapeError("search: query dimension mismatch");
  double n = query.norm();
  if (!(n > 0)) throw NumericError("search: zero-norm query");
  Eigen::VectorXd scores = matrix_ * (query / n);

  std::vector<int> order(ids_.size());
  std::iota(order.begin(), order.end(), 0);
  int kk = std::min<int>(k, static_cast<int>(ids_.size()));
  auto cmp = [&](int a, int b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;  // ids_ ascending, so index order is id order
  };
  std::partial_sort(order.begin(), order.begin() + kk, order.end(), cmp);

  std::vector<SearchHit> hits;
  hits.reserve(kk);
  for (int i = 0; i < kk; ++i) hits.push_back({ids_[order[i]], scores(order[i])});
  return hits;
}

namespace {
void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
uint32_t read_u32(std::ifstream& f, const std::string& path) {
  uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  if (!f) throw ParseError("truncated file: " + path);
  return v;
}
}  // namespace

void FlatIndex::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open index for writing: " + path);
  f.write("MIDX", 4);
  write_u32(f, static_cast<uint32_t>(ids_.size()));
  write_u32(f, static_cast<uint32_t>(matrix_.cols()));
  for (size_t i = 0; i < ids_.size(); ++i) {
    write_u32(f, static_cast<uint32_t>(ids_[i].size()));
    f.write(ids_[i].data(), static_cast<std::streamsize>(ids_[i].size()));
    for (Eigen::Index j = 0; j < matrix_.cols(); ++j) {
      double v = matrix_(static_cast<Eigen::Index>(i), j);
      f.write(reinterpret_cast<const char*>(&v), 8);
    }
  }
  if (!f) throw DataError("index write failed: " + path);
}

FlatIndex FlatIndex::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open index: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "MIDX", 4) != 0) throw ParseError("bad index magic: " + path);
  uint32_t n = read_u32(f, path);
  uint32_t d = read_u32(f, path);
  FlatIndex idx;
  idx.ids_.reserve(n);
  idx.matrix_.resize(n, d);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t len = read_u32(f, path);
    std::string id(len, '\0');
    f.read(id.data(), len);
    for (uint32_t j = 0; j < d; ++j) {
      double v;
      f.read(reinterpret_cast<char*>(&v), 8);
      idx.matrix_(i, j) = v;
    }
    if (!f) throw ParseError("truncated index: " + path);
    idx.ids_.push_back(std::move(id));
  }
  return idx;
}

void write_embeddings(const std::vector<std::pair<std::string, Eigen::VectorXd>>& items,
                      const std::string& path) {
  if (items.empty()) throw DataError("write_embeddings: nothing to write");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open embeddings for writing: " + path);
  f.write("EMBF", 4);
  write_u32(f, static_cast<uint32_t>(items.size()));
  write_u32(f, static_cast<uint32_t>(items[0].second.size()));
  for (const auto& [id, v] : items) {
    if (v.size() != items[0].second.size())
      throw ShapeError("write_embeddings: dimension mismatch for " + id);
    write_u32(f, static_cast<uint32_t>(id.size()));
    f.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      float x = static_cast<float>(v(j));
      f.write(reinterpret_cast<const char*>(&x), 4);
    }
  }
  if (!f) throw DataError("embeddings write failed: " + path);
}

std::vector<std::pair<std::string, Eigen::VectorXd>> read_embeddings(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open embeddings: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "EMBF", 4) != 0) throw ParseError("bad embeddings magic: " + path);
  uint32_t n = read_u32(f, path);
  uint32_t d = read_u32(f, path);
  std::vector<std::pair<std::string, Eigen::VectorXd>> out;
  out.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t len = read_u32(f, path);
    std::string id(len, '\0');
    f.read(id.data(), len);
    Eigen::VectorXd v(d);
    for (uint32_t j = 0; j < d; ++j) {
      float x;
      f.read(reinterpret_cast<char*>(&x), 4);
      v(j) = x;
    }
    if (!f) throw ParseError("truncated embeddings: " + path);
    out.emplace_back(std::move(id), std::move(v));
  }
  return out;
}

}  // namespace marvel
