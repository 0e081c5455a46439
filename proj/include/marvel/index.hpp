#pragma once

#include <string>
#include <vector>

#include "marvel/common.hpp"

namespace marvel {

struct SearchHit {
  std::string doc_id;
  double score;
};

// Exact flat cosine KNN index. Embeddings are L2-normalized at insertion so
// search is a dot product; rows are stored in ascending doc-id order, which
// makes the deterministic tie-break (ascending id) a stable index compare.
class FlatIndex {
 public:
  static FlatIndex build(std::vector<std::pair<std::string, Eigen::VectorXd>> embeddings);

  // Exact top-k by cosine; k > size() returns size() hits.
  std::vector<SearchHit> search(const Eigen::VectorXd& query, int k) const;

  int size() const { return static_cast<int>(ids_.size()); }
  int dim() const { return static_cast<int>(matrix_.cols()); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }

  void save(const std::string& path) const;
  static FlatIndex load(const std::string& path);

 private:
  std::vector<std::string> ids_;  // ascending
  Eigen::MatrixXd matrix_;        // N x d, unit rows
};

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Embeddings file: "EMBF", u32 count, u32 dim, then per item
// {id_len u32, id bytes, f32 x dim}.
void write_embeddings(const std::vector<std::pair<std::string, Eigen::VectorXd>>& items,
                      const std::string& path);
std::vector<std::pair<std::string, Eigen::VectorXd>> read_embeddings(const std::string& path);

}  // namespace marvel
