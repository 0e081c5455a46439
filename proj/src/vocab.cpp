#include "marvel/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace marvel {

namespace {
const char* kSpecialNames[Vocab::kNumSpecials] = {"<pad>", "<unk>", "<dec>", "<img_start>",
                                                  "<img_end>"};
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kNumSpecials) throw DataError("vocab: missing special tokens");
  for (int i = 0; i < kNumSpecials; ++i)
    if (tokens_[i] != kSpecialNames[i])
      throw DataError("vocab: special token mismatch at id " + std::to_string(i));
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw DataError("vocab: duplicate token '" + tokens_[i] + "'");
  }
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    bool word_char = std::isalnum(ch) || ch >= 0x80;
    if (word_char) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocab build_vocab(const std::vector<std::string>& texts, int min_count) {
  std::map<std::string, int64_t> counts;
  for (const auto& t : texts)
    for (auto& w : split_words(t)) ++counts[w];
  if (counts.empty()) throw DataError("build_vocab: empty corpus");

  std::vector<std::pair<std::string, int64_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens(kSpecialNames, kSpecialNames + Vocab::kNumSpecials);
  for (auto& [tok, count] : items)
    if (count >= min_count) tokens.push_back(tok);
  return Vocab(std::move(tokens));
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab, int max_len) {
  std::vector<int> ids;
  for (auto& w : split_words(text)) {
    if (static_cast<int>(ids.size()) >= max_len) break;
    ids.push_back(vocab.id_of(w));
  }
  return ids;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open vocab for writing: " + path);
  for (const auto& t : vocab.tokens()) f << t << "\n";
}

Vocab load_vocab(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open vocab: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

}  // namespace marvel
