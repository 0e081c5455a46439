#include "marvel/forge.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "marvel/rng.hpp"
#include "marvel/vocab.hpp"

namespace marvel {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string collapse_ws(const std::string& s) {
  std::string out;
  bool in_space = true;  // trims leading space
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(static_cast<char>(c));
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Decodes the handful of entities that matter for anchor/alt text.
size_t decode_entity(const std::string& html, size_t i, std::string& out) {
  static const std::pair<const char*, const char*> table[] = {
      {"&amp;", "&"}, {"&lt;", "<"},    {"&gt;", ">"},
      {"&quot;", "\""}, {"&#39;", "'"}, {"&apos;", "'"}, {"&nbsp;", " "}};
  for (const auto& [ent, rep] : table) {
    size_t len = std::strlen(ent);
    if (html.compare(i, len, ent) == 0) {
      out += rep;
      return i + len;
    }
  }
  out += '&';
  return i + 1;
}

bool tagname_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':';
}

}  // namespace

HtmlExtract parse_html(const std::string& html) {
  HtmlExtract out;
  size_t i = 0;
  const size_t n = html.size();
  bool in_anchor = false;
  std::string anchor_text, anchor_target, page_text;

  auto text_char = [&](char c) {
    page_text += c;
    if (in_anchor) anchor_text += c;
  };
  auto finish_anchor = [&]() {
    std::string t = collapse_ws(anchor_text);
    if (!t.empty()) out.anchors.push_back({t, anchor_target});
    in_anchor = false;
    anchor_text.clear();
    anchor_target.clear();
  };

  while (i < n) {
    char c = html[i];
    if (c == '&') {
      std::string dec;
      i = decode_entity(html, i, dec);
      for (char d : dec) text_char(d);
      continue;
    }
    if (c != '<') {
      text_char(c);
      ++i;
      continue;
    }
    if (html.compare(i, 4, "<!--") == 0) {
      size_t end = html.find("-->", i + 4);
      if (end == std::string::npos) {
        ++out.malformed;
        break;
      }
      i = end + 3;
      text_char(' ');
      continue;
    }
    size_t j = i + 1;
    bool closing = j < n && html[j] == '/';
    if (closing) ++j;
    size_t name_start = j;
    while (j < n && tagname_char(html[j])) ++j;
    if (j == name_start) {  // stray '<', treat as text
      text_char('<');
      ++i;
      continue;
    }
    std::string name = lower(html.substr(name_start, j - name_start));

    // Attributes up to '>'.
    std::map<std::string, std::string> attrs;
    std::set<std::string> present;
    bool truncated = false;
    while (j < n && html[j] != '>') {
      unsigned char cj = static_cast<unsigned char>(html[j]);
      if (std::isspace(cj) || html[j] == '/') {
        ++j;
        continue;
      }
      size_t as = j;
      while (j < n && html[j] != '=' && html[j] != '>' && html[j] != '/' &&
             !std::isspace(static_cast<unsigned char>(html[j])))
        ++j;
      std::string aname = lower(html.substr(as, j - as));
      std::string aval;
      while (j < n && std::isspace(static_cast<unsigned char>(html[j]))) ++j;
      if (j < n && html[j] == '=') {
        ++j;
        while (j < n && std::isspace(static_cast<unsigned char>(html[j]))) ++j;
        if (j < n && (html[j] == '"' || html[j] == '\'')) {
          char quote = html[j++];
          size_t vs = j;
          while (j < n && html[j] != quote) ++j;
          if (j >= n) {
            truncated = true;
            break;
          }
          aval = html.substr(vs, j - vs);
          ++j;
        } else {
          size_t vs = j;
          while (j < n && html[j] != '>' &&
                 !std::isspace(static_cast<unsigned char>(html[j])))
            ++j;
          aval = html.substr(vs, j - vs);
        }
      }
      if (!aname.empty()) {
        std::string decoded;
        for (size_t k = 0; k < aval.size();) {
          if (aval[k] == '&')
            k = decode_entity(aval, k, decoded);
          else
            decoded += aval[k++];
        }
        attrs[aname] = decoded;
        present.insert(aname);
      }
    }
    if (truncated || j >= n) {
      ++out.malformed;
      break;
    }
    ++j;  // past '>'

    if (!closing && (name == "script" || name == "style")) {
      std::string close = "</" + name;
      size_t pos = j;
      size_t found = std::string::npos;
      std::string hlow = lower(html.substr(j));
      size_t rel = hlow.find(close);
      found = rel == std::string::npos ? std::string::npos : j + rel;
      if (found == std::string::npos) {
        ++out.malformed;
        break;
      }
      size_t gt = html.find('>', found);
      j = gt == std::string::npos ? n : gt + 1;
      (void)pos;
    } else if (name == "a") {
      if (!closing) {
        if (in_anchor) {
          ++out.malformed;  // implicit close of an unterminated anchor
          finish_anchor();
        }
        in_anchor = true;
        anchor_target = attrs.count("href") ? attrs["href"] : "";
      } else {
        if (in_anchor)
          finish_anchor();
        else
          ++out.malformed;
      }
    } else if (name == "img" && !closing) {
      ImageCandidate cand;
      cand.url = attrs.count("src") ? attrs["src"] : "";
      cand.has_alt = present.count("alt") != 0;
      cand.alt = cand.has_alt ? attrs["alt"] : "";
      if (cand.url.empty())
        ++out.malformed;
      else
        out.images.push_back(std::move(cand));
    }
    text_char(' ');
    i = j;
  }
  if (in_anchor) {
    ++out.malformed;  // unclosed anchor at EOF: skipped
  }
  out.text = collapse_ws(page_text);
  return out;
}

std::vector<AnchorPair> extract_anchors(const std::string& html) {
  return parse_html(html).anchors;
}

std::vector<ImageCandidate> extract_images(const std::string& html) {
  return parse_html(html).images;
}

std::vector<HtmlPage> load_html_pages(const std::string& path) {
  std::vector<HtmlPage> pages;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".html") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f);
      std::stringstream ss;
      ss << in.rdbuf();
      pages.push_back({f.stem().string(), ss.str()});
    }
    return pages;
  }
  std::ifstream in(path);
  if (!in) throw DataError("cannot open html input: " + path);
  std::string line;
  HtmlPage cur;
  bool open = false;
  while (std::getline(in, line)) {
    if (line.rfind("#PAGE ", 0) == 0) {
      if (open) pages.push_back(cur);
      cur = HtmlPage{trim(line.substr(6)), ""};
      if (cur.id.empty()) throw ParseError("empty page id in " + path);
      open = true;
    } else if (open) {
      cur.html += line;
      cur.html += '\n';
    }
  }
  if (open) pages.push_back(cur);
  if (pages.empty()) throw DataError("no pages found in " + path);
  return pages;
}

std::vector<FilterDecision> filter_images(const std::vector<ImageCandidate>& candidates,
                                          AltUnit unit, int min_alt) {
  static const std::vector<std::string> kKeywords = {"logo", "button", "icon", "plugin",
                                                     "widget"};
  std::vector<FilterDecision> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    auto reject = [&](const std::string& rule) { out.push_back({c.id, false, rule}); };

    // extension, taken before any query string or fragment
    std::string path = c.url.substr(0, c.url.find_first_of("?#"));
    size_t dot = path.find_last_of('.');
    size_t slash = path.find_last_of('/');
    std::string ext;
    if (dot != std::string::npos && (slash == std::string::npos || dot > slash))
      ext = lower(path.substr(dot + 1));
    if (ext != "jpg" && ext != "jpeg" && ext != "png") {
      reject("extension");
      continue;
    }

    std::string url_low = lower(c.url);
    bool keyword = false;
    for (const auto& kw : kKeywords)
      if (url_low.find(kw) != std::string::npos) {
        keyword = true;
        break;
      }
    if (keyword) {
      reject("keyword");
      continue;
    }

    std::string alt = trim(c.alt);
    if (alt.empty()) {
      reject("empty-alt");
      continue;
    }
    if (lower(alt) == "no alt attribute") {
      reject("no-alt-attribute");
      continue;
    }
    size_t len = unit == AltUnit::Chars ? alt.size() : split_words(alt).size();
    if (len < static_cast<size_t>(min_alt)) {
      reject("alt-too-short");
      continue;
    }
    out.push_back({c.id, true, "-"});
  }
  return out;
}

std::vector<ImageCandidate> kept_images(const std::vector<ImageCandidate>& candidates,
                                        const std::vector<FilterDecision>& decisions) {
  if (candidates.size() != decisions.size())
    throw ContractError("kept_images: decisions do not match candidates");
  std::vector<ImageCandidate> out;
  for (size_t i = 0; i < candidates.size(); ++i)
    if (decisions[i].keep) out.push_back(candidates[i]);
  return out;
}

void save_filter_audit(const std::vector<FilterDecision>& decisions, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open audit for writing: " + path);
  for (const auto& d : decisions)
    f << d.candidate_id << '\t' << (d.keep ? "keep" : "reject") << '\t' << d.rule << "\n";
}

std::vector<AlignmentDecision> filter_by_alignment(
    const std::vector<std::string>& ids, const std::function<double(const std::string&)>& scorer,
    double threshold) {
  std::vector<AlignmentDecision> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    double s = scorer(id);
    if (!(s >= -1.0 && s <= 1.0))
      throw DataError("filter_by_alignment: score out of [-1,1] for " + id);
    out.push_back({id, s, s >= threshold});
  }
  return out;
}

std::vector<RelevanceDecision> relevance_filter(
    const std::vector<Query>& queries, const std::map<std::string, std::string>& paired_doc,
    const std::vector<std::pair<std::string, Eigen::VectorXd>>& doc_embeddings,
    const std::function<Eigen::VectorXd(const std::string&)>& embed_query, int cutoff) {
  if (cutoff < 1) throw ContractError("relevance_filter: cutoff must be >= 1");
  FlatIndex index = FlatIndex::build(doc_embeddings);
  std::vector<RelevanceDecision> out;
  for (const auto& q : queries) {
    auto it = paired_doc.find(q.id);
    if (it == paired_doc.end())
      throw DataError("relevance_filter: query " + q.id + " has no paired document");
    bool found = false;
    for (const auto& id : index.ids())
      if (id == it->second) found = true;
    if (!found)
      throw DataError("relevance_filter: paired document " + it->second + " not in corpus");
    std::vector<SearchHit> hits = index.search(embed_query(q.text), index.size());
    int rank = 0;
    for (size_t r = 0; r < hits.size(); ++r)
      if (hits[r].doc_id == it->second) {
        rank = static_cast<int>(r) + 1;
        break;
      }
    out.push_back({q.id, rank, rank <= cutoff});
  }
  return out;
}

SplitResult split_queries(const std::vector<Query>& all, int dev_n, int test_n, uint64_t seed) {
  if (dev_n < 0 || test_n < 0) throw ContractError("split: negative split size");
  if (dev_n + test_n >= static_cast<int>(all.size()))
    throw DataError("split: dev+test must be smaller than the dataset");
  Rng rng(seed);
  std::vector<int> picks =
      rng.sample_without_replacement(static_cast<int>(all.size()), dev_n + test_n);
  std::set<int> dev_idx(picks.begin(), picks.begin() + dev_n);
  std::set<int> test_idx(picks.begin() + dev_n, picks.end());
  SplitResult out;
  for (int i = 0; i < static_cast<int>(all.size()); ++i) {
    if (dev_idx.count(i))
      out.dev.push_back(all[i]);
    else if (test_idx.count(i))
      out.test.push_back(all[i]);
    else
      out.train.push_back(all[i]);
  }
  return out;
}

namespace {

std::string topic_word(const SyntheticConfig& cfg, int topic, int j) {
  return "w" + std::to_string((topic * cfg.words_per_topic + j) % cfg.vocab_size);
}

std::string gen_words(const SyntheticConfig& cfg, Rng& rng, int topic, int lo, int hi,
                      double filler_prob) {
  int len = static_cast<int>(rng.uniform_int(lo, hi));
  std::string out;
  for (int i = 0; i < len; ++i) {
    if (!out.empty()) out += ' ';
    if (rng.uniform() < filler_prob)
      out += "f" + std::to_string(rng.uniform_int(0, 15));
    else
      out += topic_word(cfg, topic, static_cast<int>(rng.uniform_int(0, cfg.words_per_topic - 1)));
  }
  return out;
}

GridImage gen_topic_image(const SyntheticConfig& cfg, Rng& noise, uint64_t topic) {
  // Per-topic patch signature from a topic-derived stream; per-pixel noise
  // from the main stream so images of one topic share structure.
  Rng sig(cfg.seed * 1000003ULL + topic * 7919ULL + 1);
  int gh = cfg.image_h / 4, gw = cfg.image_w / 4;
  std::vector<float> base(static_cast<size_t>(gh) * gw);
  for (auto& b : base) b = static_cast<float>(sig.uniform(0.1, 0.9));
  GridImage img;
  img.height = cfg.image_h;
  img.width = cfg.image_w;
  img.channels = cfg.channels;
  img.pixels.resize(static_cast<size_t>(cfg.image_h) * cfg.image_w * cfg.channels);
  for (int y = 0; y < cfg.image_h; ++y)
    for (int x = 0; x < cfg.image_w; ++x)
      for (int c = 0; c < cfg.channels; ++c) {
        float v = base[static_cast<size_t>(y / 4) * gw + (x / 4)] +
                  static_cast<float>(noise.uniform(-0.08, 0.08));
        img.at(y, x, c) = std::min(1.0f, std::max(0.0f, v));
      }
  return img;
}

std::string zpad(const char* prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, n);
  return buf;
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_queries < 1 || cfg.n_text_docs < 1 || cfg.n_image_docs < 1 || cfg.vocab_size < 1)
    throw ContractError("gen_synthetic: sizes must be >= 1");
  if (cfg.image_h % 4 != 0 || cfg.image_w % 4 != 0)
    throw ShapeError("gen_synthetic: image dims must be multiples of the 4-pixel patch");

  int qpt = std::max(1, cfg.queries_per_topic);
  int n_topics = (cfg.n_queries + qpt - 1) / qpt;
  int img_answers = 0, txt_answers = 0;
  for (int t = 0; t < n_topics; ++t) (t % 2 == 0 ? img_answers : txt_answers)++;
  if (img_answers > cfg.n_image_docs || txt_answers > cfg.n_text_docs)
    throw DataError("gen_synthetic: not enough documents for the requested query count");

  Rng rng(cfg.seed);
  SyntheticData out;
  int img_seq = 0, txt_seq = 0, q_seq = 0;

  // Answer topics: one document plus its queries.
  for (int t = 0; t < n_topics; ++t) {
    Document d;
    if (t % 2 == 0) {
      d.id = zpad("di", img_seq++);
      d.modality = Modality::Image;
      d.text = gen_words(cfg, rng, t, 4, 8, 0.1);
      d.image = gen_topic_image(cfg, rng, static_cast<uint64_t>(t));
    } else {
      d.id = zpad("dt", txt_seq++);
      d.modality = Modality::Text;
      d.text = gen_words(cfg, rng, t, 10, 20, 0.15);
    }
    std::string docid = d.id;
    out.corpus.add(std::move(d));
    for (int k = 0; k < qpt && q_seq < cfg.n_queries; ++k) {
      Query q;
      q.id = zpad("q", q_seq++);
      q.text = gen_words(cfg, rng, t, 3, 6, 0.0);
      out.qrels[q.id][docid] = 1;
      out.queries.push_back(std::move(q));
    }
  }

  // Distractors, each on its own topic.
  int topic = n_topics;
  for (int i = img_answers; i < cfg.n_image_docs; ++i, ++topic) {
    Document d;
    d.id = zpad("di", img_seq++);
    d.modality = Modality::Image;
    d.text = gen_words(cfg, rng, topic, 4, 8, 0.1);
    d.image = gen_topic_image(cfg, rng, static_cast<uint64_t>(topic));
    out.corpus.add(std::move(d));
  }
  for (int i = txt_answers; i < cfg.n_text_docs; ++i, ++topic) {
    Document d;
    d.id = zpad("dt", txt_seq++);
    d.modality = Modality::Text;
    d.text = gen_words(cfg, rng, topic, 10, 20, 0.15);
    out.corpus.add(std::move(d));
  }

  for (const auto& d : out.corpus.docs)
    if (d.modality == Modality::Image)
      out.pairs.push_back({"p" + d.id, "", d.text, d.image});
  return out;
}

void save_synthetic(const SyntheticData& data, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  Corpus on_disk;  // shallow copy with image paths pointing at written files
  for (const auto& d : data.corpus.docs) {
    Document copy = d;
    if (d.modality == Modality::Image) {
      copy.image_path = "images/" + d.id + ".imgf";
      write_imgf(*d.image, (fs::path(dir) / copy.image_path).string());
    }
    copy.image.reset();
    on_disk.add(std::move(copy));
  }
  save_corpus(on_disk, (fs::path(dir) / "corpus.tsv").string());
  save_queries(data.queries, (fs::path(dir) / "queries.tsv").string());
  save_qrels(data.qrels, (fs::path(dir) / "qrels.txt").string());
  std::vector<PretrainPair> pairs = data.pairs;
  for (auto& p : pairs) {
    p.image_path = "images/" + p.id.substr(1) + ".imgf";
    p.image.reset();
  }
  save_pairs(pairs, (fs::path(dir) / "pairs.tsv").string());
}

}  // namespace marvel
