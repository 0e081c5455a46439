#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "marvel/rng.hpp"
#include "marvel/runfile.hpp"

using namespace marvel;

namespace {

Eigen::VectorXd randv(Rng& rng, int d) {
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.uniform(-1, 1);
  return v;
}

std::vector<std::pair<std::string, Eigen::VectorXd>> random_docs(Rng& rng, int n, int d) {
  std::vector<std::pair<std::string, Eigen::VectorXd>> docs;
  char buf[16];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "d%05d", i);
    docs.emplace_back(buf, randv(rng, d));
  }
  return docs;
}

// Brute-force ranking oracle, independent of the index path.
std::vector<SearchHit> brute_force(const std::vector<std::pair<std::string, Eigen::VectorXd>>& docs,
                                   const Eigen::VectorXd& q, int k) {
  std::vector<SearchHit> all;
  for (const auto& [id, v] : docs) all.push_back({id, cosine(q, v)});
  std::sort(all.begin(), all.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (static_cast<int>(all.size()) > k) all.resize(k);
  return all;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("build stores unit rows in ascending id order") {
  Rng rng(1);
  auto docs = random_docs(rng, 3, 8);
  std::swap(docs[0], docs[2]);  // scrambled input order
  FlatIndex idx = FlatIndex::build(docs);
  CHECK(idx.size() == 3);
  CHECK(std::is_sorted(idx.ids().begin(), idx.ids().end()));
  for (int i = 0; i < 3; ++i)
    CHECK(std::fabs(idx.matrix().row(i).norm() - 1.0) < 1e-6);
}

TEST_CASE("duplicate id and zero-norm embedding are rejected by name") {
  Rng rng(2);
  auto docs = random_docs(rng, 3, 4);
  docs.push_back({"d00001", randv(rng, 4)});
  CHECK_THROWS_WITH_AS(FlatIndex::build(docs), doctest::Contains("d00001"), DataError);

  auto docs2 = random_docs(rng, 2, 4);
  docs2.push_back({"zzz", Eigen::VectorXd::Zero(4)});
  CHECK_THROWS_WITH_AS(FlatIndex::build(docs2), doctest::Contains("zzz"), DataError);
}

TEST_CASE("query equal to a stored embedding ranks it first with score 1") {
  Rng rng(3);
  auto docs = random_docs(rng, 10, 6);
  FlatIndex idx = FlatIndex::build(docs);
  auto hits = idx.search(docs[4].second, 3);
  CHECK(hits[0].doc_id == docs[4].first);
  CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("k >= N returns a permutation of all docs") {
  Rng rng(4);
  auto docs = random_docs(rng, 7, 5);
  FlatIndex idx = FlatIndex::build(docs);
  auto hits = idx.search(randv(rng, 5), 50);
  CHECK(hits.size() == 7);
  std::set<std::string> ids;
  for (auto& h : hits) ids.insert(h.doc_id);
  CHECK(ids.size() == 7);
}

TEST_CASE("search matches the brute-force oracle on random instances") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 20 + static_cast<int>(rng.uniform_int(0, 60));
    int d = 4 + static_cast<int>(rng.uniform_int(0, 12));
    auto docs = random_docs(rng, n, d);
    FlatIndex idx = FlatIndex::build(docs);
    Eigen::VectorXd q = randv(rng, d);
    for (int k : {1, 3, n / 2, n, n + 5}) {
      if (k < 1) continue;
      auto got = idx.search(q, k);
      auto want = brute_force(docs, q, k);
      REQUIRE(got.size() == want.size());
      for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].doc_id == want[i].doc_id);
        CHECK(std::fabs(got[i].score - want[i].score) < 1e-6);
      }
    }
  }
}

TEST_CASE("scores are within 1e-6 of cosine on raw embeddings") {
  Rng rng(6);
  auto docs = random_docs(rng, 30, 8);
  FlatIndex idx = FlatIndex::build(docs);
  Eigen::VectorXd q = randv(rng, 8);
  std::map<std::string, Eigen::VectorXd> by_id(docs.begin(), docs.end());
  for (const auto& h : idx.search(q, 30))
    CHECK(std::fabs(h.score - cosine(q, by_id.at(h.doc_id))) < 1e-6);
}

TEST_CASE("zero-norm query and bad k are rejected") {
  Rng rng(7);
  FlatIndex idx = FlatIndex::build(random_docs(rng, 3, 4));
  CHECK_THROWS_AS(idx.search(Eigen::VectorXd::Zero(4), 2), NumericError);
  CHECK_THROWS_AS(idx.search(randv(rng, 4), 0), ContractError);
}

TEST_CASE("index save/load round trip") {
  Rng rng(8);
  auto docs = random_docs(rng, 12, 6);
  FlatIndex idx = FlatIndex::build(docs);
  idx.save("test_index.bin");
  FlatIndex back = FlatIndex::load("test_index.bin");
  CHECK(back.ids() == idx.ids());
  CHECK(back.matrix() == idx.matrix());
  std::remove("test_index.bin");
}

TEST_CASE("embeddings file round trip") {
  Rng rng(9);
  auto docs = random_docs(rng, 5, 4);
  for (auto& [id, v] : docs)
    for (int i = 0; i < v.size(); ++i) v(i) = static_cast<float>(v(i));  // f32 grid
  write_embeddings(docs, "test_emb.bin");
  auto back = read_embeddings("test_emb.bin");
  REQUIRE(back.size() == docs.size());
  for (size_t i = 0; i < docs.size(); ++i) {
    CHECK(back[i].first == docs[i].first);
    CHECK(back[i].second == docs[i].second);
  }
  std::remove("test_emb.bin");
}

TEST_CASE("run round trip on ~100 records") {
  Rng rng(10);
  auto docs = random_docs(rng, 25, 6);
  FlatIndex idx = FlatIndex::build(docs);
  std::vector<std::pair<std::string, std::vector<SearchHit>>> results;
  for (int qi = 0; qi < 4; ++qi)
    results.emplace_back("q" + std::to_string(qi), idx.search(randv(rng, 6), 25));
  RunFile run = make_run(results, "trial");
  CHECK(run.records.size() == 100);
  write_run(run, "test_run.txt");
  RunFile back = read_run("test_run.txt");
  CHECK(back == run);
  std::remove("test_run.txt");
}

TEST_CASE("ranks start at 1 per query and empty runs keep the header") {
  RunFile empty = make_run({}, "t");
  write_run(empty, "test_empty_run.txt");
  std::string content = slurp("test_empty_run.txt");
  CHECK(content == "# qid Q0 docid rank score tag\n");
  CHECK(read_run("test_empty_run.txt").records.empty());
  std::remove("test_empty_run.txt");

  RunFile run = make_run({{"qa", {{"d1", 0.9}, {"d2", 0.5}}}, {"qb", {{"d9", 0.7}}}}, "t");
  CHECK(run.records[0].rank == 1);
  CHECK(run.records[2].rank == 1);  // new query restarts at 1
}

TEST_CASE("run files are byte-identical across identical writes") {
  Rng rng(11);
  auto docs = random_docs(rng, 10, 4);
  FlatIndex idx = FlatIndex::build(docs);
  Eigen::VectorXd q = randv(rng, 4);
  RunFile run = make_run({{"q0", idx.search(q, 10)}}, "t");
  write_run(run, "test_run_a.txt");
  write_run(run, "test_run_b.txt");
  CHECK(slurp("test_run_a.txt") == slurp("test_run_b.txt"));
  std::remove("test_run_a.txt");
  std::remove("test_run_b.txt");
}

TEST_CASE("malformed run lines report the line number") {
  {
    std::ofstream f("test_bad_run.txt");
    f << "q1 Q0 d1 1 0.900000 t\n";
    f << "q1 Q0 d2 oops\n";
  }
  CHECK_THROWS_WITH_AS(read_run("test_bad_run.txt"), doctest::Contains(":2"), ParseError);
  std::remove("test_bad_run.txt");
}

TEST_CASE("run invariants are enforced") {
  RunFile bad;
  bad.records.push_back({"q1", "d1", 1, 0.5, "t"});
  bad.records.push_back({"q1", "d2", 2, 0.9, "t"});  // score increases
  CHECK_THROWS_AS(validate_run(bad), ContractError);

  RunFile gap;
  gap.records.push_back({"q1", "d1", 1, 0.5, "t"});
  gap.records.push_back({"q1", "d2", 3, 0.4, "t"});  // rank gap
  CHECK_THROWS_AS(validate_run(gap), ContractError);

  RunFile tie;
  tie.records.push_back({"q1", "db", 1, 0.5, "t"});
  tie.records.push_back({"q1", "da", 2, 0.5, "t"});  // tie ordered wrong
  CHECK_THROWS_AS(validate_run(tie), ContractError);
}
