#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "relsim/data.hpp"
#include "relsim/error.hpp"

using namespace relsim;

namespace {

std::vector<RelationSpec> activity_specs() {
  return {RelationSpec::scored("SIM", 0, 4, Metric::spearman), RelationSpec::scored("REL", 0, 4, Metric::spearman)};
}

std::vector<RelationSpec> sick_specs() {
  return {RelationSpec::scored("relatedness", 1, 5, Metric::pearson),
          RelationSpec::categorical("entailment", {"entailment", "contradiction", "neutral"})};
}

std::vector<PairExample> read(const std::string& text, const std::vector<RelationSpec>& specs) {
  std::istringstream in(text);
  return read_pairs_tsv(in, specs, "pairs.tsv");
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

std::vector<PairExample> numbered(std::size_t n) {
  std::vector<PairExample> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i].left = {"l" + std::to_string(i)};
    v[i].right = {"r" + std::to_string(i)};
    v[i].labels["SIM"] = static_cast<double>(i % 5);
  }
  return v;
}

std::multiset<std::string> keys(const std::vector<PairExample>& v) {
  std::multiset<std::string> k;
  for (const auto& e : v) k.insert(e.left[0] + "|" + e.right[0]);
  return k;
}

}  // namespace

TEST_CASE("pair TSV loading") {
  const auto specs = activity_specs();
  SUBCASE("one row") {
    const auto ex = read("sent1\tsent2\tSIM\tREL\nTo watch a film.\tgo to the movies\t3.5\t4\n", specs);
    REQUIRE(ex.size() == 1);
    CHECK(ex[0].left == TokenSeq{"to", "watch", "a", "film", "."});
    CHECK(std::get<double>(ex[0].labels.at("SIM")) == 3.5);
    CHECK(std::get<double>(ex[0].labels.at("REL")) == 4.0);
  }
  SUBCASE("header only") { CHECK(read("sent1\tsent2\tSIM\tREL\n", specs).empty()); }
  SUBCASE("CRLF endings are accepted") {
    CHECK(read("sent1\tsent2\tSIM\tREL\r\na\tb\t1\t2\r\n", specs).size() == 1);
  }
  SUBCASE("out-of-range score names the line and relation") {
    const std::string msg = error_of([&] { read("sent1\tsent2\tSIM\tREL\na\tb\t4.5\t1\n", specs); });
    CHECK(msg.find(":2") != std::string::npos);
    CHECK(msg.find("SIM") != std::string::npos);
  }
  SUBCASE("column count") {
    const std::string msg = error_of([&] { read("sent1\tsent2\tSIM\tREL\na\tb\t1\t2\nc\td\t1\n", specs); });
    CHECK(msg.find(":3") != std::string::npos);
  }
  SUBCASE("header must match the relations") {
    CHECK_FALSE(error_of([&] { read("sent1\tsent2\tREL\tSIM\n", specs); }).empty());
    CHECK_FALSE(error_of([&] { read("", specs); }).empty());
  }
  SUBCASE("unknown categorical label") {
    const std::string msg =
        error_of([&] { read("sent1\tsent2\trelatedness\tentailment\na\tb\t3\tmaybe\n", sick_specs()); });
    CHECK(msg.find("maybe") != std::string::npos);
  }
  SUBCASE("non-numeric score") {
    CHECK_FALSE(error_of([&] { read("sent1\tsent2\tSIM\tREL\na\tb\tx\t1\n", specs); }).empty());
  }
}

TEST_CASE("TSV round trip") {
  const std::string text =
      "sent1\tsent2\trelatedness\tentailment\n"
      "a man is playing\ta person plays\t4.25\tentailment\n"
      "the cat sleeps .\ta dog barks\t1\tneutral\n"
      "nobody is here\tsomeone is here\t2.1\tcontradiction\n";
  const auto specs = sick_specs();
  const auto first = read(text, specs);
  std::ostringstream out;
  write_pairs_tsv(out, first, specs);
  CHECK(read(out.str(), specs) == first);
  // Canonical text is a fixed point.
  std::ostringstream again;
  write_pairs_tsv(again, read(out.str(), specs), specs);
  CHECK(again.str() == out.str());

  const auto synth = generate_synthetic(SyntheticConfig{.seed = 3, .n_pairs = 50, .relations = synthetic_relations(3)});
  std::ostringstream s;
  write_pairs_tsv(s, synth.train, synth.specs);
  CHECK(read(s.str(), synth.specs) == synth.train);
}

TEST_CASE("format_score") {
  CHECK(format_score(4.0) == "4");
  CHECK(format_score(0.1) == "0.1");
  CHECK(format_score(-2.5) == "-2.5");
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.uniform(-10, 10);
    CHECK(std::stod(format_score(v)) == v);
  }
}

TEST_CASE("split_dataset") {
  const auto all = numbered(1373);
  const std::size_t counts[] = {1000, 373};
  const auto s = split_dataset(all, counts, 42);
  REQUIRE(s.size() == 2);
  CHECK(s[0].size() == 1000);
  CHECK(s[1].size() == 373);
  std::vector<PairExample> joined = s[0];
  joined.insert(joined.end(), s[1].begin(), s[1].end());
  CHECK(keys(joined) == keys(all));
  const auto k0 = keys(s[0]);
  for (const auto& e : s[1]) CHECK(k0.count(e.left[0] + "|" + e.right[0]) == 0);

  CHECK(split_dataset(all, counts, 42) == s);
  CHECK(split_dataset(all, counts, 43) != s);

  const std::size_t all_train[] = {1373, 0};
  const auto t = split_dataset(all, all_train, 1);
  CHECK(t[0].size() == 1373);
  CHECK(t[1].empty());

  const std::size_t too_many[] = {1000, 374};
  CHECK_THROWS_AS(split_dataset(all, too_many, 1), DataError);

  const double fractions[] = {0.5, 0.25, 0.25};
  const auto f = split_dataset_fractions(numbered(10), fractions, 1);
  CHECK(f[0].size() == 5);
  CHECK(f[1].size() == 2);
  CHECK(f[2].size() == 3);
}

TEST_CASE("concat_metadata") {
  using Fields = std::vector<std::pair<std::string, std::string>>;
  CHECK(concat_metadata(Fields{{"title", "A"}, {"subject", "B"}}) == "A. B");
  CHECK(concat_metadata(Fields{{"description", "just this"}}) == "just this");
  CHECK(concat_metadata(Fields{{"title", "  A  B "}}) == "A B");
  CHECK(concat_metadata(Fields{{"medium", "oil"}, {"description", "D"}, {"creator", "C"}, {"title", "T"}}) ==
        "T. C. D. oil");
  CHECK(concat_metadata(Fields{{"title", "   "}, {"subject", ""}}).empty());
  CHECK(concat_metadata(Fields{}).empty());
}

TEST_CASE("synthetic generator") {
  SUBCASE("correlation 1 makes every noiseless score equal") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
      TokenSeq l, r;
      for (int k = 0; k < 6; ++k) l.push_back(synthetic_token(rng.index(200)));
      for (int k = 0; k < 6; ++k) r.push_back(synthetic_token(rng.index(200)));
      const auto s = synthetic_scores(l, r, 3, 200, 1.0);
      CHECK(s.noiseless[1] == s.noiseless[0]);
      CHECK(s.noiseless[2] == s.noiseless[0]);
    }
  }
  SUBCASE("identical sentences score the maximum") {
    const TokenSeq l{synthetic_token(3), synthetic_token(150), synthetic_token(77)};
    const auto s = synthetic_scores(l, l, 2, 200, 0.7);
    CHECK(s.overlap[0] == 1.0);
    CHECK(s.noiseless[0] == 1.0);
  }
  SUBCASE("correlation 0.7 gives moderately correlated relations") {
    const auto d = generate_synthetic(SyntheticConfig{.seed = 1, .n_pairs = 2000, .relations = synthetic_relations(2)});
    REQUIRE(d.train.size() == 2000);
    std::vector<double> a, b;
    for (const auto& e : d.train) {
      a.push_back(std::get<double>(e.labels.at("rel1")));
      b.push_back(std::get<double>(e.labels.at("rel2")));
    }
    const double r = oracle::pearson(a, b);
    INFO("Pearson " << r);
    CHECK(r >= 0.5);
    CHECK(r <= 0.9);
  }
  SUBCASE("labels stay in range and splits are disjoint") {
    SyntheticConfig c{.seed = 9, .n_pairs = 600, .relations = synthetic_relations(4)};
    c.train = 300;
    c.dev = 100;
    c.test = 200;
    const auto d = generate_synthetic(c);
    CHECK(d.train.size() == 300);
    CHECK(d.dev.size() == 100);
    CHECK(d.test.size() == 200);
    CHECK_NOTHROW(d.validate());
    for (const auto* split : {&d.train, &d.dev, &d.test}) {
      for (const auto& e : *split) {
        CHECK(e.left.size() >= 4);
        CHECK(e.left.size() <= 10);
        for (const auto& spec : d.specs) {
          const double y = std::get<double>(e.labels.at(spec.name));
          CHECK(y >= 0.0);
          CHECK(y <= 4.0);
        }
      }
    }
  }
  SUBCASE("deterministic per seed") {
    const SyntheticConfig c{.seed = 4, .n_pairs = 100, .relations = synthetic_relations(2)};
    CHECK(generate_synthetic(c).train == generate_synthetic(c).train);
  }
}

TEST_CASE("bundle validation catches overlapping splits") {
  DatasetBundle b;
  b.specs = activity_specs();
  PairExample e;
  e.left = {"a"};
  e.right = {"b"};
  e.labels = {{"SIM", 1.0}, {"REL", 2.0}};
  b.train = {e};
  b.test = {e};
  CHECK_THROWS_AS(b.validate(), DataError);
  b.test.clear();
  CHECK_NOTHROW(b.validate());
  b.train[0].labels.erase("REL");
  CHECK_THROWS_AS(b.validate(), DataError);
}
