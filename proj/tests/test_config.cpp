#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "relsim/config.hpp"
#include "relsim/error.hpp"
#include "relsim/importers.hpp"

using namespace relsim;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.conf");
}

std::string manifest(const ExperimentConfig& c) {
  std::ostringstream out;
  write_manifest(out, c);
  return out.str();
}

std::string config_error(const std::string& text) {
  try {
    parse(text).validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string import_text(ImportFormat f, const std::string& text, std::size_t* count = nullptr) {
  std::istringstream in(text);
  std::ostringstream out;
  const std::size_t n = import_pairs(f, in, out, "src");
  if (count) *count = n;
  return out.str();
}

std::string import_error(ImportFormat f, const std::string& text) {
  try {
    import_text(f, text);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults") {
  const ExperimentConfig c;
  CHECK(c.runs == 30);
  CHECK(c.lr_grid == std::vector<double>{0.1, 0.5, 1.0, 5.0});
  CHECK(c.epoch_grid == std::vector<int>{10, 20});
  CHECK(c.train.batch_size == 16);
  CHECK(c.model.encoder.word_dim == 64);
  CHECK(c.model.encoder.hidden == 64);
  CHECK(c.model.head.hidden == 50);
  CHECK(c.comparison.alpha == 0.05);
  CHECK(c.comparison.test == TTestKind::welch);
  CHECK(c.synthetic.vocab_size == 200);
  CHECK(c.synthetic.min_length == 4);
  CHECK(c.synthetic.max_length == 10);
  CHECK(c.synthetic.noise == 0.05);
  CHECK(c.resolved_relations().size() == 2);
  CHECK(c.seeds().front() == c.train.seed);
  CHECK(c.seeds().size() == 30);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("parsing") {
  const ExperimentConfig c = parse(
      "# comment\n"
      "\n"
      "preset = activity\n"
      "regimes = single, multitask\n"
      "lr = 1\n"
      "epochs = 20\n"
      "loss_weight.SIM = 2\n"
      "ttest = pooled\n"
      "annotation = three_way\n"
      "lr_grid = 0.5, 5\n");
  CHECK(c.preset == "activity");
  CHECK(c.regimes == std::vector<Regime>{Regime::single, Regime::multitask});
  CHECK(c.train.lr == 1.0);
  CHECK(c.train.epochs == 20);
  CHECK(c.train.weight("SIM") == 2.0);
  CHECK(c.train.weight("REL") == 1.0);
  CHECK(c.comparison.test == TTestKind::pooled);
  CHECK(c.comparison.policy == AnnotationPolicy::three_way);
  CHECK(c.lr_grid == std::vector<double>{0.5, 5.0});
  const auto rels = c.resolved_relations();
  REQUIRE(rels.size() == 4);
  CHECK(rels[3].name == "PAC");
  CHECK(rels[3].range().min == -2.0);
}

TEST_CASE("errors name the line or key") {
  CHECK(config_error("lr = 0.5\nbogus = 1\n").find("test.conf:2") != std::string::npos);
  CHECK(config_error("no equals sign\n").find("test.conf:1") != std::string::npos);
  CHECK(config_error("epochs = ten\n").find("epochs") != std::string::npos);
  CHECK(config_error("runs = 0\n").find("runs") != std::string::npos);
  CHECK(config_error("lr_grid = \n").find("grid") != std::string::npos);
  CHECK_FALSE(config_error("preset = imaginary\n").empty());
  CHECK_FALSE(config_error("loss_weight.nope = 2\n").empty());
  CHECK_FALSE(config_error("regimes = solo\n").empty());
  CHECK_FALSE(config_error("annotation = sideways\n").empty());
  CHECK_FALSE(config_error("alpha = 1.5\n").empty());
  CHECK_THROWS_AS(load_config("/nonexistent/relsim.conf"), ConfigError);
}

TEST_CASE("presets") {
  const auto sick = preset_relations("sick");
  REQUIRE(sick.size() == 2);
  CHECK(sick[0].metric == Metric::pearson);
  CHECK(sick[0].range().min == 1.0);
  CHECK(sick[0].range().max == 5.0);
  CHECK(sick[1].classes().classes == std::vector<std::string>{"entailment", "contradiction", "neutral"});
  CHECK(sick[1].metric == Metric::accuracy);

  const auto typed = preset_relations("typed");
  REQUIRE(typed.size() == 8);
  CHECK(typed[0].name == "general");
  CHECK(typed[7].name == "description");
  for (const auto& r : typed) CHECK(r.metric == Metric::pearson);

  const auto activity = preset_relations("activity");
  REQUIRE(activity.size() == 4);
  for (const auto& r : activity) CHECK(r.metric == Metric::spearman);
  CHECK_THROWS_AS(preset_relations("nope"), ConfigError);
}

TEST_CASE("relation syntax") {
  const RelationSpec s = parse_relation("SIM:0:4:spearman");
  CHECK(s.name == "SIM");
  CHECK(s.output_size() == 5);
  CHECK(parse_relation(format_relation(s)).name == "SIM");
  const RelationSpec c = parse_relation("ent:categorical:yes|no:accuracy");
  CHECK(c.classes().classes == std::vector<std::string>{"yes", "no"});
  CHECK(format_relation(parse_relation(format_relation(c))) == format_relation(c));
  CHECK_THROWS_AS(parse_relation("SIM:4:0:spearman"), ConfigError);
  CHECK_THROWS_AS(parse_relation("SIM:0:4"), ConfigError);
}

TEST_CASE("manifest parses back to the same configuration") {
  ExperimentConfig c;
  apply_setting(c, "preset", "sick");
  apply_setting(c, "lr", "0.1");
  apply_setting(c, "runs", "7");
  apply_setting(c, "loss_weight.relatedness", "5");
  apply_setting(c, "freeze_embeddings", "true");
  apply_setting(c, "ttest", "paired");
  apply_setting(c, "jobs", "3");
  apply_setting(c, "synthetic.correlation", "0.3");
  const std::string m = manifest(c);
  CHECK(m.find("seeds = 1, 2, 3, 4, 5, 6, 7") != std::string::npos);
  CHECK(m.find(kVersion) != std::string::npos);
  const ExperimentConfig back = parse(m);
  CHECK(manifest(back) == m);
  CHECK(back.train.lr == 0.1);
  CHECK(back.train.weight("relatedness") == 5.0);
  CHECK(back.model.encoder.freeze_embeddings);
  CHECK(back.comparison.test == TTestKind::paired);

  // A default configuration also survives.
  CHECK(manifest(parse(manifest(ExperimentConfig{}))) == manifest(ExperimentConfig{}));
}

TEST_CASE("generic import is the identity") {
  const std::string tsv = "sent1\tsent2\tSIM\na b\tc d\t1.5\ne f\tg h\t2\n";
  std::size_t n = 0;
  CHECK(import_text(ImportFormat::generic, tsv, &n) == tsv);
  CHECK(n == 2);
  CHECK(import_text(ImportFormat::generic, "", &n) == "sent1\tsent2\n");
  CHECK(n == 0);
  CHECK(import_error(ImportFormat::generic, "sent1\tsent2\tSIM\na\tb\n").find("src:2:") != std::string::npos);
  CHECK_FALSE(import_error(ImportFormat::generic, "left\tright\tSIM\n").empty());
}

TEST_CASE("SICK import") {
  const std::string src =
      "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n"
      "1\tA man is playing.\tA person plays.\t4.5\tENTAILMENT\n"
      "2\tThe cat sleeps\tNobody sleeps\t2\tCONTRADICTION\n";
  std::size_t n = 0;
  const std::string out = import_text(ImportFormat::sick, src, &n);
  CHECK(n == 2);
  CHECK(out ==
        "sent1\tsent2\trelatedness\tentailment\n"
        "a man is playing .\ta person plays .\t4.5\tentailment\n"
        "the cat sleeps\tnobody sleeps\t2\tcontradiction\n");
  CHECK(import_error(ImportFormat::sick, "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n"
                                         "1\ta\tb\t7\tNEUTRAL\n")
            .find("src:2") != std::string::npos);
  CHECK(import_error(ImportFormat::sick, "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n"
                                         "1\ta\tb\t3\tMAYBE\n")
            .find("maybe") != std::string::npos);
  CHECK_FALSE(import_error(ImportFormat::sick, "sentence_A\tsentence_B\n").empty());
}

TEST_CASE("activity import") {
  const std::string src =
      "phrase1,phrase2,SIM,REL,MA,PAC\n"
      "\"to watch a film\",\"go to the movies\",3.5,4,3,1.5\n"
      "cook dinner,\"read a book, slowly\",0.2,0.5,0,-1\n";
  std::size_t n = 0;
  const std::string out = import_text(ImportFormat::activity, src, &n);
  CHECK(n == 2);
  CHECK(out ==
        "sent1\tsent2\tSIM\tREL\tMA\tPAC\n"
        "to watch a film\tgo to the movies\t3.5\t4\t3\t1.5\n"
        "cook dinner\tread a book , slowly\t0.2\t0.5\t0\t-1\n");
  CHECK(import_error(ImportFormat::activity, "phrase1,phrase2,SIM,REL,MA,PAC\na,b,1,1,1,3\n").find("src:2") !=
        std::string::npos);
}

TEST_CASE("typed import concatenates metadata") {
  const std::string src =
      R"({"item1": {"description": "Oil on canvas.", "title": "Sunset", "creator": "J. Smith"},)"
      R"( "item2": {"title": "Dawn", "subject": "  landscape   painting "},)"
      R"( "scores": {"general": 3.2, "author": 1, "people": 0, "time": 2, "location": 5, "event": 0, "subject": 4, "description": 2.5}})"
      "\n\n";
  std::size_t n = 0;
  const std::string out = import_text(ImportFormat::typed, src, &n);
  CHECK(n == 1);
  const auto second_line = out.substr(out.find('\n') + 1);
  CHECK(second_line.rfind("sunset . j . smith . oil on canvas .\tdawn . landscape painting\t3.2\t1\t0\t2\t5\t0\t4\t2.5\n", 0) == 0);
  CHECK(import_error(ImportFormat::typed, "{not json}\n").find("src:1") != std::string::npos);
  CHECK(import_error(ImportFormat::typed, R"({"item1": {}, "item2": {}, "scores": {"general": 1}})"
                                          "\n")
            .find("author") != std::string::npos);
}

TEST_CASE("import formats and files") {
  CHECK(parse_import_format("typed") == ImportFormat::typed);
  CHECK_THROWS_AS(parse_import_format("xml"), ConfigError);
  const fs::path dir = fs::temp_directory_path() / "relsim_test_config_import";
  fs::create_directories(dir);
  std::ofstream(dir / "in.tsv") << "sent1\tsent2\tSIM\nx\ty\t1\n";
  CHECK(import_file("generic", dir / "in.tsv", dir / "sub" / "out.tsv") == 1);
  std::ifstream back(dir / "sub" / "out.tsv");
  std::stringstream s;
  s << back.rdbuf();
  CHECK(s.str() == "sent1\tsent2\tSIM\nx\ty\t1\n");
  CHECK_THROWS_AS(import_file("generic", dir / "missing.tsv", dir / "o.tsv"), DataError);
}
