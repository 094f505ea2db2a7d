#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "suta/errors.hpp"
#include "suta/harness.hpp"

using namespace suta;
using namespace suta::harness;
namespace fs = std::filesystem;

namespace {

const ModelState& small_model() {
  static const ModelState model = [] {
    CorpusSpec spec;
    spec.count = 40;
    spec.seed = 17;
    TrainConfig tc;
    tc.epochs = 6;
    return train_source(init_model(ModelConfig{}), generate_corpus(spec), tc).model;
  }();
  return model;
}

Corpus test_corpus(std::size_t count, double delta) {
  CorpusSpec spec;
  spec.count = count;
  spec.seed = 18;
  spec.id_prefix = "h";
  spec.delta = delta;
  return generate_corpus(spec);
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "suta_harness_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

AdaptConfig quick_suta() {
  AdaptConfig c;
  c.iterations = 3;
  c.learning_rate = 1e-3;
  return c;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("number formatting") {
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(2e-5) == "2e-05");
  CHECK(format_number(1.0 / 3.0) == "0.333333");
  CHECK(format_number(123456789.0) == "1.23457e+08");
  CHECK(format_number(12.5) == "12.5");
}

TEST_CASE("corpus runs are independent of the number of jobs") {
  const auto corpus = test_corpus(12, 0.4);
  const auto c = quick_suta();
  const auto one = run_corpus(small_model(), corpus, c, 1, true);
  const auto four = run_corpus(small_model(), corpus, c, 4, true);
  REQUIRE(one.size() == corpus.size());
  REQUIRE(four.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(one[i].id == corpus[i].id);
    CHECK(four[i].id == corpus[i].id);
    CHECK(one[i].wer.errors() == four[i].wer.errors());
    CHECK(one[i].retained_fraction == four[i].retained_fraction);
    CHECK(one[i].trace->records.back().total == four[i].trace->records.back().total);
  }
  const auto row = make_row("t", RunPoint::of(c), one, 0.5);
  CHECK(results_csv({row}) == results_csv({make_row("t", RunPoint::of(c), four, 0.5)}));
  CHECK(traces_json("t", RunPoint::of(c), one) == traces_json("t", RunPoint::of(c), four));

  const auto curve = iteration_curve(one);
  REQUIRE(curve.size() == 4);
  CHECK(curve.back().errors() == aggregate(one).errors());
}

TEST_CASE("corpus runs reject duplicate ids and surface the first failure") {
  auto corpus = test_corpus(4, 0.0);
  corpus[2].id = corpus[1].id;
  CHECK_THROWS_AS(run_corpus(small_model(), corpus, quick_suta(), 2), DataError);

  corpus = test_corpus(6, 0.0);
  corpus[3].transcript = Transcript{};  // empty reference
  corpus[5].transcript = Transcript{};
  try {
    run_corpus(small_model(), corpus, quick_suta(), 3);
    FAIL("empty reference accepted");
  } catch (const DataError&) {
  }
}

TEST_CASE("baseline rows and werr") {
  const auto corpus = test_corpus(10, 0.4);
  AdaptConfig none;
  none.method = Method::None;
  const auto base = run_corpus(small_model(), corpus, none, 2);
  const auto row = make_row("x", RunPoint::of(none), base, aggregate(base).wer());
  CHECK(row.utterances == 10);
  if (row.wer.wer() > 0.0) {
    REQUIRE(row.werr.has_value());
    CHECK(*row.werr == 0.0);
  }
  CHECK(row.retained_fraction > 0.0);
  CHECK(row.retained_fraction <= 1.0);
  CHECK_FALSE(make_row("x", RunPoint::of(none), base, 0.0).werr.has_value());

  const auto csv = results_csv({row});
  CHECK(csv.rfind("corpus_tag,method,alpha,temperature,iterations,params,learning_rate,", 0) == 0);
  CHECK(csv.find("\nx,none,,,0,,,10,") != std::string::npos);
}

TEST_CASE("length buckets") {
  const auto corpus = test_corpus(16, 0.4);
  AdaptConfig none;
  none.method = Method::None;
  const auto c = quick_suta();
  const auto base = run_corpus(small_model(), corpus, none, 2);
  const auto adapted = run_corpus(small_model(), corpus, c, 2);

  std::vector<UtteranceRow> rows;
  for (const auto& r : base) rows.push_back({"tag", RunPoint::of(none), r.id, r.frames, r.wer});
  for (const auto& r : adapted) rows.push_back({"tag", RunPoint::of(c), r.id, r.frames, r.wer});

  // One bucket reproduces the corpus-level numbers.
  const auto single = length_buckets(rows, {});
  REQUIRE(single.size() == 1);
  CHECK(single[0].utterances == corpus.size());
  CHECK(single[0].baseline.errors() == aggregate(base).errors());
  CHECK(single[0].adapted.errors() == aggregate(adapted).errors());
  const auto corpus_row = make_row("tag", RunPoint::of(c), adapted, aggregate(base).wer());
  CHECK(single[0].werr == corpus_row.werr);

  std::size_t shortest = corpus[0].duration_frames(), longest = shortest;
  for (const auto& u : corpus) {
    shortest = std::min(shortest, u.duration_frames());
    longest = std::max(longest, u.duration_frames());
  }
  const std::size_t mid = (shortest + longest) / 2 + 1;
  const auto split = length_buckets(rows, {mid});
  std::size_t count = 0, errors = 0;
  for (const auto& b : split) {
    count += b.utterances;
    errors += b.adapted.errors();
    CHECK(b.utterances > 0);
  }
  CHECK(count == corpus.size());
  CHECK(errors == aggregate(adapted).errors());
  REQUIRE_FALSE(split.empty());
  CHECK(split.front().min_frames == 0);
  CHECK_FALSE(split.back().max_frames.has_value());

  // Threshold above every utterance leaves only the first bucket.
  CHECK(length_buckets(rows, {longest + 1}).size() == 1);
  CHECK_THROWS_AS(length_buckets(rows, {50, 40}), ContractViolation);

  auto orphan = rows;
  orphan.erase(orphan.begin());
  CHECK_THROWS_AS(length_buckets(orphan, {}), DataError);
}

TEST_CASE("utterance table round trip and malformed input") {
  AdaptConfig c = quick_suta();
  c.learning_rate = 2e-5;
  AdaptConfig none;
  none.method = Method::None;
  AdaptConfig sdpl;
  sdpl.method = Method::Sdpl;
  sdpl.selection = Selection::Ln;
  std::vector<UtteranceRow> rows{{"a+delta=0.3", RunPoint::of(none), "u1", 30, {1, 0, 0, 3}},
                                 {"a+delta=0.3", RunPoint::of(c), "u1", 30, {0, 1, 1, 3}},
                                 {"a+delta=0.3", RunPoint::of(sdpl), "u1", 30, {0, 0, 0, 3}}};
  const auto text = utterances_csv(rows);
  const auto parsed = parse_utterances_csv(text);
  REQUIRE(parsed.size() == 3);
  CHECK(utterances_csv(parsed) == text);
  CHECK(parsed[1].point.learning_rate == 2e-5);
  CHECK(parsed[1].point.selection == Selection::LnFeat);
  CHECK(parsed[2].point.method == Method::Sdpl);

  CHECK_THROWS_AS(parse_utterances_csv(""), FormatError);
  CHECK_THROWS_AS(parse_utterances_csv("id,frames\n"), FormatError);
  const auto header = text.substr(0, text.find('\n') + 1);
  try {
    parse_utterances_csv(header + "t,suta,0.3,2.5,3,ln,1e-3,u9,x,3,0,0,0\n");
    FAIL("bad integer accepted");
  } catch (const FormatError& e) {
    CHECK(e.record() == "u9");
  }
  CHECK_THROWS_AS(parse_utterances_csv(header + "t,tent,,,0,,,u9,3,3,0,0,0\n"), FormatError);
  CHECK_THROWS_AS(parse_utterances_csv(header + "t,none,,,0,,,u9,3\n"), FormatError);
}

TEST_CASE("learning-rate selection prefers the smaller rate on ties") {
  const auto dev = test_corpus(4, 0.4);
  AdaptConfig c = quick_suta();
  c.iterations = 0;  // every rate decodes identically
  CHECK(select_learning_rate(small_model(), dev, c, {1e-2, 1e-3, 1e-4}, 2) == 1e-4);
  c.iterations = 2;
  const double lr = select_learning_rate(small_model(), dev, c, {1e-4, 1e-3}, 2);
  CHECK((lr == 1e-4 || lr == 1e-3));
  CHECK_THROWS_AS(select_learning_rate(small_model(), dev, c, {}, 1), ContractViolation);
}

TEST_CASE("shift calibration") {
  const auto clean = test_corpus(20, 0.0);
  const auto cal = calibrate_shift(small_model(), clean, {0.1, 0.3, 0.6, 1.0}, 4, 2);
  REQUIRE(cal.curve.size() == 4);
  CHECK(cal.low <= cal.high);
  CHECK(cal.curve.back().second >= cal.curve.front().second);
  CHECK_THROWS_AS(calibrate_shift(small_model(), clean, {0.3, 0.1}, 4, 1), ContractViolation);
}

TEST_CASE("commands write deterministic files") {
  const auto root = fresh_dir("commands");
  CorpusSpec spec;
  spec.count = 30;
  spec.seed = 19;
  save_corpus(root / "train.bin", generate_corpus(spec));
  spec.count = 8;
  spec.seed = 20;
  spec.id_prefix = "dev";
  save_corpus(root / "dev.bin", generate_corpus(spec));
  spec.delta = 0.4;
  spec.id_prefix = "test";
  save_corpus(root / "test.bin", generate_corpus(spec));

  ExperimentConfig cfg;
  cfg.train_corpus = root / "train.bin";
  cfg.heldout_corpus = root / "dev.bin";
  cfg.model_path = root / "model.json";
  cfg.train.epochs = 3;
  cfg.output_dir = root / "train";
  const auto trained = cmd_train(cfg);
  CHECK(trained.log.size() == 3);
  CHECK(fs::exists(cfg.model_path));
  CHECK(read_text(root / "train" / "train_log.csv").rfind("epoch,mean_loss,heldout_wer_pct\n", 0) == 0);

  cfg.corpora = {root / "dev.bin", root / "test.bin"};
  cfg.adapt = quick_suta();
  cfg.traces = true;
  cfg.output_dir = root / "a1";
  cfg.jobs = 1;
  const auto rows = cmd_adapt(cfg);
  CHECK(rows.size() == 6);  // two corpora x {none, sdpl, suta}
  CHECK(rows[0].point.method == Method::None);
  CHECK(rows[1].point.selection == Selection::Ln);
  CHECK(rows[1].point.learning_rate == 2e-4);
  cfg.output_dir = root / "a4";
  cfg.jobs = 4;
  cmd_adapt(cfg);
  for (const char* f : {"results.csv", "results.json", "utterances.csv", "traces.json"})
    CHECK(read_text(root / "a1" / f) == read_text(root / "a4" / f));

  cfg.utterances_path = root / "a1" / "utterances.csv";
  cfg.output_dir = root / "len";
  const auto buckets = cmd_length_analysis(cfg);
  std::size_t counted = 0;
  for (const auto& b : buckets)
    if (b.corpus_tag == rows[3].corpus_tag && b.point.method == Method::Suta) counted += b.utterances;
  CHECK(counted == 8);
  CHECK(fs::exists(root / "len" / "buckets.csv"));

  cfg.output_dir = root / "sweep";
  cfg.methods = {Method::Suta};
  cfg.corpora = {root / "test.bin"};
  cfg.alphas = {0.0, 1.0};
  cfg.iterations = {2};
  cfg.curves = true;
  const auto sweep = cmd_sweep(cfg);
  CHECK(sweep.size() == 3);
  CHECK(sweep[1].point.alpha == 0.0);
  CHECK(sweep[2].point.alpha == 1.0);
  CHECK(fs::exists(root / "sweep" / "sweep.csv"));
  CHECK(fs::exists(root / "sweep" / "curves.csv"));

  // Output directory falls back to the environment.
  cfg.output_dir.clear();
  ::setenv("SUTA_OUTPUT_DIR", (root / "env").c_str(), 1);
  CHECK(cfg.output() == root / "env");
  ::unsetenv("SUTA_OUTPUT_DIR");
  CHECK(cfg.output() == fs::path("suta_out"));

  cfg.corpora = {root / "test.bin", root / "test.bin"};
  CHECK_THROWS_AS(cmd_adapt(cfg), DataError);
  cfg.corpora.clear();
  CHECK_THROWS_AS(cmd_adapt(cfg), ContractViolation);
}

}  // TEST_SUITE
