#pragma once

// Experiment plumbing behind the `suta` command-line tool: parallel corpus
// runs, result tables, shift calibration, dev-set learning-rate selection and
// the length-bucket report. Every file is written by the calling thread after
// all jobs have finished, and output never depends on completion order.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "suta/adapt.hpp"
#include "suta/corpus.hpp"
#include "suta/model.hpp"
#include "suta/train.hpp"

namespace suta::harness {

namespace fs = std::filesystem;

// Six significant digits, "%.6g" style. Used for every float in every table.
std::string format_number(double value);

// $SUTA_OUTPUT_DIR when set and non-empty, otherwise "suta_out".
fs::path default_output_dir();

struct UtteranceResult {
  std::string id;
  std::size_t frames = 0;
  WerReport wer;
  // Non-blank-argmax frames over all frames, for the final model state.
  double retained_fraction = 0.0;
  std::optional<AdaptTrace> trace;
};

// Adapts every utterance independently with `jobs` worker threads (0 means
// one per hardware thread). Results come back in corpus order; utterance ids
// must be unique. The first failure is rethrown after all workers stop.
std::vector<UtteranceResult> run_corpus(const ModelState& model, const Corpus& corpus,
                                        const AdaptConfig& config, std::size_t jobs,
                                        bool keep_traces = false);

WerReport aggregate(const std::vector<UtteranceResult>& results);

// One point of a run: how the model was adapted, independent of the corpus.
struct RunPoint {
  Method method = Method::None;
  double alpha = 0.3;
  double temperature = 2.5;
  std::size_t iterations = 0;
  Selection selection = Selection::LnFeat;
  double learning_rate = 0.0;

  static RunPoint of(const AdaptConfig& config);
  AdaptConfig to_config(const AdaptConfig& base) const;
};

struct ResultRow {
  std::string corpus_tag;
  RunPoint point;
  WerReport wer;
  // Relative to the method=none row of the same corpus; unset when that
  // baseline WER is zero.
  std::optional<double> werr;
  std::size_t utterances = 0;
  double retained_fraction = 0.0;
};

ResultRow make_row(const std::string& corpus_tag, const RunPoint& point,
                   const std::vector<UtteranceResult>& results, std::optional<double> baseline_wer);

// Per-utterance line of a run, the input of the length-bucket report.
struct UtteranceRow {
  std::string corpus_tag;
  RunPoint point;
  std::string id;
  std::size_t frames = 0;
  WerReport wer;
};

std::string results_csv(const std::vector<ResultRow>& rows);
std::string results_json(const std::vector<ResultRow>& rows);
std::string utterances_csv(const std::vector<UtteranceRow>& rows);
std::vector<UtteranceRow> parse_utterances_csv(const std::string& text);

// Per-iteration WER of every utterance: one line per (utterance, iteration).
std::string curves_csv(const std::string& corpus_tag, const RunPoint& point,
                       const std::vector<UtteranceResult>& results, bool header);
std::string traces_json(const std::string& corpus_tag, const RunPoint& point,
                        const std::vector<UtteranceResult>& results);

// Corpus WER after each iteration 0..N, pooled over utterances (traces needed).
std::vector<WerReport> iteration_curve(const std::vector<UtteranceResult>& results);

struct BucketRow {
  std::string corpus_tag;
  RunPoint point;
  std::size_t min_frames = 0;
  std::optional<std::size_t> max_frames;  // exclusive; unset for the last bucket
  std::size_t utterances = 0;
  WerReport baseline;
  WerReport adapted;
  std::optional<double> werr;
};

// Buckets utterances by duration with the given ascending thresholds and
// compares each adapted run against the method=none run of its corpus.
// Empty buckets are left out.
std::vector<BucketRow> length_buckets(const std::vector<UtteranceRow>& rows,
                                      const std::vector<std::size_t>& thresholds);
std::string buckets_csv(const std::vector<BucketRow>& rows);

// Relative degradation targets for the calibrated shift levels.
struct ShiftTargets {
  double low_min = 0.3, low_max = 0.8;
  double high_min = 1.0, high_max = 2.5;
};

struct ShiftCalibration {
  double clean_wer = 0.0;
  double low = 0.0;
  double high = 0.0;
  std::vector<std::pair<double, double>> curve;  // (delta, corpus WER)
};

// For each target band, the grid value whose relative WER increase over clean
// is closest to the band centre. Throws DataError when the clean WER is zero.
ShiftCalibration calibrate_shift(const ModelState& model, const Corpus& clean,
                                 const std::vector<double>& grid, std::uint64_t noise_seed,
                                 std::size_t jobs, const ShiftTargets& targets = {});

// Lowest corpus WER on `dev` over `grid`; ties go to the smaller rate.
double select_learning_rate(const ModelState& model, const Corpus& dev, const AdaptConfig& config,
                            std::vector<double> grid, std::size_t jobs);

// ---- command layer ----

struct ExperimentConfig {
  fs::path model_path;
  fs::path train_corpus;
  fs::path heldout_corpus;
  std::vector<fs::path> corpora;
  fs::path utterances_path;  // input of length analysis
  fs::path output_dir;       // empty: default_output_dir()

  ModelConfig model;
  TrainConfig train;
  AdaptConfig adapt;
  // Pseudo-labeling runs on LN with its own rate (LN default when unset).
  std::optional<double> sdpl_learning_rate;

  std::vector<Method> methods{Method::None, Method::Sdpl, Method::Suta};
  // Sweep axes; an empty axis takes its single value from `adapt`.
  std::vector<double> alphas;
  std::vector<double> temperatures;
  std::vector<std::size_t> iterations;
  std::vector<Selection> selections;
  std::vector<double> learning_rates;

  bool curves = false;
  bool traces = false;
  std::vector<std::size_t> length_thresholds{40};
  std::size_t jobs = 1;
  std::uint64_t seed = 0;

  fs::path output() const;
};

// Trains on train_corpus (held-out WER per epoch when heldout_corpus is set),
// writes model_path and <out>/train_log.csv.
TrainResult cmd_train(const ExperimentConfig& config);

// Every corpus x every method; writes results.csv, results.json and
// utterances.csv, plus traces.json when traces are on.
std::vector<ResultRow> cmd_adapt(const ExperimentConfig& config);

// Cross product of the sweep axes for each non-baseline method; writes
// sweep.csv, and curves.csv when curves are on.
std::vector<ResultRow> cmd_sweep(const ExperimentConfig& config);

// Reads utterances_path, writes buckets.csv.
std::vector<BucketRow> cmd_length_analysis(const ExperimentConfig& config);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace suta::harness
