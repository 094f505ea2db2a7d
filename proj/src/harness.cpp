#include "suta/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "suta/errors.hpp"

namespace suta::harness {

using nlohmann::ordered_json;

std::string format_number(double value) {
  if (value == 0.0) return "0";  // no "-0"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

fs::path default_output_dir() {
  const char* env = std::getenv("SUTA_OUTPUT_DIR");
  if (env != nullptr && *env != '\0') return fs::path(env);
  return fs::path("suta_out");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------- running

std::vector<UtteranceResult> run_corpus(const ModelState& model, const Corpus& corpus,
                                        const AdaptConfig& config, std::size_t jobs,
                                        bool keep_traces) {
  validate(config);
  {
    std::set<std::string> ids;
    for (const auto& u : corpus)
      if (!ids.insert(u.id).second) throw DataError("duplicate utterance id '" + u.id + "'");
  }
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, std::max<std::size_t>(corpus.size(), 1));

  std::vector<UtteranceResult> slots(corpus.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::size_t first_error_index = corpus.size();
  std::mutex error_mutex;

  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= corpus.size() || failed.load()) return;
      try {
        const auto& u = corpus[i];
        auto out = adapt(model, u, config);
        UtteranceResult r;
        r.id = u.id;
        r.frames = u.duration_frames();
        r.wer = wer(u.transcript, out.hypothesis);
        const auto& last = out.trace.records.back();
        r.retained_fraction =
            last.frames == 0 ? 0.0 : static_cast<double>(last.retained_frames) / static_cast<double>(last.frames);
        if (keep_traces) r.trace = std::move(out.trace);
        slots[i] = std::move(r);
      } catch (...) {
        // Keep the failure of the earliest utterance so the report does not
        // depend on scheduling.
        std::lock_guard lock(error_mutex);
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
        failed.store(true);
      }
    }
  };

  if (jobs == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::size_t k = 0; k < jobs; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  // Merge by id: order follows the corpus regardless of completion order.
  std::map<std::string, UtteranceResult> by_id;
  for (auto& r : slots) by_id.emplace(r.id, std::move(r));
  std::vector<UtteranceResult> results;
  results.reserve(corpus.size());
  for (const auto& u : corpus) results.push_back(std::move(by_id.at(u.id)));
  return results;
}

WerReport aggregate(const std::vector<UtteranceResult>& results) {
  WerReport total;
  for (const auto& r : results) total += r.wer;
  return total;
}

RunPoint RunPoint::of(const AdaptConfig& config) {
  RunPoint p;
  p.method = config.method;
  if (config.method == Method::None) return p;
  p.iterations = config.iterations;
  p.selection = config.selection;
  p.learning_rate = config.effective_learning_rate();
  if (config.method == Method::Suta) {
    p.alpha = config.alpha;
    p.temperature = config.temperature;
  }
  return p;
}

AdaptConfig RunPoint::to_config(const AdaptConfig& base) const {
  AdaptConfig c = base;
  c.method = method;
  if (method == Method::None) {
    c.iterations = 0;
    return c;
  }
  c.iterations = iterations;
  c.selection = selection;
  c.learning_rate = learning_rate;
  if (method == Method::Suta) {
    c.alpha = alpha;
    c.temperature = temperature;
  }
  return c;
}

ResultRow make_row(const std::string& corpus_tag, const RunPoint& point,
                   const std::vector<UtteranceResult>& results, std::optional<double> baseline_wer) {
  ResultRow row;
  row.corpus_tag = corpus_tag;
  row.point = point;
  row.wer = aggregate(results);
  row.utterances = results.size();
  double retained = 0.0;
  for (const auto& r : results) retained += r.retained_fraction;
  row.retained_fraction = results.empty() ? 0.0 : retained / static_cast<double>(results.size());
  if (baseline_wer && *baseline_wer > 0.0) row.werr = werr(*baseline_wer, row.wer.wer());
  return row;
}

// ---------------------------------------------------------------- tables

namespace {

constexpr const char* kPointHeader = "corpus_tag,method,alpha,temperature,iterations,params,learning_rate";

std::string point_fields(const std::string& tag, const RunPoint& p) {
  std::string s = tag + "," + to_string(p.method) + ",";
  const bool suta = p.method == Method::Suta;
  const bool adapts = p.method != Method::None;
  s += (suta ? format_number(p.alpha) : "") + ",";
  s += (suta ? format_number(p.temperature) : "") + ",";
  s += std::to_string(adapts ? p.iterations : 0) + ",";
  s += std::string(adapts ? to_string(p.selection) : "") + ",";
  s += adapts ? format_number(p.learning_rate) : "";
  return s;
}

ordered_json point_json(const std::string& tag, const RunPoint& p) {
  ordered_json j;
  j["corpus_tag"] = tag;
  j["method"] = to_string(p.method);
  if (p.method == Method::Suta) {
    j["alpha"] = p.alpha;
    j["temperature"] = p.temperature;
  }
  j["iterations"] = p.method == Method::None ? 0 : p.iterations;
  if (p.method != Method::None) {
    j["params"] = to_string(p.selection);
    j["learning_rate"] = p.learning_rate;
  }
  return j;
}

// JSON numbers carry the same six significant digits as the CSV tables.
double rounded(double v) { return std::stod(format_number(v)); }

std::string percent(double fraction) { return format_number(100.0 * fraction); }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

bool same_point(const RunPoint& a, const RunPoint& b) {
  return point_fields("", a) == point_fields("", b);
}

}  // namespace

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string s = std::string(kPointHeader) +
                  ",utterances,ref_words,substitutions,deletions,insertions,wer_pct,werr_pct,retained_fraction\n";
  for (const auto& r : rows) {
    s += point_fields(r.corpus_tag, r.point) + ",";
    s += std::to_string(r.utterances) + "," + std::to_string(r.wer.ref_words) + ",";
    s += std::to_string(r.wer.substitutions) + "," + std::to_string(r.wer.deletions) + "," +
         std::to_string(r.wer.insertions) + ",";
    s += percent(r.wer.wer()) + ",";
    s += (r.werr ? percent(*r.werr) : "") + ",";
    s += format_number(r.retained_fraction) + "\n";
  }
  return s;
}

std::string results_json(const std::vector<ResultRow>& rows) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json j = point_json(r.corpus_tag, r.point);
    j["utterances"] = r.utterances;
    j["ref_words"] = r.wer.ref_words;
    j["substitutions"] = r.wer.substitutions;
    j["deletions"] = r.wer.deletions;
    j["insertions"] = r.wer.insertions;
    j["wer_pct"] = rounded(100.0 * r.wer.wer());
    j["werr_pct"] = r.werr ? ordered_json(rounded(100.0 * *r.werr)) : ordered_json(nullptr);
    j["retained_fraction"] = rounded(r.retained_fraction);
    arr.push_back(std::move(j));
  }
  ordered_json root;
  root["rows"] = std::move(arr);
  return root.dump(2) + "\n";
}

std::string utterances_csv(const std::vector<UtteranceRow>& rows) {
  std::string s = std::string(kPointHeader) + ",id,frames,ref_words,substitutions,deletions,insertions\n";
  for (const auto& r : rows) {
    s += point_fields(r.corpus_tag, r.point) + "," + r.id + "," + std::to_string(r.frames) + ",";
    s += std::to_string(r.wer.ref_words) + "," + std::to_string(r.wer.substitutions) + "," +
         std::to_string(r.wer.deletions) + "," + std::to_string(r.wer.insertions) + "\n";
  }
  return s;
}

std::vector<UtteranceRow> parse_utterances_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("utterance table is empty");
  const std::string header = std::string(kPointHeader) + ",id,frames,ref_words,substitutions,deletions,insertions";
  if (split(line, ',') != split(header, ',')) throw FormatError("unexpected utterance table header");

  auto to_size = [](const std::string& f, const std::string& rec) -> std::size_t {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(f, &pos);
    } catch (const std::exception&) {
      throw FormatError("bad integer '" + f + "'", rec);
    }
    if (pos != f.size()) throw FormatError("bad integer '" + f + "'", rec);
    return static_cast<std::size_t>(v);
  };
  auto to_double = [](const std::string& f, const std::string& rec) -> double {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(f, &pos);
    } catch (const std::exception&) {
      throw FormatError("bad number '" + f + "'", rec);
    }
    if (pos != f.size()) throw FormatError("bad number '" + f + "'", rec);
    return v;
  };

  std::vector<UtteranceRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line, ',');
    const std::string rec = f.size() > 7 ? f[7] : "line " + std::to_string(line_no);
    if (f.size() != 13) throw FormatError("expected 13 fields", rec);
    UtteranceRow r;
    r.corpus_tag = f[0];
    try {
      r.point.method = parse_method(f[1]);
      if (r.point.method == Method::Suta) {
        r.point.alpha = to_double(f[2], rec);
        r.point.temperature = to_double(f[3], rec);
      }
      r.point.iterations = to_size(f[4], rec);
      if (r.point.method != Method::None) {
        r.point.selection = parse_selection(f[5]);
        r.point.learning_rate = to_double(f[6], rec);
      }
    } catch (const ContractViolation& e) {
      throw FormatError(e.what(), rec);
    }
    r.id = f[7];
    r.frames = to_size(f[8], rec);
    r.wer.ref_words = to_size(f[9], rec);
    r.wer.substitutions = to_size(f[10], rec);
    r.wer.deletions = to_size(f[11], rec);
    r.wer.insertions = to_size(f[12], rec);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string curves_csv(const std::string& corpus_tag, const RunPoint& point,
                       const std::vector<UtteranceResult>& results, bool header) {
  std::string s;
  if (header) s = std::string(kPointHeader) + ",id,iteration,ref_words,errors,entropy,mcc,total_loss\n";
  for (const auto& r : results) {
    if (!r.trace) throw ContractViolation("curves_csv: result '" + r.id + "' has no trace");
    for (const auto& rec : r.trace->records) {
      const WerReport w = rec.wer.value_or(WerReport{});
      s += point_fields(corpus_tag, point) + "," + r.id + "," + std::to_string(rec.iteration) + ",";
      s += std::to_string(w.ref_words) + "," + std::to_string(w.errors()) + ",";
      s += format_number(rec.entropy) + "," + format_number(rec.mcc) + "," + format_number(rec.total) + "\n";
    }
  }
  return s;
}

std::string traces_json(const std::string& corpus_tag, const RunPoint& point,
                        const std::vector<UtteranceResult>& results) {
  ordered_json root = point_json(corpus_tag, point);
  ordered_json utts = ordered_json::array();
  for (const auto& r : results) {
    if (!r.trace) throw ContractViolation("traces_json: result '" + r.id + "' has no trace");
    ordered_json u;
    u["id"] = r.id;
    u["frames"] = r.frames;
    ordered_json recs = ordered_json::array();
    for (const auto& rec : r.trace->records) {
      ordered_json j;
      j["iteration"] = rec.iteration;
      j["entropy"] = rounded(rec.entropy);
      j["mcc"] = rounded(rec.mcc);
      j["total"] = rounded(rec.total);
      j["retained_frames"] = rec.retained_frames;
      j["frames"] = rec.frames;
      if (rec.pseudo_label_loss) j["pseudo_label_loss"] = rounded(*rec.pseudo_label_loss);
      j["update_skipped"] = rec.update_skipped;
      j["hypothesis"] = rec.hypothesis.text();
      if (rec.wer) {
        j["ref_words"] = rec.wer->ref_words;
        j["errors"] = rec.wer->errors();
      }
      recs.push_back(std::move(j));
    }
    u["records"] = std::move(recs);
    utts.push_back(std::move(u));
  }
  root["utterances"] = std::move(utts);
  return root.dump(2) + "\n";
}

std::vector<WerReport> iteration_curve(const std::vector<UtteranceResult>& results) {
  std::vector<WerReport> curve;
  for (const auto& r : results) {
    if (!r.trace) throw ContractViolation("iteration_curve: result '" + r.id + "' has no trace");
    const auto& recs = r.trace->records;
    if (curve.empty()) curve.resize(recs.size());
    if (recs.size() != curve.size()) throw ContractViolation("iteration_curve: trace lengths differ");
    for (std::size_t t = 0; t < recs.size(); ++t) {
      if (!recs[t].wer) throw ContractViolation("iteration_curve: record without WER");
      curve[t] += *recs[t].wer;
    }
  }
  return curve;
}

// ---------------------------------------------------------------- buckets

std::vector<BucketRow> length_buckets(const std::vector<UtteranceRow>& rows,
                                      const std::vector<std::size_t>& thresholds) {
  for (std::size_t k = 1; k < thresholds.size(); ++k)
    SUTA_REQUIRE(thresholds[k] > thresholds[k - 1], "length_buckets: thresholds must be strictly ascending");

  auto bucket_of = [&](std::size_t frames) {
    return static_cast<std::size_t>(std::upper_bound(thresholds.begin(), thresholds.end(), frames) -
                                    thresholds.begin());
  };

  // Baselines per corpus tag, by utterance id.
  std::map<std::string, std::map<std::string, const UtteranceRow*>> baseline;
  for (const auto& r : rows) {
    if (r.point.method != Method::None) continue;
    if (!baseline[r.corpus_tag].emplace(r.id, &r).second)
      throw DataError("duplicate baseline utterance '" + r.id + "' in corpus '" + r.corpus_tag + "'");
  }

  // Adapted runs in first-appearance order.
  std::vector<std::pair<std::string, RunPoint>> runs;
  for (const auto& r : rows) {
    if (r.point.method == Method::None) continue;
    const bool seen = std::any_of(runs.begin(), runs.end(), [&](const auto& run) {
      return run.first == r.corpus_tag && same_point(run.second, r.point);
    });
    if (!seen) runs.emplace_back(r.corpus_tag, r.point);
  }

  std::vector<BucketRow> out;
  for (const auto& [tag, point] : runs) {
    const auto base_it = baseline.find(tag);
    if (base_it == baseline.end()) throw DataError("no method=none rows for corpus '" + tag + "'");
    std::vector<BucketRow> buckets(thresholds.size() + 1);
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      buckets[b].corpus_tag = tag;
      buckets[b].point = point;
      buckets[b].min_frames = b == 0 ? 0 : thresholds[b - 1];
      if (b < thresholds.size()) buckets[b].max_frames = thresholds[b];
    }
    std::set<std::string> ids;
    for (const auto& r : rows) {
      if (r.corpus_tag != tag || r.point.method == Method::None || !same_point(r.point, point)) continue;
      if (!ids.insert(r.id).second) throw DataError("duplicate utterance '" + r.id + "' in one run");
      const auto b = base_it->second.find(r.id);
      if (b == base_it->second.end()) throw DataError("utterance '" + r.id + "' has no baseline row");
      auto& bucket = buckets[bucket_of(r.frames)];
      ++bucket.utterances;
      bucket.baseline += b->second->wer;
      bucket.adapted += r.wer;
    }
    for (auto& b : buckets) {
      if (b.utterances == 0) continue;
      if (b.baseline.wer() > 0.0) b.werr = werr(b.baseline.wer(), b.adapted.wer());
      out.push_back(std::move(b));
    }
  }
  return out;
}

std::string buckets_csv(const std::vector<BucketRow>& rows) {
  std::string s = std::string(kPointHeader) +
                  ",min_frames,max_frames,utterances,ref_words,baseline_wer_pct,adapted_wer_pct,werr_pct\n";
  for (const auto& r : rows) {
    s += point_fields(r.corpus_tag, r.point) + ",";
    s += std::to_string(r.min_frames) + "," + (r.max_frames ? std::to_string(*r.max_frames) : "") + ",";
    s += std::to_string(r.utterances) + "," + std::to_string(r.adapted.ref_words) + ",";
    s += percent(r.baseline.wer()) + "," + percent(r.adapted.wer()) + ",";
    s += (r.werr ? percent(*r.werr) : "") + "\n";
  }
  return s;
}

// ---------------------------------------------------------------- calibration

ShiftCalibration calibrate_shift(const ModelState& model, const Corpus& clean,
                                 const std::vector<double>& grid, std::uint64_t noise_seed,
                                 std::size_t jobs, const ShiftTargets& targets) {
  SUTA_REQUIRE(!grid.empty(), "calibrate_shift: empty grid");
  SUTA_REQUIRE(std::is_sorted(grid.begin(), grid.end()), "calibrate_shift: grid must be ascending");
  AdaptConfig none;
  none.method = Method::None;

  ShiftCalibration cal;
  cal.clean_wer = aggregate(run_corpus(model, clean, none, jobs)).wer();
  if (cal.clean_wer <= 0.0) throw DataError("calibrate_shift: clean WER is zero, relative degradation undefined");
  for (double delta : grid) {
    const auto noisy = add_gaussian_noise(clean, delta, noise_seed);
    cal.curve.emplace_back(delta, aggregate(run_corpus(model, noisy, none, jobs)).wer());
  }

  // Closest relative degradation to the band centre; the earlier grid value
  // wins ties.
  auto pick = [&](double lo, double hi) {
    const double centre = 0.5 * (lo + hi);
    double best = cal.curve.front().first;
    double best_gap = INFINITY;
    for (const auto& [delta, w] : cal.curve) {
      const double gap = std::abs((w - cal.clean_wer) / cal.clean_wer - centre);
      if (gap < best_gap) {
        best_gap = gap;
        best = delta;
      }
    }
    return best;
  };
  cal.low = pick(targets.low_min, targets.low_max);
  cal.high = pick(targets.high_min, targets.high_max);
  return cal;
}

double select_learning_rate(const ModelState& model, const Corpus& dev, const AdaptConfig& config,
                            std::vector<double> grid, std::size_t jobs) {
  SUTA_REQUIRE(!grid.empty(), "select_learning_rate: empty grid");
  std::sort(grid.begin(), grid.end());
  double best_lr = grid.front();
  std::size_t best_errors = 0;
  bool first = true;
  for (double lr : grid) {
    AdaptConfig c = config;
    c.learning_rate = lr;
    const std::size_t errors = aggregate(run_corpus(model, dev, c, jobs)).errors();
    if (first || errors < best_errors) {
      best_errors = errors;
      best_lr = lr;
      first = false;
    }
  }
  return best_lr;
}

// ---------------------------------------------------------------- commands

fs::path ExperimentConfig::output() const { return output_dir.empty() ? default_output_dir() : output_dir; }

TrainResult cmd_train(const ExperimentConfig& config) {
  if (config.train_corpus.empty()) throw ContractViolation("train: no training corpus given");
  if (config.model_path.empty()) throw ContractViolation("train: no model path given");
  const auto corpus = load_corpus(config.train_corpus);
  std::optional<Corpus> heldout;
  if (!config.heldout_corpus.empty()) heldout = load_corpus(config.heldout_corpus);
  ModelConfig mc = config.model;
  mc.seed = config.seed;
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  auto result = train_source(init_model(mc), corpus, tc, heldout ? &*heldout : nullptr);
  save_checkpoint(config.model_path, result.model);

  std::string log = "epoch,mean_loss,heldout_wer_pct\n";
  for (const auto& e : result.log)
    log += std::to_string(e.epoch) + "," + format_number(e.mean_loss) + "," +
           (e.heldout_wer ? percent(*e.heldout_wer) : "") + "\n";
  write_text(config.output() / "train_log.csv", log);
  return result;
}

namespace {

struct LoadedCorpus {
  std::string tag;
  Corpus corpus;
};

std::vector<LoadedCorpus> load_corpora(const ExperimentConfig& config) {
  if (config.corpora.empty()) throw ContractViolation("no evaluation corpus given");
  std::vector<LoadedCorpus> out;
  std::set<std::string> tags;
  for (const auto& path : config.corpora) {
    LoadedCorpus lc;
    lc.corpus = load_corpus(path);
    if (lc.corpus.empty()) throw DataError("corpus '" + path.string() + "' is empty");
    lc.tag = lc.corpus.front().domain_tag;
    for (const auto& u : lc.corpus)
      if (u.domain_tag != lc.tag) throw DataError("corpus '" + path.string() + "' mixes domain tags at '" + u.id + "'");
    if (!tags.insert(lc.tag).second) throw DataError("two corpora share the domain tag '" + lc.tag + "'");
    out.push_back(std::move(lc));
  }
  return out;
}

AdaptConfig method_config(const ExperimentConfig& config, Method method) {
  AdaptConfig c = config.adapt;
  c.method = method;
  c.seed = config.seed;
  if (method == Method::Sdpl && !c.allow_any_sdpl_selection) {
    c.selection = Selection::Ln;
    c.learning_rate = config.sdpl_learning_rate.value_or(default_learning_rate(Selection::Ln));
  }
  return c;
}

template <typename T>
std::vector<T> axis(const std::vector<T>& values, T fallback) {
  return values.empty() ? std::vector<T>{fallback} : values;
}

void append_utterances(std::vector<UtteranceRow>& rows, const std::string& tag, const RunPoint& point,
                       const std::vector<UtteranceResult>& results) {
  for (const auto& r : results) rows.push_back(UtteranceRow{tag, point, r.id, r.frames, r.wer});
}

}  // namespace

std::vector<ResultRow> cmd_adapt(const ExperimentConfig& config) {
  const auto model = load_checkpoint(config.model_path);
  const auto corpora = load_corpora(config);
  const fs::path out = config.output();

  std::vector<ResultRow> rows;
  std::vector<UtteranceRow> utterances;
  ordered_json traces = ordered_json::array();
  for (const auto& [tag, corpus] : corpora) {
    AdaptConfig none = config.adapt;
    none.method = Method::None;
    const auto base = run_corpus(model, corpus, none, config.jobs);
    const double base_wer = aggregate(base).wer();
    rows.push_back(make_row(tag, RunPoint::of(none), base, base_wer));
    append_utterances(utterances, tag, RunPoint::of(none), base);
    for (Method m : config.methods) {
      if (m == Method::None) continue;
      const auto c = method_config(config, m);
      const auto results = run_corpus(model, corpus, c, config.jobs, config.traces);
      const auto point = RunPoint::of(c);
      rows.push_back(make_row(tag, point, results, base_wer));
      append_utterances(utterances, tag, point, results);
      if (config.traces) traces.push_back(ordered_json::parse(traces_json(tag, point, results)));
    }
  }
  write_text(out / "results.csv", results_csv(rows));
  write_text(out / "results.json", results_json(rows));
  write_text(out / "utterances.csv", utterances_csv(utterances));
  if (config.traces) write_text(out / "traces.json", traces.dump(2) + "\n");
  return rows;
}

std::vector<ResultRow> cmd_sweep(const ExperimentConfig& config) {
  const auto model = load_checkpoint(config.model_path);
  const auto corpora = load_corpora(config);
  const fs::path out = config.output();

  std::vector<ResultRow> rows;
  std::string curves;
  bool curves_header = true;
  for (const auto& [tag, corpus] : corpora) {
    AdaptConfig none = config.adapt;
    none.method = Method::None;
    const auto base = run_corpus(model, corpus, none, config.jobs);
    const double base_wer = aggregate(base).wer();
    rows.push_back(make_row(tag, RunPoint::of(none), base, base_wer));

    for (Method m : config.methods) {
      if (m == Method::None) continue;
      const AdaptConfig seed_config = method_config(config, m);
      const bool sdpl_fixed = m == Method::Sdpl && !seed_config.allow_any_sdpl_selection;
      const auto selections = sdpl_fixed ? std::vector<Selection>{Selection::Ln}
                                         : axis(config.selections, seed_config.selection);
      const auto alphas = m == Method::Suta ? axis(config.alphas, seed_config.alpha) : std::vector<double>{0.0};
      const auto temps =
          m == Method::Suta ? axis(config.temperatures, seed_config.temperature) : std::vector<double>{0.0};
      for (std::size_t n : axis(config.iterations, seed_config.iterations))
        for (Selection sel : selections)
          for (double a : alphas)
            for (double t : temps) {
              AdaptConfig c = seed_config;
              c.iterations = n;
              c.selection = sel;
              if (m == Method::Suta) {
                c.alpha = a;
                c.temperature = t;
              }
              std::vector<double> rates;
              if (sdpl_fixed) {
                rates = {*seed_config.learning_rate};
              } else if (!config.learning_rates.empty()) {
                rates = config.learning_rates;
              } else {
                rates = {config.adapt.learning_rate.value_or(default_learning_rate(sel))};
              }
              for (double lr : rates) {
                c.learning_rate = lr;
                const auto results = run_corpus(model, corpus, c, config.jobs, config.curves);
                const auto point = RunPoint::of(c);
                rows.push_back(make_row(tag, point, results, base_wer));
                if (config.curves) {
                  curves += curves_csv(tag, point, results, curves_header);
                  curves_header = false;
                }
              }
            }
    }
  }
  write_text(out / "sweep.csv", results_csv(rows));
  if (config.curves) write_text(out / "curves.csv", curves);
  return rows;
}

std::vector<BucketRow> cmd_length_analysis(const ExperimentConfig& config) {
  if (config.utterances_path.empty()) throw ContractViolation("length-analysis: no utterance table given");
  const auto rows = parse_utterances_csv(read_text(config.utterances_path));
  auto buckets = length_buckets(rows, config.length_thresholds);
  write_text(config.output() / "buckets.csv", buckets_csv(buckets));
  return buckets;
}

}  // namespace suta::harness
