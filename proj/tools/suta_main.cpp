// suta: train a source model, generate corpora, and run test-time adaptation
// experiments. Every subcommand writes into --out (default $SUTA_OUTPUT_DIR or
// ./suta_out). On failure a one-line JSON error record goes to stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "suta/errors.hpp"
#include "suta/harness.hpp"

namespace {

using namespace suta;
using namespace suta::harness;

enum Exit { kOk = 0, kUsage = 64, kData = 65, kContract = 66, kInternal = 70 };

int report(const char* kind, const std::string& message, const std::string& record, int code) {
  nlohmann::ordered_json j;
  j["error"]["kind"] = kind;
  j["error"]["message"] = message;
  if (!record.empty()) j["error"]["record"] = record;
  std::cerr << j.dump() << "\n";
  return code;
}

void print_rows(const std::vector<ResultRow>& rows) {
  for (const auto& r : rows) {
    std::printf("%-24s %-5s", r.corpus_tag.c_str(), to_string(r.point.method));
    std::printf("  WER %6s%%", format_number(100.0 * r.wer.wer()).c_str());
    if (r.werr) std::printf("  WERR %7s%%", format_number(100.0 * *r.werr).c_str());
    std::printf("\n");
  }
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& n : names) out.push_back(parse_method(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-utterance test-time adaptation for CTC models"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string out_dir;
  std::string params = "ln+feat";
  std::vector<std::string> methods{"none", "sdpl", "suta"};
  double lr = -1.0, sdpl_lr = -1.0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", out_dir, "Output directory (default $SUTA_OUTPUT_DIR or ./suta_out)");
    sub->add_option("--seed", cfg.seed, "Seed")->capture_default_str();
  };
  // gen-corpus
  CorpusSpec spec;
  std::string corpus_out;
  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  gen->add_option("--output", corpus_out, "Corpus file to write")->required();
  gen->add_option("--count", spec.count)->capture_default_str();
  gen->add_option("--seed", spec.seed)->capture_default_str();
  gen->add_option("--delta", spec.delta, "Additive Gaussian noise level")->capture_default_str();
  gen->add_option("--jitter", spec.template_jitter)->capture_default_str();
  gen->add_option("--min-words", spec.min_words)->capture_default_str();
  gen->add_option("--max-words", spec.max_words)->capture_default_str();
  gen->add_option("--id-prefix", spec.id_prefix)->capture_default_str();
  gen->add_option("--tag", spec.domain_tag)->capture_default_str();
  gen->add_option("--prototype-seed", spec.prototype_seed)->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train a source model with CTC");
  train->add_option("--train", cfg.train_corpus, "Training corpus")->required();
  train->add_option("--heldout", cfg.heldout_corpus, "Held-out corpus (WER per epoch)");
  train->add_option("--model", cfg.model_path, "Checkpoint to write")->required();
  train->add_option("--epochs", cfg.train.epochs)->capture_default_str();
  train->add_option("--lr", cfg.train.learning_rate)->capture_default_str();
  train->add_option("--batch", cfg.train.batch_size)->capture_default_str();
  train->add_option("--weight-decay", cfg.train.weight_decay)->capture_default_str();
  train->add_option("--kernel-width", cfg.model.kernel_width)->capture_default_str();
  train->add_option("--hidden", cfg.model.hidden_dim)->capture_default_str();
  common(train);

  // adapt
  auto* adapt_cmd = app.add_subcommand("adapt", "Adapt every utterance of one or more corpora");
  // sweep
  auto* sweep = app.add_subcommand("sweep", "Grid over alpha, temperature, iterations, params and rate");

  for (auto* sub : {adapt_cmd, sweep}) {
    sub->add_option("--model", cfg.model_path, "Checkpoint")->required();
    sub->add_option("--corpus", cfg.corpora, "Corpus file (repeatable)")->required();
    sub->add_option("--method", methods, "Methods: none, suta, sdpl")->delimiter(',')->capture_default_str();
    sub->add_option("--sdpl-lr", sdpl_lr, "Pseudo-labeling learning rate (default: the LN rate)");
    sub->add_option("--jobs", cfg.jobs, "Worker threads (0: all cores)")->capture_default_str();
    common(sub);
  }
  adapt_cmd->add_option("--alpha", cfg.adapt.alpha, "Entropy weight")->capture_default_str();
  adapt_cmd->add_option("--temperature", cfg.adapt.temperature)->capture_default_str();
  adapt_cmd->add_option("--iters", cfg.adapt.iterations)->capture_default_str();
  adapt_cmd->add_option("--params", params, "ln, feat, ln+feat or all")->capture_default_str();
  adapt_cmd->add_option("--lr", lr, "Learning rate (default depends on --params)");
  adapt_cmd->add_flag("--traces", cfg.traces, "Write per-iteration traces");

  std::vector<std::string> sweep_params;
  sweep->add_option("--alpha", cfg.alphas, "Values, comma separated")->delimiter(',');
  sweep->add_option("--temperature", cfg.temperatures)->delimiter(',');
  sweep->add_option("--iters", cfg.iterations)->delimiter(',');
  sweep->add_option("--params", sweep_params)->delimiter(',');
  sweep->add_option("--lr", cfg.learning_rates)->delimiter(',');
  sweep->add_flag("--curves", cfg.curves, "Write per-iteration WER curves");

  // length-analysis
  auto* length = app.add_subcommand("length-analysis", "WERR by utterance duration from an adapt run");
  length->add_option("--utterances", cfg.utterances_path, "utterances.csv written by adapt")->required();
  length->add_option("--threshold", cfg.length_thresholds, "Bucket edges in frames")
      ->delimiter(',')
      ->capture_default_str();
  length->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", e.what(), "", kUsage);
  }

  try {
    cfg.output_dir = out_dir;
    if (*gen) {
      const auto corpus = generate_corpus(spec);
      save_corpus(corpus_out, corpus);
      std::printf("wrote %zu utterances to %s\n", corpus.size(), corpus_out.c_str());
    } else if (*train) {
      const auto result = cmd_train(cfg);
      const auto& last = result.log.back();
      std::printf("epochs %zu  final loss %s", result.log.size(), format_number(last.mean_loss).c_str());
      if (last.heldout_wer) std::printf("  held-out WER %s%%", format_number(100.0 * *last.heldout_wer).c_str());
      std::printf("\n");
    } else if (*adapt_cmd || *sweep) {
      cfg.methods = parse_methods(methods);
      if (sdpl_lr > 0.0) cfg.sdpl_learning_rate = sdpl_lr;
      if (*adapt_cmd) {
        cfg.adapt.selection = parse_selection(params);
        if (lr > 0.0) cfg.adapt.learning_rate = lr;
        validate(cfg.adapt);
        print_rows(cmd_adapt(cfg));
      } else {
        for (const auto& p : sweep_params) cfg.selections.push_back(parse_selection(p));
        print_rows(cmd_sweep(cfg));
      }
    } else if (*length) {
      for (const auto& b : cmd_length_analysis(cfg)) {
        std::printf("%-24s %-5s [%zu, %s) n=%zu", b.corpus_tag.c_str(), to_string(b.point.method), b.min_frames,
                    b.max_frames ? std::to_string(*b.max_frames).c_str() : "inf", b.utterances);
        if (b.werr) std::printf("  WERR %s%%", format_number(100.0 * *b.werr).c_str());
        std::printf("\n");
      }
    }
  } catch (const FormatError& e) {
    return report("format_error", e.what(), e.record(), kData);
  } catch (const DataError& e) {
    return report("data_error", e.what(), "", kData);
  } catch (const ContractViolation& e) {
    return report("contract_violation", e.what(), "", kContract);
  } catch (const std::exception& e) {
    return report("internal", e.what(), "", kInternal);
  }
  return kOk;
}
