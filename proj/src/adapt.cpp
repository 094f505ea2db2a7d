#include "suta/adapt.hpp"

#include <string>

#include "suta/errors.hpp"

namespace suta {
namespace {

void attach_wer(TraceRecord& record, const Utterance& utterance) {
  if (!utterance.transcript.empty()) record.wer = wer(utterance.transcript, record.hypothesis);
}

// Losses and hypothesis of the current model, recorded without updating.
TraceRecord observe(const ForwardPass& fp, const losses::CombinedNodes& nodes,
                    std::size_t iteration, std::size_t blank) {
  TraceRecord r;
  r.iteration = iteration;
  r.entropy = fp.graph.value(nodes.entropy).item();
  r.mcc = fp.graph.value(nodes.mcc).item();
  r.total = fp.graph.value(nodes.total).item();
  r.retained_frames = nodes.retained_frames;
  r.frames = nodes.frames;
  r.hypothesis = greedy_ctc_decode(fp.graph.value(fp.logits), blank);
  return r;
}

ModelState prepare(const ModelState& source, const Utterance& utterance, const AdaptConfig& config) {
  validate(config);
  if (output_frames(source.config, utterance.duration_frames()) == 0)
    throw DataError("utterance '" + utterance.id + "' is too short to produce any output frame");
  return partition_params(snapshot(source), config.selection);
}

}  // namespace

const char* to_string(Method method) {
  switch (method) {
    case Method::None: return "none";
    case Method::Suta: return "suta";
    case Method::Sdpl: return "sdpl";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "none") return Method::None;
  if (text == "suta") return Method::Suta;
  if (text == "sdpl") return Method::Sdpl;
  throw ContractViolation("unknown method '" + std::string(text) + "'");
}

double default_learning_rate(Selection selection) {
  switch (selection) {
    case Selection::Ln: return 2e-4;
    case Selection::Feat:
    case Selection::LnFeat: return 2e-5;
    case Selection::All: return 1e-6;
  }
  return 2e-5;
}

double AdaptConfig::effective_learning_rate() const {
  return learning_rate.value_or(default_learning_rate(selection));
}

AdamWConfig AdaptConfig::optimizer() const {
  return {effective_learning_rate(), beta1, beta2, epsilon, weight_decay};
}

losses::SutaLossConfig AdaptConfig::loss() const {
  return {alpha, temperature, vocab::kBlank, entropy_norm};
}

void validate(const AdaptConfig& config) {
  SUTA_REQUIRE(config.alpha >= 0.0 && config.alpha <= 1.0, "adapt: alpha must lie in [0, 1]");
  SUTA_REQUIRE(config.temperature >= 1.0, "adapt: temperature must be >= 1");
  SUTA_REQUIRE(config.effective_learning_rate() > 0.0, "adapt: learning rate must be positive");
  SUTA_REQUIRE(config.weight_decay >= 0.0, "adapt: weight decay must be nonnegative");
  SUTA_REQUIRE(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0,
               "adapt: AdamW betas must lie in [0, 1)");
  if (config.method == Method::Sdpl && config.selection != Selection::Ln &&
      !config.allow_any_sdpl_selection) {
    throw ContractViolation(std::string("adapt: pseudo-labeling runs on LN parameters only (got ") +
                            to_string(config.selection) +
                            "); set allow_any_sdpl_selection to override");
  }
}

AdaptOutcome suta_adapt(const ModelState& source, const Utterance& utterance,
                        const AdaptConfig& config) {
  AdaptOutcome out;
  out.adapted = prepare(source, utterance, config);
  ModelState& model = out.adapted;
  const auto loss_config = config.loss();
  const auto opt = config.optimizer();
  OptState state;

  for (std::size_t t = 0; t <= config.iterations; ++t) {
    auto fp = forward(model, utterance.features);
    const auto nodes = losses::combined_loss(fp.graph, fp.logits, loss_config);
    TraceRecord record = observe(fp, nodes, t, model.config.blank_index);
    attach_wer(record, utterance);
    out.trace.records.push_back(std::move(record));
    if (t == config.iterations) break;
    adamw_step(model, fp.param_grads(nodes.total), state, opt);
  }
  out.hypothesis = out.trace.records.back().hypothesis;
  return out;
}

AdaptOutcome sdpl_adapt(const ModelState& source, const Utterance& utterance,
                        const AdaptConfig& config) {
  AdaptOutcome out;
  out.adapted = prepare(source, utterance, config);
  ModelState& model = out.adapted;
  const auto loss_config = config.loss();
  const auto opt = config.optimizer();
  const std::size_t blank = model.config.blank_index;
  OptState state;

  for (std::size_t t = 0; t <= config.iterations; ++t) {
    auto fp = forward(model, utterance.features);
    const auto nodes = losses::combined_loss(fp.graph, fp.logits, loss_config);
    TraceRecord record = observe(fp, nodes, t, blank);
    attach_wer(record, utterance);
    const bool last = t == config.iterations;

    // Greedy path collapsed to a pseudo label, refreshed every iteration.
    const auto pseudo = greedy_ctc_tokens(fp.graph.value(fp.logits), blank);
    if (pseudo.empty()) {
      record.update_skipped = !last;
      out.trace.records.push_back(std::move(record));
      if (last) break;
      continue;
    }
    const auto ctc = losses::ctc_loss(fp.graph, fp.graph.log_softmax_rows(fp.logits), pseudo, blank);
    record.pseudo_label_loss = fp.graph.value(ctc).item();
    out.trace.records.push_back(std::move(record));
    if (last) break;
    adamw_step(model, fp.param_grads(ctc), state, opt);
  }
  out.hypothesis = out.trace.records.back().hypothesis;
  return out;
}

AdaptOutcome adapt(const ModelState& source, const Utterance& utterance, const AdaptConfig& config) {
  switch (config.method) {
    case Method::Suta: return suta_adapt(source, utterance, config);
    case Method::Sdpl: return sdpl_adapt(source, utterance, config);
    case Method::None: {
      AdaptConfig frozen = config;
      frozen.iterations = 0;
      frozen.method = Method::Suta;
      auto out = suta_adapt(source, utterance, frozen);
      return out;
    }
  }
  throw ContractViolation("adapt: unknown method");
}

}  // namespace suta
