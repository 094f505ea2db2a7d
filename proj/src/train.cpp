#include "suta/train.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "suta/errors.hpp"
#include "suta/losses.hpp"
#include "suta/optim.hpp"

namespace suta {
namespace {

std::vector<std::vector<std::size_t>> encode_targets(const ModelState& model, const Corpus& corpus) {
  std::vector<std::vector<std::size_t>> targets;
  targets.reserve(corpus.size());
  for (const auto& utt : corpus) {
    std::vector<std::size_t> tokens;
    try {
      tokens = encode(utt.transcript);
    } catch (const DataError& e) {
      throw DataError("utterance '" + utt.id + "': " + e.what());
    }
    for (std::size_t t : tokens) {
      if (t >= model.config.vocab_size || t == model.config.blank_index)
        throw DataError("utterance '" + utt.id + "': token outside the model vocabulary");
    }
    targets.push_back(std::move(tokens));
  }
  return targets;
}

}  // namespace

TrainResult train_source(const ModelState& model, const Corpus& corpus, const TrainConfig& config,
                         const Corpus* heldout) {
  SUTA_REQUIRE(!corpus.empty(), "train_source: corpus is empty");
  SUTA_REQUIRE(config.batch_size >= 1, "train_source: batch size must be >= 1");
  const auto targets = encode_targets(model, corpus);

  TrainResult result;
  result.model = model;
  ModelState& m = result.model;
  apply_partition(m, Selection::All);

  const AdamWConfig opt{config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay};
  OptState state;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::map<std::size_t, Tensor> batch_grads;
      for (std::size_t k = start; k < end; ++k) {
        const auto& utt = corpus[order[k]];
        auto fp = forward(m, utt.features);
        grad::NodeId loss;
        try {
          loss = losses::ctc_loss(fp.graph, fp.graph.log_softmax_rows(fp.logits), targets[order[k]],
                                  m.config.blank_index);
        } catch (const DataError& e) {
          throw DataError("utterance '" + utt.id + "': " + e.what());
        }
        loss_sum += fp.graph.value(loss).item();
        for (auto& [idx, gt] : fp.param_grads(loss)) {
          auto [it, fresh] = batch_grads.try_emplace(idx, std::move(gt));
          if (!fresh)
            for (std::size_t i = 0; i < gt.size(); ++i) it->second.values[i] += gt.values[i];
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& [idx, gt] : batch_grads)
        for (double& v : gt.values) v *= inv;
      adamw_step(m, batch_grads, state, opt);
    }

    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.mean_loss = loss_sum / static_cast<double>(corpus.size());
    if (heldout && !heldout->empty()) entry.heldout_wer = evaluate(m, *heldout).wer();
    result.log.push_back(entry);
  }

  for (std::size_t i = 0; i < m.params.size(); ++i) m.params[i].trainable = model.params[i].trainable;
  return result;
}

WerReport evaluate(const ModelState& model, const Corpus& corpus) {
  WerReport total;
  for (const auto& utt : corpus) {
    total += wer(utt.transcript, greedy_ctc_decode(logits(model, utt.features), model.config.blank_index));
  }
  return total;
}

}  // namespace suta
