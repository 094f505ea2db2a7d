#include "suta/model.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "suta/binary_io.hpp"
#include "suta/corpus.hpp"
#include "suta/errors.hpp"

namespace suta {
namespace {

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

bool is_layer_norm(std::string_view name) {
  return starts_with(name, "enc.") && name.find(".ln.") != std::string_view::npos;
}

std::string block(std::size_t k) { return "enc." + std::to_string(k); }

}  // namespace

void validate(const ModelConfig& c) {
  SUTA_REQUIRE(c.feature_dim >= 1, "model: feature_dim must be >= 1");
  SUTA_REQUIRE(c.conv_layers >= 1, "model: need at least one conv layer");
  SUTA_REQUIRE(c.kernel_width >= 1, "model: kernel width must be >= 1");
  SUTA_REQUIRE(c.conv_channels >= 1 && c.hidden_dim >= 1, "model: channel counts must be >= 1");
  SUTA_REQUIRE(c.conv_stride >= 1, "model: conv stride must be >= 1");
  SUTA_REQUIRE(c.encoder_blocks >= 1, "model: need at least one encoder block");
  SUTA_REQUIRE(c.vocab_size >= 2, "model: vocab_size must be >= 2");
  SUTA_REQUIRE(c.blank_index < c.vocab_size, "model: blank index out of range");
  SUTA_REQUIRE(c.ln_eps > 0.0, "model: layer norm eps must be positive");
}

std::size_t output_frames(const ModelConfig& config, std::size_t input_frames) {
  std::size_t len = input_frames;
  const std::size_t pad = (config.kernel_width - 1) / 2;
  for (std::size_t i = 0; i < config.conv_layers; ++i)
    len = grad::conv1d_output_length(len, config.kernel_width, config.conv_stride, pad);
  return len;
}

const char* to_string(Selection selection) {
  switch (selection) {
    case Selection::Ln: return "ln";
    case Selection::Feat: return "feat";
    case Selection::LnFeat: return "ln+feat";
    case Selection::All: return "all";
  }
  return "?";
}

Selection parse_selection(std::string_view text) {
  if (text == "ln" || text == "LN") return Selection::Ln;
  if (text == "feat" || text == "Feat") return Selection::Feat;
  if (text == "ln+feat" || text == "LN+Feat") return Selection::LnFeat;
  if (text == "all" || text == "All") return Selection::All;
  throw ContractViolation("unknown parameter selection '" + std::string(text) + "'");
}

bool selects(Selection selection, std::string_view name) {
  switch (selection) {
    case Selection::Ln: return is_layer_norm(name);
    case Selection::Feat: return starts_with(name, "feat.");
    case Selection::LnFeat: return is_layer_norm(name) || starts_with(name, "feat.");
    case Selection::All: return true;
  }
  return false;
}

const Parameter& ModelState::param(std::string_view name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw ContractViolation("model has no parameter '" + std::string(name) + "'");
}

Parameter& ModelState::param(std::string_view name) {
  return const_cast<Parameter&>(std::as_const(*this).param(name));
}

std::vector<std::string> ModelState::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& p : params)
    if (p.trainable) out.push_back(p.name);
  return out;
}

std::vector<std::string> ModelState::frozen_names() const {
  std::vector<std::string> out;
  for (const auto& p : params)
    if (!p.trainable) out.push_back(p.name);
  return out;
}

ModelState init_model(const ModelConfig& config) {
  validate(config);
  ModelState model;
  model.config = config;
  std::mt19937_64 rng(config.seed);

  auto weight = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    // Uniform with variance 1 / fan_in.
    const double bound = std::sqrt(3.0 / static_cast<double>(rows));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(rows, cols);
    for (double& v : t.values) v = dist(rng);
    model.params.push_back({name, std::move(t), false});
  };
  auto constant = [&](const std::string& name, std::size_t cols, double v) {
    model.params.push_back({name, Tensor(1, cols, v), false});
  };

  std::size_t in = config.feature_dim;
  for (std::size_t i = 0; i < config.conv_layers; ++i) {
    const std::size_t out = i + 1 == config.conv_layers ? config.hidden_dim : config.conv_channels;
    const std::string prefix = "feat.conv" + std::to_string(i);
    weight(prefix + ".weight", config.kernel_width * in, out);
    constant(prefix + ".bias", out, 0.0);
    in = out;
  }
  const std::size_t h = config.hidden_dim;
  for (std::size_t k = 0; k < config.encoder_blocks; ++k) {
    constant(block(k) + ".ln.gamma", h, 1.0);
    constant(block(k) + ".ln.beta", h, 0.0);
    weight(block(k) + ".fc1.weight", h, h);
    constant(block(k) + ".fc1.bias", h, 0.0);
    weight(block(k) + ".fc2.weight", h, h);
    constant(block(k) + ".fc2.bias", h, 0.0);
  }
  constant("enc.final.ln.gamma", h, 1.0);
  constant("enc.final.ln.beta", h, 0.0);
  weight("head.weight", h, config.vocab_size);
  constant("head.bias", config.vocab_size, 0.0);
  return model;
}

void apply_partition(ModelState& model, Selection selection) {
  for (auto& p : model.params) p.trainable = selects(selection, p.name);
}

ModelState partition_params(const ModelState& model, Selection selection) {
  ModelState out = model;
  apply_partition(out, selection);
  return out;
}

ModelState snapshot(const ModelState& model) { return model; }

void restore(ModelState& model, const ModelState& snap) {
  SUTA_REQUIRE(model.params.size() == snap.params.size(), "restore: parameter count differs");
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto& src = snap.params[i];
    auto& dst = model.params[i];
    SUTA_REQUIRE(src.name == dst.name && src.value.same_shape(dst.value),
                 "restore: parameter '" + dst.name + "' does not match the snapshot");
  }
  model = snap;
}

namespace {

void hash_bytes(std::string& bytes, const Parameter& p) {
  io::put_str(bytes, p.name);
  io::put_u64(bytes, p.value.rows);
  io::put_u64(bytes, p.value.cols);
  for (double v : p.value.values) io::put_f64(bytes, v);
}

}  // namespace

std::uint64_t parameter_hash(const ModelState& model) {
  std::string bytes;
  for (const auto& p : model.params) hash_bytes(bytes, p);
  return fnv1a(bytes);
}

std::uint64_t parameter_hash(const ModelState& model, const std::vector<std::string>& names) {
  std::string bytes;
  for (const auto& n : names) hash_bytes(bytes, model.param(n));
  return fnv1a(bytes);
}

std::map<std::size_t, Tensor> ForwardPass::param_grads(grad::NodeId loss) const {
  auto leaf_grads = graph.backward(loss);
  std::map<std::size_t, Tensor> out;
  for (std::size_t i = 0; i < param_nodes.size(); ++i) {
    auto it = leaf_grads.find(param_nodes[i]);
    if (it != leaf_grads.end()) out.emplace(i, std::move(it->second));
  }
  return out;
}

ForwardPass forward(const ModelState& model, const Tensor& features) {
  const ModelConfig& c = model.config;
  SUTA_REQUIRE(features.cols == c.feature_dim,
               "forward: expected " + std::to_string(c.feature_dim) + " feature columns, got " +
                   std::to_string(features.cols));
  SUTA_REQUIRE(features.rows >= 1, "forward: utterance has no frames");

  ForwardPass fp;
  auto& g = fp.graph;
  for (const auto& p : model.params) fp.param_nodes.push_back(g.input(p.value, p.trainable));
  std::size_t next = 0;
  auto take = [&] { return fp.param_nodes.at(next++); };

  const std::size_t pad = (c.kernel_width - 1) / 2;
  grad::NodeId h = g.input(features);
  for (std::size_t i = 0; i < c.conv_layers; ++i) {
    const auto w = take();
    const auto b = take();
    h = g.gelu(g.conv1d(h, w, b, c.conv_stride, pad));
  }
  for (std::size_t k = 0; k < c.encoder_blocks; ++k) {
    const auto gamma = take();
    const auto beta = take();
    const auto w1 = take();
    const auto b1 = take();
    const auto w2 = take();
    const auto b2 = take();
    const auto normed = g.layer_norm(h, gamma, beta, c.ln_eps);
    const auto inner = g.gelu(g.add(g.matmul(normed, w1), b1));
    h = g.add(h, g.add(g.matmul(inner, w2), b2));
  }
  const auto gamma = take();
  const auto beta = take();
  h = g.layer_norm(h, gamma, beta, c.ln_eps);
  const auto hw = take();
  const auto hb = take();
  fp.logits = g.add(g.matmul(h, hw), hb);
  SUTA_REQUIRE(next == model.params.size(), "forward: parameter layout does not match config");
  return fp;
}

Tensor logits(const ModelState& model, const Tensor& features) {
  // Frozen copy so no gradient bookkeeping is recorded.
  ModelState frozen = model;
  for (auto& p : frozen.params) p.trainable = false;
  auto fp = forward(frozen, features);
  return fp.graph.value(fp.logits);
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& model) {
  nlohmann::ordered_json j;
  j["format"] = "suta-checkpoint";
  j["version"] = kCheckpointVersion;
  const auto& c = model.config;
  j["config"] = {{"feature_dim", c.feature_dim},       {"conv_layers", c.conv_layers},
                 {"kernel_width", c.kernel_width},     {"conv_channels", c.conv_channels},
                 {"conv_stride", c.conv_stride},       {"encoder_blocks", c.encoder_blocks},
                 {"hidden_dim", c.hidden_dim},         {"vocab_size", c.vocab_size},
                 {"blank_index", c.blank_index},       {"ln_eps", c.ln_eps},
                 {"seed", c.seed}};
  auto& params = j["params"] = nlohmann::ordered_json::array();
  for (const auto& p : model.params) {
    params.push_back({{"name", p.name},
                      {"rows", p.value.rows},
                      {"cols", p.value.cols},
                      {"values", p.value.values}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << j.dump() << "\n";
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("checkpoint '" + path.string() + "' not found");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what(), path.string());
  }
  try {
    if (j.at("format") != "suta-checkpoint") throw FormatError("not a checkpoint", path.string());
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw FormatError("unsupported checkpoint version", path.string());
    const auto& jc = j.at("config");
    ModelConfig c;
    c.feature_dim = jc.at("feature_dim");
    c.conv_layers = jc.at("conv_layers");
    c.kernel_width = jc.at("kernel_width");
    c.conv_channels = jc.at("conv_channels");
    c.conv_stride = jc.at("conv_stride");
    c.encoder_blocks = jc.at("encoder_blocks");
    c.hidden_dim = jc.at("hidden_dim");
    c.vocab_size = jc.at("vocab_size");
    c.blank_index = jc.at("blank_index");
    c.ln_eps = jc.at("ln_eps");
    c.seed = jc.at("seed");

    ModelState model = init_model(c);
    const auto& jp = j.at("params");
    if (jp.size() != model.params.size())
      throw FormatError("parameter count does not match config", path.string());
    for (std::size_t i = 0; i < jp.size(); ++i) {
      auto& p = model.params[i];
      const std::string name = jp[i].at("name");
      if (name != p.name) throw FormatError("unexpected parameter", name);
      Tensor t(jp[i].at("rows").get<std::size_t>(), jp[i].at("cols").get<std::size_t>());
      if (!t.same_shape(p.value)) throw FormatError("parameter shape mismatch", name);
      t.values = jp[i].at("values").get<std::vector<double>>();
      if (t.values.size() != t.rows * t.cols) throw FormatError("value count mismatch", name);
      p.value = std::move(t);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what(), path.string());
  }
}

}  // namespace suta
