#pragma once

// Toy CTC acoustic model:
//   features -> [conv1d + gelu] x conv_layers            (feat.*)
//            -> [h + fc2(gelu(fc1(ln(h))))] x blocks     (enc.<k>.*)
//            -> final layer norm                         (enc.final.ln.*)
//            -> linear classifier over vocab_size        (head.*)
// Convolutions use "same" padding, so L = conv_output_length(T_in).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "suta/graph.hpp"
#include "suta/tensor.hpp"
#include "suta/vocab.hpp"

namespace suta {

struct ModelConfig {
  std::size_t feature_dim = 16;
  std::size_t conv_layers = 2;
  std::size_t kernel_width = 1;
  std::size_t conv_channels = 64;
  std::size_t conv_stride = 1;
  std::size_t encoder_blocks = 2;
  std::size_t hidden_dim = 64;
  std::size_t vocab_size = vocab::kSize;
  std::size_t blank_index = vocab::kBlank;
  double ln_eps = 1e-5;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& config);

// Number of output frames for an input of `input_frames`.
std::size_t output_frames(const ModelConfig& config, std::size_t input_frames);

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = false;

  bool operator==(const Parameter&) const = default;
};

// Adaptable parameter selections. Ln: every layer-norm affine; Feat: the
// convolutional feature extractor; LnFeat: their union; All: everything.
enum class Selection { Ln, Feat, LnFeat, All };

const char* to_string(Selection selection);
Selection parse_selection(std::string_view text);
bool selects(Selection selection, std::string_view param_name);

struct ModelState {
  ModelConfig config;
  std::vector<Parameter> params;

  const Parameter& param(std::string_view name) const;
  Parameter& param(std::string_view name);
  std::vector<std::string> trainable_names() const;
  std::vector<std::string> frozen_names() const;

  bool operator==(const ModelState&) const = default;
};

ModelState init_model(const ModelConfig& config);

// Copy of `model` with trainable set exactly on the selected parameters.
ModelState partition_params(const ModelState& model, Selection selection);
void apply_partition(ModelState& model, Selection selection);

ModelState snapshot(const ModelState& model);
// Overwrites parameter values; names and shapes must match.
void restore(ModelState& model, const ModelState& snap);

// 64-bit FNV-1a over the names and exact bit patterns of every parameter, or
// of exactly the named ones (an empty list hashes nothing).
std::uint64_t parameter_hash(const ModelState& model);
std::uint64_t parameter_hash(const ModelState& model, const std::vector<std::string>& names);

// A forward pass recorded on a fresh graph. param_nodes[i] is the leaf of
// model.params[i]; trainable parameters are created with requires_grad.
struct ForwardPass {
  grad::Graph graph;
  grad::NodeId logits = 0;
  std::vector<grad::NodeId> param_nodes;

  // Gradients keyed by parameter index, for the trainable parameters only.
  std::map<std::size_t, Tensor> param_grads(grad::NodeId loss) const;
};

ForwardPass forward(const ModelState& model, const Tensor& features);
Tensor logits(const ModelState& model, const Tensor& features);

// JSON checkpoint: format version, config, and ordered parameter list with
// row-major values. Round-trips bit-exactly.
inline constexpr int kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const ModelState& model);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace suta
