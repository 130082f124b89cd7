#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snl/ops.hpp"
#include "snl/tape.hpp"
#include "snl/tensor.hpp"

namespace snl {

enum class LayerKind { dense, conv, relu, gate, flatten, residual_add };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t width = 0;  // dense units or conv output channels
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t source = 0;  // residual_add: layer whose output is added

  static LayerSpec dense(std::size_t units) { return {LayerKind::dense, units}; }
  static LayerSpec conv(std::size_t channels, std::size_t kernel, std::size_t stride = 1,
                        std::size_t padding = 0) {
    return {LayerKind::conv, channels, kernel, stride, padding};
  }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec gate() { return {LayerKind::gate}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }
  static LayerSpec residual(std::size_t source) {
    return {LayerKind::residual_add, 0, 0, 1, 0, source};
  }

  bool operator==(const LayerSpec&) const = default;
};

// Architecture descriptor. Text form (used in checkpoints and config files):
//   gates=per-unit,identity;in=1x8x8;conv=4,3,1,1;relu;conv=8,3,1,1;gate;flatten;dense=2
// conv=<channels>,<kernel>,<stride>,<padding>; res=<layer index>.
struct ArchSpec {
  Shape input;
  std::vector<LayerSpec> layers;
  GateGranularity granularity = GateGranularity::per_unit;
  GateMode mode = GateMode::identity;

  std::string to_string() const;
  static ArchSpec parse(std::string_view text);

  // widths = {in, hidden..., out}; every hidden layer is gated.
  static ArchSpec mlp(const std::vector<std::size_t>& widths,
                      GateGranularity granularity = GateGranularity::per_unit,
                      GateMode mode = GateMode::identity);

  // Stack of 3x3 (or `kernel`) convolutions, one per entry of `channels`,
  // followed by flatten and a dense classifier. The first activation is a
  // plain ReLU when `ungated_first` is set.
  static ArchSpec cnn(const Shape& input, const std::vector<std::size_t>& channels,
                      std::size_t classes, bool ungated_first = true,
                      GateGranularity granularity = GateGranularity::per_unit,
                      GateMode mode = GateMode::identity, std::size_t kernel = 3,
                      const std::vector<std::size_t>& strides = {});

  bool operator==(const ArchSpec&) const = default;
};

struct Parameter {
  Tensor value;
  Tensor grad;
  // Optional 0/1 mask; masked entries are held at zero during training.
  Tensor mask;

  bool masked() const { return !mask.empty(); }
  void apply_mask();
};

struct GateVector {
  Tensor values;
  Tensor grad;
  GateGranularity granularity = GateGranularity::per_unit;
  GateMode mode = GateMode::identity;
  bool frozen = false;
  double epsilon = 0.01;
  // Activation scalars per gate entry (spatial positions for per-channel gates).
  std::size_t fanout = 1;
  std::size_t channels = 0;
  std::size_t layer = 0;  // index in the layer list

  std::size_t size() const { return values.numel(); }
  std::size_t relu_ops() const { return size() * fanout; }
  bool binary() const;
};

// Parameter handles of one forward pass, in network order.
struct Binding {
  std::vector<Var> weights;
  std::vector<Var> gates;
};

struct ForwardOptions {
  bool weight_grads = true;
  // Ignored for frozen gate vectors, which are always recorded as constants.
  bool gate_grads = true;
};

struct GateLayerInfo {
  std::size_t gate_index = 0;
  std::size_t layer = 0;
  std::size_t gates = 0;
  std::size_t relu_ops = 0;
  std::size_t channels = 0;
};

class GatedNetwork {
 public:
  // Structure with zero weights and all gates at 1.
  explicit GatedNetwork(ArchSpec arch);

  // Kaiming fan-in normal weights, zero biases, all gates at 1.
  static GatedNetwork build(const ArchSpec& arch, std::uint64_t seed);

  const ArchSpec& arch() const { return arch_; }

  Var forward(Tape& tape, const Tensor& x, Binding* binding,
              const ForwardOptions& options = {}) const;
  Tensor predict(const Tensor& x) const;
  // Copies the adjoints of a bound forward pass into the parameter buffers.
  void load_gradients(const Binding& binding);
  void zero_grad();

  std::span<Parameter> weights() { return weights_; }
  std::span<const Parameter> weights() const { return weights_; }
  std::span<GateVector> gates() { return gates_; }
  std::span<const GateVector> gates() const { return gates_; }

  std::size_t total_gates() const;
  std::size_t total_relu_ops() const;
  // ReLU operations whose gate exceeds eps (per-channel entries count once per
  // spatial position).
  std::size_t relu_count(double eps) const;
  std::size_t active_gate_entries(double eps) const;

  // Every gate becomes 1 if > eps else 0. Throws if gates are frozen.
  void binarize_gates(double eps);
  // Throws unless every gate is exactly 0 or 1.
  void freeze_gates();
  bool gates_frozen() const;
  bool gates_binary() const;
  void set_gate_mode(GateMode mode);
  void set_gate_epsilon(double eps);
  void fill_gates(double value);
  std::uint64_t gate_hash() const;

  std::vector<GateLayerInfo> gate_layers() const;

  // Per-sample output shape of each layer.
  const std::vector<Shape>& layer_shapes() const { return out_shapes_; }
  // Index of the weight tensor of a dense/conv layer (bias is index + 1), or -1.
  int weight_index(std::size_t layer) const { return weight_of_layer_[layer]; }

  // Structured pruning hooks for a gated layer (by gate index).
  std::vector<double> channel_incoming_l1(std::size_t gate_index) const;
  // Zero-out gates of dropped channels and zero (and mask) the weights that
  // consume them.
  void prune_channels(std::size_t gate_index, const std::vector<bool>& keep);

  // Same weights with every gated activation replaced by a plain ReLU.
  GatedNetwork with_plain_relu() const;

  // Forward pass through the linear layers only (activations skipped), for
  // plaintext linear-cost timing.
  Tensor forward_linear_only(const Tensor& x) const;

 private:
  ArchSpec arch_;
  std::vector<Shape> out_shapes_;
  std::vector<int> weight_of_layer_;
  std::vector<int> gate_of_layer_;
  std::vector<Parameter> weights_;
  std::vector<GateVector> gates_;
};

// Free-function forms.
std::size_t relu_count(const GatedNetwork& net, double eps);
void binarize_gates(GatedNetwork& net, double eps);
void freeze_gates(GatedNetwork& net);

}  // namespace snl
