#include "snl/network.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>
#include <stdexcept>

namespace snl {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t pos = s.find(sep, start);
    const std::size_t end = pos == std::string_view::npos ? s.size() : pos;
    out.push_back(s.substr(start, end - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::size_t parse_size(std::string_view s, std::string_view context) {
  s = trim(s);
  if (s.empty()) throw std::invalid_argument("empty number in '" + std::string(context) + "'");
  std::size_t v = 0;
  for (char ch : s) {
    if (ch < '0' || ch > '9') {
      throw std::invalid_argument("bad number '" + std::string(s) + "' in '" +
                                  std::string(context) + "'");
    }
    v = v * 10 + static_cast<std::size_t>(ch - '0');
  }
  return v;
}

[[noreturn]] void arch_error(const std::string& msg) {
  throw std::invalid_argument("architecture: " + msg);
}

}  // namespace

std::string ArchSpec::to_string() const {
  std::ostringstream os;
  os << "gates=" << snl::to_string(granularity) << ',' << snl::to_string(mode) << ";in=";
  for (std::size_t i = 0; i < input.size(); ++i) os << (i ? "x" : "") << input[i];
  for (const LayerSpec& l : layers) {
    switch (l.kind) {
      case LayerKind::dense: os << ";dense=" << l.width; break;
      case LayerKind::conv:
        os << ";conv=" << l.width << ',' << l.kernel << ',' << l.stride << ',' << l.padding;
        break;
      case LayerKind::relu: os << ";relu"; break;
      case LayerKind::gate: os << ";gate"; break;
      case LayerKind::flatten: os << ";flatten"; break;
      case LayerKind::residual_add: os << ";res=" << l.source; break;
    }
  }
  return os.str();
}

ArchSpec ArchSpec::parse(std::string_view text) {
  ArchSpec a;
  bool have_input = false;
  for (std::string_view raw : split(text, ';')) {
    const std::string_view tok = trim(raw);
    if (tok.empty()) continue;
    const std::size_t eq = tok.find('=');
    const std::string_view key = trim(tok.substr(0, eq));
    const std::string_view val = eq == std::string_view::npos ? std::string_view{} : tok.substr(eq + 1);
    if (key == "gates") {
      const auto parts = split(val, ',');
      if (parts.size() != 2) arch_error("gates expects <granularity>,<mode>");
      a.granularity = parse_granularity(trim(parts[0]));
      a.mode = parse_gate_mode(trim(parts[1]));
    } else if (key == "in") {
      for (std::string_view d : split(val, 'x')) a.input.push_back(parse_size(d, tok));
      have_input = true;
    } else if (key == "dense") {
      a.layers.push_back(LayerSpec::dense(parse_size(val, tok)));
    } else if (key == "conv") {
      const auto parts = split(val, ',');
      if (parts.size() != 4) arch_error("conv expects <channels>,<kernel>,<stride>,<padding>");
      a.layers.push_back(LayerSpec::conv(parse_size(parts[0], tok), parse_size(parts[1], tok),
                                         parse_size(parts[2], tok), parse_size(parts[3], tok)));
    } else if (key == "relu") {
      a.layers.push_back(LayerSpec::relu());
    } else if (key == "gate") {
      a.layers.push_back(LayerSpec::gate());
    } else if (key == "flatten") {
      a.layers.push_back(LayerSpec::flatten());
    } else if (key == "res") {
      a.layers.push_back(LayerSpec::residual(parse_size(val, tok)));
    } else {
      arch_error("unknown token '" + std::string(tok) + "'");
    }
  }
  if (!have_input) arch_error("missing in=<dims>");
  return a;
}

ArchSpec ArchSpec::mlp(const std::vector<std::size_t>& widths, GateGranularity granularity,
                       GateMode mode) {
  if (widths.size() < 2) arch_error("mlp needs at least input and output widths");
  ArchSpec a;
  a.input = {widths.front()};
  a.granularity = granularity;
  a.mode = mode;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    a.layers.push_back(LayerSpec::dense(widths[i]));
    if (i + 1 < widths.size()) a.layers.push_back(LayerSpec::gate());
  }
  return a;
}

ArchSpec ArchSpec::cnn(const Shape& input, const std::vector<std::size_t>& channels,
                       std::size_t classes, bool ungated_first, GateGranularity granularity,
                       GateMode mode, std::size_t kernel, const std::vector<std::size_t>& strides) {
  ArchSpec a;
  a.input = input;
  a.granularity = granularity;
  a.mode = mode;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const std::size_t stride = i < strides.size() ? strides[i] : 1;
    a.layers.push_back(LayerSpec::conv(channels[i], kernel, stride, kernel / 2));
    a.layers.push_back(i == 0 && ungated_first ? LayerSpec::relu() : LayerSpec::gate());
  }
  a.layers.push_back(LayerSpec::flatten());
  a.layers.push_back(LayerSpec::dense(classes));
  return a;
}

void Parameter::apply_mask() {
  if (!masked()) return;
  for (std::size_t i = 0; i < value.numel(); ++i)
    if (mask[i] == 0.0) value[i] = 0.0;
}

bool GateVector::binary() const {
  for (double v : values.values())
    if (v != 0.0 && v != 1.0) return false;
  return true;
}

GatedNetwork::GatedNetwork(ArchSpec arch) : arch_(std::move(arch)) {
  if (arch_.input.empty()) arch_error("empty input shape");
  Shape cur = arch_.input;
  const std::size_t n = arch_.layers.size();
  out_shapes_.reserve(n);
  weight_of_layer_.assign(n, -1);
  gate_of_layer_.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& l = arch_.layers[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    switch (l.kind) {
      case LayerKind::dense: {
        if (cur.size() != 1) arch_error(where + "dense needs flat input, got " + shape_str(cur));
        if (l.width == 0) arch_error(where + "dense width must be positive");
        weight_of_layer_[i] = static_cast<int>(weights_.size());
        weights_.push_back({Tensor({cur[0], l.width}), {}, {}});
        weights_.push_back({Tensor({l.width}), {}, {}});
        cur = {l.width};
        break;
      }
      case LayerKind::conv: {
        if (cur.size() != 3) arch_error(where + "conv needs [C,H,W] input, got " + shape_str(cur));
        if (l.width == 0 || l.kernel == 0) arch_error(where + "conv channels/kernel must be positive");
        Shape os;
        try {
          os = conv2d_output_shape({1, cur[0], cur[1], cur[2]}, {l.width, cur[0], l.kernel, l.kernel},
                                   {l.stride, l.padding});
        } catch (const ShapeError& e) {
          arch_error(where + e.what());
        }
        weight_of_layer_[i] = static_cast<int>(weights_.size());
        weights_.push_back({Tensor({l.width, cur[0], l.kernel, l.kernel}), {}, {}});
        weights_.push_back({Tensor({l.width}), {}, {}});
        cur = {os[1], os[2], os[3]};
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::gate: {
        if (i == 0 || (arch_.layers[i - 1].kind != LayerKind::dense &&
                       arch_.layers[i - 1].kind != LayerKind::conv)) {
          arch_error(where + "gated activation must follow a dense or conv layer");
        }
        GateVector g;
        g.granularity = arch_.granularity;
        g.mode = arch_.mode;
        g.values = Tensor({gate_count(cur, arch_.granularity)}, 1.0);
        g.fanout = gate_fanout(cur, arch_.granularity);
        g.channels = cur[0];
        g.layer = i;
        gate_of_layer_[i] = static_cast<int>(gates_.size());
        gates_.push_back(std::move(g));
        break;
      }
      case LayerKind::flatten:
        cur = {shape_numel(cur)};
        break;
      case LayerKind::residual_add:
        if (l.source >= i) arch_error(where + "residual source must precede the add");
        if (out_shapes_[l.source] != cur) {
          arch_error(where + "residual source shape " + shape_str(out_shapes_[l.source]) +
                     " differs from " + shape_str(cur));
        }
        break;
    }
    out_shapes_.push_back(cur);
  }
  if (cur.size() != 1) arch_error("network output must be flat logits, got " + shape_str(cur));
}

GatedNetwork GatedNetwork::build(const ArchSpec& arch, std::uint64_t seed) {
  GatedNetwork net(arch);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < net.arch_.layers.size(); ++i) {
    const int wi = net.weight_of_layer_[i];
    if (wi < 0) continue;
    Tensor& w = net.weights_[static_cast<std::size_t>(wi)].value;
    const std::size_t fan_in = net.arch_.layers[i].kind == LayerKind::dense
                                   ? w.dim(0)
                                   : w.dim(1) * w.dim(2) * w.dim(3);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& v : w.values()) v = dist(rng);
  }
  return net;
}

Var GatedNetwork::forward(Tape& tape, const Tensor& x, Binding* binding,
                          const ForwardOptions& options) const {
  Shape expected = arch_.input;
  if (x.rank() != expected.size() + 1 ||
      !std::equal(expected.begin(), expected.end(), x.shape().begin() + 1)) {
    throw ShapeError("network input " + shape_str(x.shape()) + " does not match [batch]" +
                     shape_str(expected));
  }
  const bool bind = binding != nullptr;
  std::vector<Var> wv;
  wv.reserve(weights_.size());
  for (const Parameter& p : weights_) {
    wv.push_back(bind && options.weight_grads ? tape.parameter(p.value) : tape.constant(p.value));
  }
  std::vector<Var> gv;
  gv.reserve(gates_.size());
  for (const GateVector& g : gates_) {
    const bool train = bind && options.gate_grads && !g.frozen;
    gv.push_back(train ? tape.parameter(g.values) : tape.constant(g.values));
  }
  if (bind) {
    binding->weights = wv;
    binding->gates = gv;
  }

  std::vector<Var> outs;
  outs.reserve(arch_.layers.size());
  Var cur = tape.constant(x);
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const LayerSpec& l = arch_.layers[i];
    switch (l.kind) {
      case LayerKind::dense: {
        const auto w = static_cast<std::size_t>(weight_of_layer_[i]);
        cur = affine(cur, wv[w], wv[w + 1]);
        break;
      }
      case LayerKind::conv: {
        const auto w = static_cast<std::size_t>(weight_of_layer_[i]);
        cur = conv2d(cur, wv[w], wv[w + 1], {l.stride, l.padding});
        break;
      }
      case LayerKind::relu: cur = relu(cur); break;
      case LayerKind::gate: {
        const GateVector& g = gates_[static_cast<std::size_t>(gate_of_layer_[i])];
        cur = gated_activation(cur, gv[static_cast<std::size_t>(gate_of_layer_[i])],
                               g.granularity, g.mode);
        break;
      }
      case LayerKind::flatten: cur = flatten(cur); break;
      case LayerKind::residual_add: cur = add(cur, outs[l.source]); break;
    }
    outs.push_back(cur);
  }
  return cur;
}

Tensor GatedNetwork::predict(const Tensor& x) const {
  Tape tape;
  return forward(tape, x, nullptr).value();
}

void GatedNetwork::load_gradients(const Binding& binding) {
  for (std::size_t i = 0; i < weights_.size() && i < binding.weights.size(); ++i) {
    const Var& v = binding.weights[i];
    if (v.requires_grad()) {
      weights_[i].grad = v.grad();
    } else {
      weights_[i].grad = Tensor(weights_[i].value.shape(), 0.0);
    }
  }
  for (std::size_t i = 0; i < gates_.size() && i < binding.gates.size(); ++i) {
    const Var& v = binding.gates[i];
    if (v.requires_grad()) {
      gates_[i].grad = v.grad();
    } else {
      gates_[i].grad = Tensor(gates_[i].values.shape(), 0.0);
    }
  }
}

void GatedNetwork::zero_grad() {
  for (Parameter& p : weights_) p.grad = Tensor(p.value.shape(), 0.0);
  for (GateVector& g : gates_) g.grad = Tensor(g.values.shape(), 0.0);
}

std::size_t GatedNetwork::total_gates() const {
  std::size_t n = 0;
  for (const GateVector& g : gates_) n += g.size();
  return n;
}

std::size_t GatedNetwork::total_relu_ops() const {
  std::size_t n = 0;
  for (const GateVector& g : gates_) n += g.relu_ops();
  return n;
}

std::size_t GatedNetwork::relu_count(double eps) const {
  std::size_t n = 0;
  for (const GateVector& g : gates_)
    for (double v : g.values.values())
      if (v > eps) n += g.fanout;
  return n;
}

std::size_t GatedNetwork::active_gate_entries(double eps) const {
  std::size_t n = 0;
  for (const GateVector& g : gates_)
    for (double v : g.values.values())
      if (v > eps) ++n;
  return n;
}

void GatedNetwork::binarize_gates(double eps) {
  if (gates_frozen()) throw std::logic_error("binarize_gates: gates are frozen");
  for (GateVector& g : gates_)
    for (double& v : g.values.values()) v = v > eps ? 1.0 : 0.0;
}

void GatedNetwork::freeze_gates() {
  if (!gates_binary()) {
    throw std::logic_error("freeze_gates: gates are not binary; binarize first");
  }
  for (GateVector& g : gates_) g.frozen = true;
}

bool GatedNetwork::gates_frozen() const {
  if (gates_.empty()) return false;
  for (const GateVector& g : gates_)
    if (!g.frozen) return false;
  return true;
}

bool GatedNetwork::gates_binary() const {
  for (const GateVector& g : gates_)
    if (!g.binary()) return false;
  return true;
}

void GatedNetwork::set_gate_mode(GateMode mode) {
  for (GateVector& g : gates_) g.mode = mode;
}

void GatedNetwork::set_gate_epsilon(double eps) {
  for (GateVector& g : gates_) g.epsilon = eps;
}

void GatedNetwork::fill_gates(double value) {
  for (GateVector& g : gates_) {
    if (g.frozen) throw std::logic_error("fill_gates: gates are frozen");
    g.values.fill(value);
  }
}

std::uint64_t GatedNetwork::gate_hash() const {
  // FNV-1a over the raw value bytes.
  std::uint64_t h = 1469598103934665603ULL;
  for (const GateVector& g : gates_)
    for (double v : g.values.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 1099511628211ULL;
      }
    }
  return h;
}

std::vector<GateLayerInfo> GatedNetwork::gate_layers() const {
  std::vector<GateLayerInfo> out;
  for (std::size_t i = 0; i < gates_.size(); ++i) {
    const GateVector& g = gates_[i];
    out.push_back({i, g.layer, g.size(), g.relu_ops(), g.channels});
  }
  return out;
}

std::vector<double> GatedNetwork::channel_incoming_l1(std::size_t gate_index) const {
  const GateVector& g = gates_.at(gate_index);
  const std::size_t producer = g.layer - 1;
  const Tensor& w = weights_[static_cast<std::size_t>(weight_of_layer_[producer])].value;
  std::vector<double> l1(g.channels, 0.0);
  if (arch_.layers[producer].kind == LayerKind::dense) {
    const std::size_t in = w.dim(0), out = w.dim(1);
    for (std::size_t k = 0; k < in; ++k)
      for (std::size_t j = 0; j < out; ++j) l1[j] += std::abs(w[k * out + j]);
  } else {
    const std::size_t per = w.numel() / w.dim(0);
    for (std::size_t c = 0; c < w.dim(0); ++c)
      for (std::size_t i = 0; i < per; ++i) l1[c] += std::abs(w[c * per + i]);
  }
  return l1;
}

void GatedNetwork::prune_channels(std::size_t gate_index, const std::vector<bool>& keep) {
  GateVector& g = gates_.at(gate_index);
  if (keep.size() != g.channels) {
    throw std::invalid_argument("prune_channels: keep mask has " + std::to_string(keep.size()) +
                                " entries for " + std::to_string(g.channels) + " channels");
  }
  if (g.frozen) throw std::logic_error("prune_channels: gates are frozen");
  const std::size_t layer = g.layer;
  for (std::size_t i = layer + 1; i < arch_.layers.size(); ++i) {
    if (arch_.layers[i].kind == LayerKind::residual_add && arch_.layers[i].source >= layer) {
      throw std::invalid_argument("prune_channels: residual consumers are not supported");
    }
  }

  g.mode = GateMode::zero_out;
  const std::size_t per_channel_entries = g.size() / g.channels;
  for (std::size_t e = 0; e < g.size(); ++e) g.values[e] = keep[e / per_channel_entries] ? 1.0 : 0.0;

  // Find the linear layer consuming this activation.
  const Shape& act = out_shapes_[layer];
  const std::size_t spatial = shape_numel(act) / act[0];
  for (std::size_t i = layer + 1; i < arch_.layers.size(); ++i) {
    const LayerKind kind = arch_.layers[i].kind;
    if (kind == LayerKind::flatten) continue;
    if (kind != LayerKind::dense && kind != LayerKind::conv) {
      throw std::invalid_argument("prune_channels: activation is not consumed by a linear layer");
    }
    Parameter& p = weights_[static_cast<std::size_t>(weight_of_layer_[i])];
    if (!p.masked()) p.mask = Tensor(p.value.shape(), 1.0);
    if (kind == LayerKind::dense) {
      const std::size_t out = p.value.dim(1);
      for (std::size_t c = 0; c < g.channels; ++c) {
        if (keep[c]) continue;
        for (std::size_t r = c * spatial; r < (c + 1) * spatial; ++r)
          for (std::size_t j = 0; j < out; ++j) p.mask[r * out + j] = 0.0;
      }
    } else {
      const std::size_t cout = p.value.dim(0), cin = p.value.dim(1);
      const std::size_t kk = p.value.dim(2) * p.value.dim(3);
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t c = 0; c < cin; ++c) {
          if (keep[c]) continue;
          for (std::size_t k = 0; k < kk; ++k) p.mask[(co * cin + c) * kk + k] = 0.0;
        }
    }
    p.apply_mask();
    return;
  }
  throw std::invalid_argument("prune_channels: no consuming linear layer");
}

GatedNetwork GatedNetwork::with_plain_relu() const {
  ArchSpec plain = arch_;
  for (LayerSpec& l : plain.layers)
    if (l.kind == LayerKind::gate) l = LayerSpec::relu();
  GatedNetwork net(plain);
  for (std::size_t i = 0; i < weights_.size(); ++i) net.weights_[i] = weights_[i];
  return net;
}

Tensor GatedNetwork::forward_linear_only(const Tensor& x) const {
  Tape tape;
  std::vector<Var> outs;
  Var cur = tape.constant(x);
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const LayerSpec& l = arch_.layers[i];
    const int wi = weight_of_layer_[i];
    switch (l.kind) {
      case LayerKind::dense:
        cur = affine(cur, tape.constant(weights_[wi].value), tape.constant(weights_[wi + 1].value));
        break;
      case LayerKind::conv:
        cur = conv2d(cur, tape.constant(weights_[wi].value), tape.constant(weights_[wi + 1].value),
                     {l.stride, l.padding});
        break;
      case LayerKind::flatten: cur = flatten(cur); break;
      case LayerKind::residual_add: cur = add(cur, outs[l.source]); break;
      case LayerKind::relu:
      case LayerKind::gate: break;
    }
    outs.push_back(cur);
  }
  return cur.value();
}

std::size_t relu_count(const GatedNetwork& net, double eps) { return net.relu_count(eps); }
void binarize_gates(GatedNetwork& net, double eps) { net.binarize_gates(eps); }
void freeze_gates(GatedNetwork& net) { net.freeze_gates(); }

}  // namespace snl
