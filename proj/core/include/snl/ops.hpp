#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "snl/tape.hpp"
#include "snl/tensor.hpp"

namespace snl {

// One gate per activation scalar (per (channel,row,col) for feature maps) or
// one gate per output channel, broadcast over spatial positions.
enum class GateGranularity { per_unit, per_channel };

// identity: a = c*relu(z) + (1-c)*z.  zero_out: a = c*relu(z).
enum class GateMode { identity, zero_out };

const char* to_string(GateGranularity g);
const char* to_string(GateMode m);
GateGranularity parse_granularity(std::string_view s);
GateMode parse_gate_mode(std::string_view s);

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Output shape of a cross-correlation of x [N,Cin,H,W] with k [Cout,Cin,KH,KW].
Shape conv2d_output_shape(const Shape& x, const Shape& k, Conv2dGeometry g);

// Number of gates a feature tensor of per-sample shape `sample` needs, and how
// many activation scalars each gate controls.
std::size_t gate_count(const Shape& sample, GateGranularity g);
std::size_t gate_fanout(const Shape& sample, GateGranularity g);

// x [B,in] * w [in,out] + b [out].
Var affine(Var x, Var w, Var b);

Var conv2d(Var x, Var k, Conv2dGeometry g);
// Bias b [Cout] broadcast over batch and spatial positions.
Var conv2d(Var x, Var k, Var b, Conv2dGeometry g);

// Subgradient at 0 is 0.
Var relu(Var z);

// Gate vector c has gate_count(z sample shape, granularity) entries and is
// shared across the batch.
Var gated_activation(Var z, Var c, GateGranularity granularity, GateMode mode);

Var add(Var a, Var b);
Var flatten(Var x);
Var sum(Var x);
Var weighted_sum(Var a, double wa, Var b, double wb);

// Mean over the batch of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

// Mean over the batch of T^2 * KL(softmax(teacher/T) || softmax(student/T)).
// The teacher logits are a constant target.
Var kl_soft_targets(Var student, const Tensor& teacher_logits, double temperature);

// Row-wise softmax of a [B,K] tensor at the given temperature.
Tensor softmax(const Tensor& logits, double temperature = 1.0);

}  // namespace snl
