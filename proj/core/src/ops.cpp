#include "snl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace snl {

const char* to_string(GateGranularity g) {
  return g == GateGranularity::per_unit ? "per-unit" : "per-channel";
}

const char* to_string(GateMode m) { return m == GateMode::identity ? "identity" : "zero-out"; }

GateGranularity parse_granularity(std::string_view s) {
  if (s == "per-unit" || s == "unit") return GateGranularity::per_unit;
  if (s == "per-channel" || s == "channel") return GateGranularity::per_channel;
  throw std::invalid_argument("unknown gate granularity '" + std::string(s) + "'");
}

GateMode parse_gate_mode(std::string_view s) {
  if (s == "identity") return GateMode::identity;
  if (s == "zero-out" || s == "zero_out") return GateMode::zero_out;
  throw std::invalid_argument("unknown gate mode '" + std::string(s) + "'");
}

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

double relu_value(double z) { return z > 0.0 ? z : 0.0; }

// Numerically stable log-softmax of one row.
// The max term is taken out of the sum and log1p keeps saturated rows exact.
void log_softmax_row(const double* in, double* out, std::size_t k, double inv_t) {
  std::size_t arg = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (in[j] * inv_t > in[arg] * inv_t) arg = j;
  const double m = in[arg] * inv_t;
  double rest = 0.0;
  for (std::size_t j = 0; j < k; ++j)
    if (j != arg) rest += std::exp(in[j] * inv_t - m);
  const double log_norm = std::log1p(rest);
  for (std::size_t j = 0; j < k; ++j) out[j] = (in[j] * inv_t - m) - log_norm;
}

}  // namespace

Shape conv2d_output_shape(const Shape& x, const Shape& k, Conv2dGeometry g) {
  if (x.size() != 4 || k.size() != 4) {
    throw ShapeError("conv2d: expected x [N,C,H,W] and k [Cout,Cin,KH,KW], got " + shape_str(x) +
                     " and " + shape_str(k));
  }
  if (x[1] != k[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(x[1]) + " channels, kernel expects " +
                     std::to_string(k[1]));
  }
  if (g.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t ph = x[2] + 2 * g.padding;
  const std::size_t pw = x[3] + 2 * g.padding;
  if (k[2] > ph || k[3] > pw || k[2] == 0 || k[3] == 0) {
    throw ShapeError("conv2d: kernel " + shape_str(k) + " does not fit padded input " +
                     std::to_string(ph) + "x" + std::to_string(pw));
  }
  if ((ph - k[2]) % g.stride != 0 || (pw - k[3]) % g.stride != 0) {
    throw ShapeError("conv2d: non-integer output size for input " + shape_str(x) + ", kernel " +
                     shape_str(k) + ", stride " + std::to_string(g.stride) + ", padding " +
                     std::to_string(g.padding));
  }
  return {x[0], k[0], (ph - k[2]) / g.stride + 1, (pw - k[3]) / g.stride + 1};
}

std::size_t gate_count(const Shape& sample, GateGranularity g) {
  if (sample.empty()) throw ShapeError("gate_count: empty feature shape");
  if (g == GateGranularity::per_unit) return shape_numel(sample);
  return sample[0];
}

std::size_t gate_fanout(const Shape& sample, GateGranularity g) {
  if (sample.empty()) throw ShapeError("gate_fanout: empty feature shape");
  if (g == GateGranularity::per_unit) return 1;
  return shape_numel(sample) / sample[0];
}

Var affine(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require_rank(xv, 2, "affine", "x");
  require_rank(wv, 2, "affine", "W");
  require_rank(bv, 1, "affine", "b");
  const std::size_t batch = xv.dim(0), in = xv.dim(1), out = wv.dim(1);
  if (wv.dim(0) != in || bv.dim(0) != out) {
    throw ShapeError("affine: x " + shape_str(xv.shape()) + ", W " + shape_str(wv.shape()) +
                     ", b " + shape_str(bv.shape()) + " do not conform");
  }
  Tensor y({batch, out}, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    double* row = y.data() + i * out;
    const double* xr = xv.data() + i * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double xk = xr[k];
      const double* wr = wv.data() + k * out;
      for (std::size_t j = 0; j < out; ++j) row[j] += xk * wr[j];
    }
    for (std::size_t j = 0; j < out; ++j) row[j] += bv[j];
  }
  return x.tape->record(std::move(y), {x, w, b}, [x, w, b](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    const Tensor& xv = t.value(x.id);
    const Tensor& wv = t.value(w.id);
    const std::size_t batch = xv.dim(0), in = xv.dim(1), out = wv.dim(1);
    if (t.requires_grad(x.id)) {
      Tensor& gx = t.grad_mut(x.id);
      for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t k = 0; k < in; ++k) {
          double s = 0.0;
          for (std::size_t j = 0; j < out; ++j) s += gy[i * out + j] * wv[k * out + j];
          gx[i * in + k] += s;
        }
    }
    if (t.requires_grad(w.id)) {
      Tensor& gw = t.grad_mut(w.id);
      for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t k = 0; k < in; ++k) {
          const double xk = xv[i * in + k];
          for (std::size_t j = 0; j < out; ++j) gw[k * out + j] += xk * gy[i * out + j];
        }
    }
    if (t.requires_grad(b.id)) {
      Tensor& gb = t.grad_mut(b.id);
      for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < out; ++j) gb[j] += gy[i * out + j];
    }
  });
}

namespace {

struct ConvDims {
  std::size_t n, cin, h, w, cout, kh, kw, oh, ow;
  std::size_t rows() const { return cin * kh * kw; }
  std::size_t cols() const { return oh * ow; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& k, const Shape& os) {
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3), os[2], os[3]};
}

// Unfolds sample b of x into col[cin*kh*kw, oh*ow]; padded taps are 0.
void im2col(const double* x, const ConvDims& d, Conv2dGeometry g, double* col) {
  const long pad = static_cast<long>(g.padding);
  for (std::size_t ci = 0; ci < d.cin; ++ci)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        double* row = col + ((ci * d.kh + ky) * d.kw + kx) * d.cols();
        const double* xp = x + ci * d.h * d.w;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - pad;
          double* out = row + oy * d.ow;
          if (iy < 0 || iy >= static_cast<long>(d.h)) {
            std::fill(out, out + d.ow, 0.0);
            continue;
          }
          const double* xr = xp + static_cast<std::size_t>(iy) * d.w;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - pad;
            out[ox] = (ix < 0 || ix >= static_cast<long>(d.w)) ? 0.0 : xr[ix];
          }
        }
      }
}

// Adds col back into sample b of gx; inverse scatter of im2col.
void col2im(const double* col, const ConvDims& d, Conv2dGeometry g, double* gx) {
  const long pad = static_cast<long>(g.padding);
  for (std::size_t ci = 0; ci < d.cin; ++ci)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const double* row = col + ((ci * d.kh + ky) * d.kw + kx) * d.cols();
        double* gp = gx + ci * d.h * d.w;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          double* gr = gp + static_cast<std::size_t>(iy) * d.w;
          const double* in = row + oy * d.ow;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<long>(d.w)) gr[ix] += in[ox];
          }
        }
      }
}

// Shared cross-correlation kernel; bias may be null.
Tensor conv_forward(const Tensor& x, const Tensor& k, const Tensor* bias, Conv2dGeometry g) {
  const Shape os = conv2d_output_shape(x.shape(), k.shape(), g);
  const ConvDims d = conv_dims(x, k, os);
  const std::size_t R = d.rows(), P = d.cols();
  Tensor y(os, 0.0);
  std::vector<double> col(R * P);
  for (std::size_t b = 0; b < d.n; ++b) {
    im2col(x.data() + b * d.cin * d.h * d.w, d, g, col.data());
    for (std::size_t co = 0; co < d.cout; ++co) {
      double* yp = y.data() + (b * d.cout + co) * P;
      const double* kp = k.data() + co * R;
      for (std::size_t r = 0; r < R; ++r) {
        const double kv = kp[r];
        const double* cp = col.data() + r * P;
        for (std::size_t p = 0; p < P; ++p) yp[p] += kv * cp[p];
      }
      if (bias) {
        const double bv = (*bias)[co];
        for (std::size_t p = 0; p < P; ++p) yp[p] += bv;
      }
    }
  }
  return y;
}

void conv_backward(Tape& t, std::size_t self, Var x, Var k, const Var* bias, Conv2dGeometry g) {
  const Tensor& gy = t.grad(self);
  const Tensor& xv = t.value(x.id);
  const Tensor& kv = t.value(k.id);
  const ConvDims d = conv_dims(xv, kv, gy.shape());
  const std::size_t R = d.rows(), P = d.cols();
  const bool want_x = t.requires_grad(x.id);
  const bool want_k = t.requires_grad(k.id);
  Tensor* gx = want_x ? &t.grad_mut(x.id) : nullptr;
  Tensor* gk = want_k ? &t.grad_mut(k.id) : nullptr;
  std::vector<double> col(R * P), gcol;
  if (gx) gcol.resize(R * P);
  for (std::size_t b = 0; b < d.n; ++b) {
    const double* gb = gy.data() + b * d.cout * P;
    if (gk) {
      im2col(xv.data() + b * d.cin * d.h * d.w, d, g, col.data());
      for (std::size_t co = 0; co < d.cout; ++co) {
        const double* gp = gb + co * P;
        double* kp = gk->data() + co * R;
        for (std::size_t r = 0; r < R; ++r) {
          const double* cp = col.data() + r * P;
          double acc = 0.0;
          for (std::size_t p = 0; p < P; ++p) acc += gp[p] * cp[p];
          kp[r] += acc;
        }
      }
    }
    if (gx) {
      std::fill(gcol.begin(), gcol.end(), 0.0);
      for (std::size_t co = 0; co < d.cout; ++co) {
        const double* gp = gb + co * P;
        const double* kp = kv.data() + co * R;
        for (std::size_t r = 0; r < R; ++r) {
          const double kval = kp[r];
          double* cp = gcol.data() + r * P;
          for (std::size_t p = 0; p < P; ++p) cp[p] += kval * gp[p];
        }
      }
      col2im(gcol.data(), d, g, gx->data() + b * d.cin * d.h * d.w);
    }
  }
  if (bias && t.requires_grad(bias->id)) {
    Tensor& gbias = t.grad_mut(bias->id);
    for (std::size_t b = 0; b < d.n; ++b)
      for (std::size_t co = 0; co < d.cout; ++co) {
        const double* gp = gy.data() + (b * d.cout + co) * P;
        double s = 0.0;
        for (std::size_t p = 0; p < P; ++p) s += gp[p];
        gbias[co] += s;
      }
  }
}

}  // namespace

Var conv2d(Var x, Var k, Conv2dGeometry g) {
  Tensor y = conv_forward(x.value(), k.value(), nullptr, g);
  return x.tape->record(std::move(y), {x, k}, [x, k, g](Tape& t, std::size_t self) {
    conv_backward(t, self, x, k, nullptr, g);
  });
}

Var conv2d(Var x, Var k, Var b, Conv2dGeometry g) {
  const Tensor& bv = b.value();
  require_rank(bv, 1, "conv2d", "bias");
  if (bv.dim(0) != k.value().shape().at(0)) {
    throw ShapeError("conv2d: bias " + shape_str(bv.shape()) + " does not match kernel " +
                     shape_str(k.value().shape()));
  }
  Tensor y = conv_forward(x.value(), k.value(), &bv, g);
  return x.tape->record(std::move(y), {x, k, b}, [x, k, b, g](Tape& t, std::size_t self) {
    conv_backward(t, self, x, k, &b, g);
  });
}

Var relu(Var z) {
  const Tensor& zv = z.value();
  Tensor a(zv.shape());
  for (std::size_t i = 0; i < zv.numel(); ++i) a[i] = relu_value(zv[i]);
  return z.tape->record(std::move(a), {z}, [z](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& zv = t.value(z.id);
    Tensor& gz = t.grad_mut(z.id);
    for (std::size_t i = 0; i < zv.numel(); ++i)
      if (zv[i] > 0.0) gz[i] += g[i];
  });
}

Var gated_activation(Var z, Var c, GateGranularity granularity, GateMode mode) {
  const Tensor& zv = z.value();
  const Tensor& cv = c.value();
  if (zv.rank() < 2) throw ShapeError("gated_activation: z must be [batch, features...]");
  const Shape sample(zv.shape().begin() + 1, zv.shape().end());
  const std::size_t gates = gate_count(sample, granularity);
  const std::size_t fan = gate_fanout(sample, granularity);
  if (cv.numel() != gates) {
    throw ShapeError("gated_activation: " + std::string(to_string(granularity)) +
                     " gates for features " + shape_str(sample) + " need " +
                     std::to_string(gates) + " entries, got " + std::to_string(cv.numel()));
  }
  const std::size_t per_sample = shape_numel(sample);
  const std::size_t batch = zv.dim(0);
  Tensor a(zv.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < per_sample; ++i) {
      const std::size_t idx = b * per_sample + i;
      const double ci = cv[i / fan];
      const double zi = zv[idx];
      a[idx] = mode == GateMode::identity ? ci * relu_value(zi) + (1.0 - ci) * zi
                                          : ci * relu_value(zi);
    }
  return z.tape->record(std::move(a), {z, c}, [z, c, fan, mode](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& zv = t.value(z.id);
    const Tensor& cv = t.value(c.id);
    const std::size_t per_sample = zv.numel() / zv.dim(0);
    const bool want_z = t.requires_grad(z.id);
    const bool want_c = t.requires_grad(c.id);
    Tensor* gz = want_z ? &t.grad_mut(z.id) : nullptr;
    Tensor* gc = want_c ? &t.grad_mut(c.id) : nullptr;
    for (std::size_t idx = 0; idx < zv.numel(); ++idx) {
      const std::size_t gi = (idx % per_sample) / fan;
      const double zi = zv[idx];
      const double ci = cv[gi];
      const double pos = zi > 0.0 ? 1.0 : 0.0;
      if (gz) {
        (*gz)[idx] += g[idx] * (mode == GateMode::identity ? ci * pos + (1.0 - ci) : ci * pos);
      }
      if (gc) {
        (*gc)[gi] += g[idx] * (mode == GateMode::identity ? relu_value(zi) - zi : relu_value(zi));
      }
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ShapeError("add: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  Tensor y(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) y[i] = av[i] + bv[i];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (Var v : {a, b}) {
      if (!t.requires_grad(v.id)) continue;
      Tensor& gv = t.grad_mut(v.id);
      for (std::size_t i = 0; i < g.numel(); ++i) gv[i] += g[i];
    }
  });
}

Var flatten(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1) throw ShapeError("flatten: scalar input");
  const std::size_t batch = xv.dim(0);
  Tensor y = xv.reshaped({batch, batch == 0 ? 0 : xv.numel() / batch});
  return x.tape->record(std::move(y), {x}, [x](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_mut(x.id);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.values()) s += v;
  return x.tape->record(Tensor::scalar(s), {x}, [x](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& gx = t.grad_mut(x.id);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  });
}

Var weighted_sum(Var a, double wa, Var b, double wb) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ShapeError("weighted_sum: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  Tensor y(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) y[i] = wa * av[i] + wb * bv[i];
  return a.tape->record(std::move(y), {a, b}, [a, wa, b, wb](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a.id)) {
      Tensor& ga = t.grad_mut(a.id);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += wa * g[i];
    }
    if (t.requires_grad(b.id)) {
      Tensor& gb = t.grad_mut(b.id);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += wb * g[i];
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  require_rank(lv, 2, "softmax_cross_entropy", "logits");
  const std::size_t batch = lv.dim(0), k = lv.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(batch));
  }
  if (batch == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  lv.check_finite("softmax_cross_entropy logits");
  Tensor logp(lv.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                              " outside [0," + std::to_string(k) + ")");
    }
    log_softmax_row(lv.data() + i * k, logp.data() + i * k, k, 1.0);
    loss -= logp[i * k + static_cast<std::size_t>(labels[i])];
  }
  loss /= static_cast<double>(batch);
  std::vector<int> saved(labels.begin(), labels.end());
  return logits.tape->record(
      Tensor::scalar(loss), {logits},
      [logits, logp = std::move(logp), saved = std::move(saved)](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        Tensor& gl = t.grad_mut(logits.id);
        const std::size_t batch = logp.dim(0), k = logp.dim(1);
        const double scale = g / static_cast<double>(batch);
        for (std::size_t i = 0; i < batch; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(logp[i * k + j]);
            const double onehot = static_cast<std::size_t>(saved[i]) == j ? 1.0 : 0.0;
            gl[i * k + j] += scale * (p - onehot);
          }
      });
}

Var kl_soft_targets(Var student, const Tensor& teacher_logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("kl_soft_targets: temperature must be positive, got " +
                                std::to_string(temperature));
  }
  const Tensor& sv = student.value();
  require_rank(sv, 2, "kl_soft_targets", "student logits");
  if (sv.shape() != teacher_logits.shape()) {
    throw ShapeError("kl_soft_targets: student " + shape_str(sv.shape()) + " vs teacher " +
                     shape_str(teacher_logits.shape()));
  }
  sv.check_finite("kl_soft_targets student logits");
  teacher_logits.check_finite("kl_soft_targets teacher logits");
  const std::size_t batch = sv.dim(0), k = sv.dim(1);
  if (batch == 0) throw ShapeError("kl_soft_targets: empty batch");
  const double inv_t = 1.0 / temperature;
  Tensor logq(sv.shape()), p(sv.shape());
  std::vector<double> logp(k);
  double kl = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    log_softmax_row(sv.data() + i * k, logq.data() + i * k, k, inv_t);
    log_softmax_row(teacher_logits.data() + i * k, logp.data(), k, inv_t);
    for (std::size_t j = 0; j < k; ++j) {
      const double pj = std::exp(logp[j]);
      p[i * k + j] = pj;
      if (pj > 0.0) kl += pj * (logp[j] - logq[i * k + j]);
    }
  }
  const double t2 = temperature * temperature;
  const double value = t2 * kl / static_cast<double>(batch);
  return student.tape->record(
      Tensor::scalar(value), {student},
      [student, logq = std::move(logq), p = std::move(p), temperature](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        Tensor& gs = t.grad_mut(student.id);
        const std::size_t batch = p.dim(0);
        // d/ds of T^2 * KL / B = T * (q - p) / B
        const double scale = g * temperature / static_cast<double>(batch);
        for (std::size_t i = 0; i < p.numel(); ++i) gs[i] += scale * (std::exp(logq[i]) - p[i]);
      });
}

Tensor softmax(const Tensor& logits, double temperature) {
  require_rank(logits, 2, "softmax", "logits");
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be positive");
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < batch; ++i) {
    log_softmax_row(logits.data() + i * k, out.data() + i * k, k, 1.0 / temperature);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = std::exp(out[i * k + j]);
  }
  return out;
}

}  // namespace snl
