#include "protoseg/autograd/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <numbers>

#include "protoseg/core/error.hpp"
#include "protoseg/kernels/kernels.hpp"

namespace protoseg::ag {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

Tensor& grad_of(Node& self, std::size_t i) { return self.inputs[i]->grad_buffer(); }
const Tensor& value_of(const Node& self, std::size_t i) { return self.inputs[i]->value; }

void add_into(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

int leading(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape()[0]; }

std::size_t trailing_size(const Tensor& t) {
  std::size_t n = 1;
  for (int i = 1; i < t.rank(); ++i) n *= static_cast<std::size_t>(t.shape()[static_cast<std::size_t>(i)]);
  return n;
}

void require_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
}

}  // namespace

Var constant(Tensor value) { return Var(std::move(value), false); }
Var parameter(Tensor value) { return Var(std::move(value), true); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  add_into(out, b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i)
      if (self.input_needs_grad(i)) add_into(grad_of(self, i), self.grad);
  }, "add");
}

Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw ArityError("add_n: no operands");
  Tensor out = xs[0].value();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    require_same_shape(xs[0].value(), xs[i].value(), "add_n");
    add_into(out, xs[i].value());
  }
  return make_result(std::move(out), xs, [](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      if (self.input_needs_grad(i)) add_into(grad_of(self, i), self.grad);
  }, "add_n");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& g = self.grad;
    for (std::size_t k = 0; k < 2; ++k) {
      if (!self.input_needs_grad(k)) continue;
      Tensor& gk = grad_of(self, k);
      const Tensor& other = value_of(self, 1 - k);
      for (std::size_t i = 0; i < g.size(); ++i) gk[i] += g[i] * other[i];
    }
  }, "mul");
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  return make_result(std::move(out), {x}, [factor](Node& self) {
    Tensor& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * self.grad[i];
  }, "scale");
}

Var leaky_relu(const Var& x, double negative_slope) {
  Tensor out = x.value();
  for (double& v : out.values())
    if (v < 0.0) v *= negative_slope;
  return make_result(std::move(out), {x}, [negative_slope](Node& self) {
    const Tensor& xv = value_of(self, 0);
    Tensor& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * (xv[i] > 0.0 ? 1.0 : negative_slope);
  }, "leaky_relu");
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_result(std::move(out), {x}, [](Node& self) {
    const Tensor& xv = value_of(self, 0);
    Tensor& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv[i] > 0.0) gx[i] += self.grad[i];
  }, "relu");
}

Var gelu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return make_result(std::move(out), {x}, [](Node& self) {
    const Tensor& xv = value_of(self, 0);
    Tensor& gx = grad_of(self, 0);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += self.grad[i] * (cdf + v * pdf);
    }
  }, "gelu");
}

Var dropout(const Var& x, double rate, bool training, Rng& rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  auto mask = std::make_shared<Tensor>(x.shape());
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask->values()) m = rng.uniform() < rate ? 0.0 : keep;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
  return make_result(std::move(out), {x}, [mask](Node& self) {
    Tensor& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * (*mask)[i];
  }, "dropout");
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_result(Tensor::scalar(s), {x}, [](Node& self) {
    Tensor& gx = grad_of(self, 0);
    const double g = self.grad[0];
    for (double& v : gx.values()) v += g;
  }, "sum");
}

Var mul_scalar(const Var& x, const Var& s) {
  if (s.value().size() != 1) throw ShapeError("mul_scalar: factor must have one element, got " + to_string(s.shape()));
  const double f = s.value()[0];
  Tensor out = x.value();
  for (double& v : out.values()) v *= f;
  return make_result(std::move(out), {x, s}, [](Node& self) {
    const Tensor& xv = value_of(self, 0);
    const double f = value_of(self, 1)[0];
    if (self.input_needs_grad(0)) {
      Tensor& gx = grad_of(self, 0);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += f * self.grad[i];
    }
    if (self.input_needs_grad(1)) {
      double dot = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i) dot += xv[i] * self.grad[i];
      grad_of(self, 1)[0] += dot;
    }
  }, "mul_scalar");
}

Var reciprocal(const Var& x, double eps) {
  Tensor out = x.value();
  for (double& v : out.values()) v = 1.0 / (v + eps);
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] -= self.grad[i] * self.value[i] * self.value[i];
  }, "reciprocal");
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    add_into(grad_of(self, 0), self.grad);
  }, "reshape");
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw ArityError("concat_channels: no operands");
  const Tensor& first = xs[0].value();
  Shape shape = first.shape();
  const std::size_t inner = trailing_size(first);
  int total = 0;
  for (const Var& x : xs) {
    const Tensor& t = x.value();
    if (t.rank() != first.rank() || trailing_size(t) != inner ||
        !std::equal(t.shape().begin() + 1, t.shape().end(), first.shape().begin() + 1))
      throw ShapeError("concat_channels: " + to_string(t.shape()) + " vs " + to_string(first.shape()));
    total += leading(t);
  }
  shape[0] = total;
  Tensor out(shape);
  double* dst = out.data();
  for (const Var& x : xs) {
    std::memcpy(dst, x.value().data(), sizeof(double) * x.value().size());
    dst += x.value().size();
  }
  return make_result(std::move(out), xs, [](Node& self) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      const std::size_t n = self.inputs[i]->value.size();
      if (self.input_needs_grad(i)) {
        Tensor& gi = grad_of(self, i);
        for (std::size_t j = 0; j < n; ++j) gi[j] += self.grad[offset + j];
      }
      offset += n;
    }
  }, "concat_channels");
}

Var slice_channels(const Var& x, int begin, int count) {
  const Tensor& t = x.value();
  if (t.rank() < 1 || begin < 0 || count <= 0 || begin + count > leading(t))
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of range for " + to_string(t.shape()));
  Shape shape = t.shape();
  shape[0] = count;
  const std::size_t inner = trailing_size(t);
  Tensor out(shape);
  std::memcpy(out.data(), t.data() + static_cast<std::size_t>(begin) * inner, sizeof(double) * out.size());
  return make_result(std::move(out), {x}, [begin, inner](Node& self) {
    Tensor& gx = grad_of(self, 0);
    double* dst = gx.data() + static_cast<std::size_t>(begin) * inner;
    for (std::size_t j = 0; j < self.grad.size(); ++j) dst[j] += self.grad[j];
  }, "slice_channels");
}

Var mul_channel_broadcast(const Var& x, const Var& mask) {
  require_volume(x.value(), "mul_channel_broadcast");
  require_volume(mask.value(), "mul_channel_broadcast mask");
  if (mask.value().channels() != 1 || mask.value().spatial() != x.value().spatial())
    throw ShapeError("mul_channel_broadcast: mask " + to_string(mask.shape()) + " vs features " +
                     to_string(x.shape()));
  const int C = x.value().channels();
  const std::size_t S = x.value().spatial_size();
  Tensor out(x.shape());
  for (int c = 0; c < C; ++c)
    for (std::size_t i = 0; i < S; ++i)
      out[static_cast<std::size_t>(c) * S + i] = x.value()[static_cast<std::size_t>(c) * S + i] * mask.value()[i];
  return make_result(std::move(out), {x, mask}, [C, S](Node& self) {
    const Tensor& xv = value_of(self, 0);
    const Tensor& mv = value_of(self, 1);
    const Tensor& g = self.grad;
    if (self.input_needs_grad(0)) {
      Tensor& gx = grad_of(self, 0);
      for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < S; ++i) gx[static_cast<std::size_t>(c) * S + i] += g[static_cast<std::size_t>(c) * S + i] * mv[i];
    }
    if (self.input_needs_grad(1)) {
      Tensor& gm = grad_of(self, 1);
      for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < S; ++i)
          gm[i] += g[static_cast<std::size_t>(c) * S + i] * xv[static_cast<std::size_t>(c) * S + i];
    }
  }, "mul_channel_broadcast");
}

Var spatial_mean(const Var& x) {
  require_volume(x.value(), "spatial_mean");
  const int C = x.value().channels();
  const std::size_t S = x.value().spatial_size();
  Tensor out({C});
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    const double* xc = x.value().channel(c);
    for (std::size_t i = 0; i < S; ++i) s += xc[i];
    out[static_cast<std::size_t>(c)] = s / static_cast<double>(S);
  }
  return make_result(std::move(out), {x}, [C, S](Node& self) {
    Tensor& gx = grad_of(self, 0);
    for (int c = 0; c < C; ++c) {
      const double g = self.grad[static_cast<std::size_t>(c)] / static_cast<double>(S);
      double* gc = gx.channel(c);
      for (std::size_t i = 0; i < S; ++i) gc[i] += g;
    }
  }, "spatial_mean");
}

Var broadcast_to_volume(const Var& v, Dims3 dims) {
  require_rank(v.value(), 1, "broadcast_to_volume");
  const int C = v.value().dim(0);
  Tensor out = Tensor::volume(C, dims);
  const std::size_t S = dims.size();
  for (int c = 0; c < C; ++c) std::fill(out.channel(c), out.channel(c) + S, v.value()[static_cast<std::size_t>(c)]);
  return make_result(std::move(out), {v}, [C, S](Node& self) {
    Tensor& gv = grad_of(self, 0);
    for (int c = 0; c < C; ++c) {
      const double* gc = self.grad.channel(c);
      double s = 0.0;
      for (std::size_t i = 0; i < S; ++i) s += gc[i];
      gv[static_cast<std::size_t>(c)] += s;
    }
  }, "broadcast_to_volume");
}

Var volume_to_tokens(const Var& x) {
  require_volume(x.value(), "volume_to_tokens");
  const int C = x.value().channels();
  const auto S = static_cast<Eigen::Index>(x.value().spatial_size());
  Tensor out({static_cast<int>(S), C});
  MatMap(out.data(), S, C) = ConstMatMap(x.value().data(), C, S).transpose();
  return make_result(std::move(out), {x}, [C, S](Node& self) {
    MatMap(grad_of(self, 0).data(), C, S) += ConstMatMap(self.grad.data(), S, C).transpose();
  }, "volume_to_tokens");
}

Var tokens_to_volume(const Var& tokens, Dims3 dims) {
  require_rank(tokens.value(), 2, "tokens_to_volume");
  const auto S = static_cast<Eigen::Index>(dims.size());
  if (tokens.value().dim(0) != S)
    throw ShapeError("tokens_to_volume: " + std::to_string(tokens.value().dim(0)) + " tokens for grid " +
                     to_string(dims));
  const int C = tokens.value().dim(1);
  Tensor out = Tensor::volume(C, dims);
  MatMap(out.data(), C, S) = ConstMatMap(tokens.value().data(), S, C).transpose();
  return make_result(std::move(out), {tokens}, [C, S](Node& self) {
    MatMap(grad_of(self, 0).data(), S, C) += ConstMatMap(self.grad.data(), C, S).transpose();
  }, "tokens_to_volume");
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x.value(), 2, "linear input");
  require_rank(weight.value(), 2, "linear weight");
  const auto N = static_cast<Eigen::Index>(x.value().dim(0));
  const auto I = static_cast<Eigen::Index>(x.value().dim(1));
  const auto O = static_cast<Eigen::Index>(weight.value().dim(1));
  if (weight.value().dim(0) != I)
    throw ShapeError("linear: input width " + std::to_string(I) + " vs weight " + to_string(weight.shape()));
  if (bias.defined() && (bias.value().rank() != 1 || bias.value().dim(0) != O))
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " for output width " + std::to_string(O));
  Tensor out({static_cast<int>(N), static_cast<int>(O)});
  MatMap y(out.data(), N, O);
  y.noalias() = ConstMatMap(x.value().data(), N, I) * ConstMatMap(weight.value().data(), I, O);
  if (bias.defined()) y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), O);
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [N, I, O](Node& self) {
    ConstMatMap g(self.grad.data(), N, O);
    if (self.input_needs_grad(0))
      MatMap(grad_of(self, 0).data(), N, I).noalias() += g * ConstMatMap(value_of(self, 1).data(), I, O).transpose();
    if (self.input_needs_grad(1))
      MatMap(grad_of(self, 1).data(), I, O).noalias() += ConstMatMap(value_of(self, 0).data(), N, I).transpose() * g;
    if (self.inputs.size() > 2 && self.input_needs_grad(2))
      Eigen::Map<Eigen::RowVectorXd>(grad_of(self, 2).data(), O) += g.colwise().sum();
  }, "linear");
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_rank(x.value(), 2, "layer_norm");
  const int N = x.value().dim(0), C = x.value().dim(1);
  if (gamma.value().size() != static_cast<std::size_t>(C) || beta.value().size() != static_cast<std::size_t>(C))
    throw ShapeError("layer_norm: affine width mismatch for " + to_string(x.shape()));
  auto xhat = std::make_shared<Tensor>(x.shape());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N));
  Tensor out(x.shape());
  for (int n = 0; n < N; ++n) {
    const double* row = x.value().data() + static_cast<std::size_t>(n) * C;
    double m = 0.0;
    for (int c = 0; c < C; ++c) m += row[c];
    m /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) var += (row[c] - m) * (row[c] - m);
    var /= C;
    const double s = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(n)] = s;
    for (int c = 0; c < C; ++c) {
      const std::size_t j = static_cast<std::size_t>(n) * C + c;
      (*xhat)[j] = (row[c] - m) * s;
      out[j] = (*xhat)[j] * gamma.value()[static_cast<std::size_t>(c)] + beta.value()[static_cast<std::size_t>(c)];
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, [N, C, xhat, inv_std](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& gam = value_of(self, 1);
    if (self.input_needs_grad(1) || self.input_needs_grad(2)) {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const std::size_t j = static_cast<std::size_t>(n) * C + c;
          if (self.input_needs_grad(1)) grad_of(self, 1)[static_cast<std::size_t>(c)] += g[j] * (*xhat)[j];
          if (self.input_needs_grad(2)) grad_of(self, 2)[static_cast<std::size_t>(c)] += g[j];
        }
    }
    if (self.input_needs_grad(0)) {
      Tensor& gx = grad_of(self, 0);
      for (int n = 0; n < N; ++n) {
        double mean_g = 0.0, mean_gx = 0.0;
        for (int c = 0; c < C; ++c) {
          const std::size_t j = static_cast<std::size_t>(n) * C + c;
          const double gh = g[j] * gam[static_cast<std::size_t>(c)];
          mean_g += gh;
          mean_gx += gh * (*xhat)[j];
        }
        mean_g /= C;
        mean_gx /= C;
        for (int c = 0; c < C; ++c) {
          const std::size_t j = static_cast<std::size_t>(n) * C + c;
          const double gh = g[j] * gam[static_cast<std::size_t>(c)];
          gx[j] += (*inv_std)[static_cast<std::size_t>(n)] * (gh - mean_g - (*xhat)[j] * mean_gx);
        }
      }
    }
  }, "layer_norm");
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, Tensor* probs) {
  require_rank(q.value(), 2, "attention Q");
  require_rank(k.value(), 2, "attention K");
  require_rank(v.value(), 2, "attention V");
  const int width = q.value().dim(1);
  if (heads <= 0 || width % heads != 0)
    throw ConfigError("attention: width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (k.value().dim(1) != width || v.value().dim(1) != width || k.value().dim(0) != v.value().dim(0))
    throw ShapeError("attention: Q " + to_string(q.shape()) + ", K " + to_string(k.shape()) + ", V " +
                     to_string(v.shape()));
  kernels::AttentionShape s{q.value().dim(0), k.value().dim(0), heads, width / heads};
  auto p = std::make_shared<Tensor>(Shape{heads, s.queries, s.keys});
  Tensor out({s.queries, width});
  kernels::attention_forward(s, q.value().data(), k.value().data(), v.value().data(), out.data(), p->data());
  if (probs) *probs = *p;
  return make_result(std::move(out), {q, k, v}, [s, p](Node& self) {
    double* gq = self.input_needs_grad(0) ? grad_of(self, 0).data() : nullptr;
    double* gk = self.input_needs_grad(1) ? grad_of(self, 1).data() : nullptr;
    double* gv = self.input_needs_grad(2) ? grad_of(self, 2).data() : nullptr;
    kernels::attention_backward(s, value_of(self, 0).data(), value_of(self, 1).data(), value_of(self, 2).data(),
                                p->data(), self.grad.data(), gq, gk, gv);
  }, "attention");
}

Var conv3d(const Var& x, const Var& weight, const Var& bias, int stride) {
  require_volume(x.value(), "conv3d input");
  const Tensor& w = weight.value();
  if (w.rank() != 5 || w.dim(2) != w.dim(3) || w.dim(3) != w.dim(4))
    throw ShapeError("conv3d: weight must be {Co, Ci, k, k, k}, got " + to_string(w.shape()));
  if (w.dim(1) != x.value().channels())
    throw ShapeError("conv3d: weight expects " + std::to_string(w.dim(1)) + " input channels, got " +
                     to_string(x.shape()));
  const auto g = kernels::conv_geometry(w.dim(1), w.dim(0), w.dim(2), stride, x.value().spatial());
  if (bias.defined() && bias.value().size() != static_cast<std::size_t>(g.out_channels))
    throw ShapeError("conv3d: bias " + to_string(bias.shape()));
  Tensor out = Tensor::volume(g.out_channels, g.out);
  kernels::conv3d_forward(g, x.value().data(), w.data(), bias.defined() ? bias.value().data() : nullptr, out.data());
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [g](Node& self) {
    if (self.input_needs_grad(0))
      kernels::conv3d_backward_input(g, self.grad.data(), value_of(self, 1).data(), grad_of(self, 0).data());
    const bool has_bias = self.inputs.size() > 2 && self.input_needs_grad(2);
    if (self.input_needs_grad(1) || has_bias) {
      if (self.input_needs_grad(1)) {
        kernels::conv3d_backward_weight(g, value_of(self, 0).data(), self.grad.data(), grad_of(self, 1).data(),
                                        has_bias ? grad_of(self, 2).data() : nullptr);
      } else {
        Tensor& gb = grad_of(self, 2);
        const std::size_t S = g.out.size();
        for (int c = 0; c < g.out_channels; ++c)
          for (std::size_t i = 0; i < S; ++i) gb[static_cast<std::size_t>(c)] += self.grad[static_cast<std::size_t>(c) * S + i];
      }
    }
  }, "conv3d");
}

Var instance_norm(const Var& x, double eps) {
  require_volume(x.value(), "instance_norm");
  const int C = x.value().channels();
  const std::size_t S = x.value().spatial_size();
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(C));
  std::vector<double> mean(static_cast<std::size_t>(C));
  Tensor out(x.shape());
  kernels::instance_norm_forward(C, S, eps, x.value().data(), out.data(), mean.data(), inv_std->data());
  return make_result(std::move(out), {x}, [C, S, inv_std](Node& self) {
    kernels::instance_norm_backward(C, S, self.value.data(), inv_std->data(), self.grad.data(),
                                    grad_of(self, 0).data());
  }, "instance_norm");
}

Var softmax_channels(const Var& x) {
  require_volume(x.value(), "softmax_channels");
  const int C = x.value().channels();
  const std::size_t S = x.value().spatial_size();
  Tensor out(x.shape());
  kernels::softmax_channels_forward(C, S, x.value().data(), out.data());
  return make_result(std::move(out), {x}, [C, S](Node& self) {
    kernels::softmax_channels_backward(C, S, self.value.data(), self.grad.data(), grad_of(self, 0).data());
  }, "softmax_channels");
}

Var resize_trilinear(const Var& x, Dims3 dims) {
  require_volume(x.value(), "resize_trilinear");
  const Dims3 src = x.value().spatial();
  if (src == dims) return x;
  const int C = x.value().channels();
  Tensor out = Tensor::volume(C, dims);
  kernels::resize_trilinear_forward(C, src, dims, x.value().data(), out.data());
  return make_result(std::move(out), {x}, [C, src, dims](Node& self) {
    kernels::resize_trilinear_backward(C, src, dims, self.grad.data(), grad_of(self, 0).data());
  }, "resize_trilinear");
}

Var renormalize_channels(const Var& x) {
  require_volume(x.value(), "renormalize_channels");
  const int C = x.value().channels();
  const std::size_t S = x.value().spatial_size();
  auto sums = std::make_shared<std::vector<double>>(S, 0.0);
  for (int c = 0; c < C; ++c)
    for (std::size_t i = 0; i < S; ++i) (*sums)[i] += x.value()[static_cast<std::size_t>(c) * S + i];
  Tensor out(x.shape());
  for (int c = 0; c < C; ++c)
    for (std::size_t i = 0; i < S; ++i)
      out[static_cast<std::size_t>(c) * S + i] = x.value()[static_cast<std::size_t>(c) * S + i] / (*sums)[i];
  return make_result(std::move(out), {x}, [C, S, sums](Node& self) {
    const Tensor& y = self.value;
    const Tensor& g = self.grad;
    Tensor& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < S; ++i) {
      double dot = 0.0;
      for (int c = 0; c < C; ++c) dot += g[static_cast<std::size_t>(c) * S + i] * y[static_cast<std::size_t>(c) * S + i];
      for (int c = 0; c < C; ++c)
        gx[static_cast<std::size_t>(c) * S + i] += (g[static_cast<std::size_t>(c) * S + i] - dot) / (*sums)[i];
    }
  }, "renormalize_channels");
}

}  // namespace protoseg::ag
