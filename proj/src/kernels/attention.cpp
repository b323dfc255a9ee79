#include <algorithm>
#include <cmath>
#include <vector>

#include "protoseg/kernels/kernels.hpp"

namespace protoseg::kernels {

void attention_forward(const AttentionShape& s, const double* q, const double* k, const double* v,
                       double* out, double* probs) {
  const int W = s.width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.head_dim));
#pragma omp parallel for schedule(static)
  for (int h = 0; h < s.heads; ++h) {
    const int off = h * s.head_dim;
    for (int i = 0; i < s.queries; ++i) {
      double* p = probs + (static_cast<std::size_t>(h) * s.queries + i) * s.keys;
      const double* qi = q + static_cast<std::size_t>(i) * W + off;
      double m = -INFINITY;
      for (int j = 0; j < s.keys; ++j) {
        const double* kj = k + static_cast<std::size_t>(j) * W + off;
        double dot = 0.0;
        for (int t = 0; t < s.head_dim; ++t) dot += qi[t] * kj[t];
        p[j] = dot * scale;
        m = std::max(m, p[j]);
      }
      double sum = 0.0;
      for (int j = 0; j < s.keys; ++j) {
        p[j] = std::exp(p[j] - m);
        sum += p[j];
      }
      for (int j = 0; j < s.keys; ++j) p[j] /= sum;
      double* oi = out + static_cast<std::size_t>(i) * W + off;
      std::fill(oi, oi + s.head_dim, 0.0);
      for (int j = 0; j < s.keys; ++j) {
        const double* vj = v + static_cast<std::size_t>(j) * W + off;
        for (int t = 0; t < s.head_dim; ++t) oi[t] += p[j] * vj[t];
      }
    }
  }
}

void attention_backward(const AttentionShape& s, const double* q, const double* k, const double* v,
                        const double* probs, const double* grad_out, double* grad_q, double* grad_k,
                        double* grad_v) {
  const int W = s.width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.head_dim));
#pragma omp parallel for schedule(static)
  for (int h = 0; h < s.heads; ++h) {
    const int off = h * s.head_dim;
    std::vector<double> dp(static_cast<std::size_t>(s.keys));
    for (int i = 0; i < s.queries; ++i) {
      const double* p = probs + (static_cast<std::size_t>(h) * s.queries + i) * s.keys;
      const double* go = grad_out + static_cast<std::size_t>(i) * W + off;
      double weighted = 0.0;
      for (int j = 0; j < s.keys; ++j) {
        const double* vj = v + static_cast<std::size_t>(j) * W + off;
        double dot = 0.0;
        for (int t = 0; t < s.head_dim; ++t) dot += go[t] * vj[t];
        dp[static_cast<std::size_t>(j)] = dot;
        weighted += p[j] * dot;
        if (grad_v) {
          double* gv = grad_v + static_cast<std::size_t>(j) * W + off;
          for (int t = 0; t < s.head_dim; ++t) gv[t] += p[j] * go[t];
        }
      }
      const double* qi = q + static_cast<std::size_t>(i) * W + off;
      double* gq = grad_q ? grad_q + static_cast<std::size_t>(i) * W + off : nullptr;
      for (int j = 0; j < s.keys; ++j) {
        const double ds = p[j] * (dp[static_cast<std::size_t>(j)] - weighted) * scale;
        const double* kj = k + static_cast<std::size_t>(j) * W + off;
        if (gq)
          for (int t = 0; t < s.head_dim; ++t) gq[t] += ds * kj[t];
        if (grad_k) {
          double* gk = grad_k + static_cast<std::size_t>(j) * W + off;
          for (int t = 0; t < s.head_dim; ++t) gk[t] += ds * qi[t];
        }
      }
    }
  }
}

namespace reference {

void attention_forward(const AttentionShape& s, const double* q, const double* k, const double* v,
                       double* out, double* probs) {
  const int W = s.width();
  for (int i = 0; i < s.queries; ++i)
    for (int h = 0; h < s.heads; ++h) {
      std::vector<double> scores(static_cast<std::size_t>(s.keys));
      double denom = 0.0;
      for (int j = 0; j < s.keys; ++j) {
        double dot = 0.0;
        for (int t = 0; t < s.head_dim; ++t)
          dot += q[static_cast<std::size_t>(i) * W + h * s.head_dim + t] *
                 k[static_cast<std::size_t>(j) * W + h * s.head_dim + t];
        scores[static_cast<std::size_t>(j)] = std::exp(dot / std::sqrt(static_cast<double>(s.head_dim)));
        denom += scores[static_cast<std::size_t>(j)];
      }
      for (int j = 0; j < s.keys; ++j) {
        const double pj = scores[static_cast<std::size_t>(j)] / denom;
        if (probs) probs[(static_cast<std::size_t>(h) * s.queries + i) * s.keys + j] = pj;
      }
      for (int t = 0; t < s.head_dim; ++t) {
        double acc = 0.0;
        for (int j = 0; j < s.keys; ++j)
          acc += scores[static_cast<std::size_t>(j)] / denom * v[static_cast<std::size_t>(j) * W + h * s.head_dim + t];
        out[static_cast<std::size_t>(i) * W + h * s.head_dim + t] = acc;
      }
    }
}

}  // namespace reference
}  // namespace protoseg::kernels
