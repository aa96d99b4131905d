// SPDX-License-Identifier: Apache-2.0
#include "molbench/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "molbench/kernels.hpp"

namespace molbench::ad {

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
  const auto it = param_nodes_.find(&param);
  if (it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{{}, {}, &param, param.trainable, {}});
  param_nodes_.emplace(&param, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.tape_ != this) throw std::invalid_argument("op mixes values from different tapes");
    needs = needs || nodes_[in.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, nullptr, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(const Var& v) const {
  const Node& n = nodes_[v.id_];
  return n.param ? n.param->value : n.value;
}

Tensor& Tape::grad(const Var& v) {
  Node& n = nodes_[v.id_];
  if (n.grad.empty()) n.grad = Tensor(value(v).shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw std::invalid_argument("backward: root belongs to another tape");
  if (value(root).size() != 1) {
    throw std::invalid_argument("backward: root must be a scalar, got shape " + value(root).shape_string());
  }
  if (!nodes_[root.id_].requires_grad) return;
  grad(root)[0] = 1.0;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param) {
      auto dst = n.param->grad.values();
      const auto src = n.grad.values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    } else if (n.backward) {
      // Closures only touch input buffers, so this node's gradient can move out.
      const Tensor g = std::move(n.grad);
      n.backward(g);
    }
  }
}

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                              b.shape_string());
}

void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  const auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <class F>
Var unary(Var x, F&& f, double (*df)(double, double)) {
  Tensor out(x.value().shape());
  const auto xv = x.value().values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
  Tape* t = &x.tape();
  return t->record(std::move(out), {x}, [t, x, df](const Tensor& g) {
    const auto xv = x.value().values();
    auto gx = t->grad(x).values();
    const auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gx[i] += gv[i] * df(xv[i], 0.0);
  });
}

double gelu_grad(double x, double) {
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return normal_cdf(x) + x * pdf;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu_grad(double x, double) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gelu_value(double x) { return x * normal_cdf(x); }

double bce_with_logits_value(double x, double t) {
  return std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows() || bv.shape().size() != 2) shape_error("matmul", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out = Tensor::matrix(m, n);
  kernels::matmul_acc(av.values(), bv.values(), out.values(), m, k, n);
  Tape* t = &a.tape();
  return t->record(std::move(out), {a, b}, [t, a, b, m, k, n](const Tensor& g) {
    if (a.requires_grad()) kernels::matmul_a_bt_acc(g.values(), b.value().values(), t->grad(a).values(), m, n, k);
    if (b.requires_grad()) kernels::matmul_at_b_acc(a.value().values(), g.values(), t->grad(b).values(), k, m, n);
  });
}

Var linear(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (wv.shape().size() != 2 || xv.cols() != wv.rows()) shape_error("linear", xv, wv);
  if (bv.size() != wv.cols()) shape_error("linear bias", wv, bv);
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.cols();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) std::copy(bv.values().begin(), bv.values().end(), out.row(i).begin());
  kernels::matmul_acc(xv.values(), wv.values(), out.values(), m, k, n);
  Tape* t = &x.tape();
  return t->record(std::move(out), {x, w, b}, [t, x, w, b, m, k, n](const Tensor& g) {
    if (x.requires_grad()) kernels::matmul_a_bt_acc(g.values(), w.value().values(), t->grad(x).values(), m, n, k);
    if (w.requires_grad()) kernels::matmul_at_b_acc(x.value().values(), g.values(), t->grad(w).values(), k, m, n);
    if (b.requires_grad()) {
      auto gb = t->grad(b).values();
      for (std::size_t i = 0; i < m; ++i) {
        const auto gr = g.row(i);
        for (std::size_t j = 0; j < n; ++j) gb[j] += gr[j];
      }
    }
  });
}

Var linear(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.shape().size() != 2 || xv.cols() != wv.rows()) shape_error("linear", xv, wv);
  return matmul(x, w);
}

Var add(Var a, Var b) {
  if (!a.value().same_shape(b.value())) shape_error("add", a.value(), b.value());
  Tensor out = a.value();
  accumulate(out, b.value());
  Tape* t = &a.tape();
  return t->record(std::move(out), {a, b}, [t, a, b](const Tensor& g) {
    if (a.requires_grad()) accumulate(t->grad(a), g);
    if (b.requires_grad()) accumulate(t->grad(b), g);
  });
}

Var mul(Var a, Var b) {
  if (!a.value().same_shape(b.value())) shape_error("mul", a.value(), b.value());
  Tensor out = a.value();
  const auto bv = b.value().values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  Tape* t = &a.tape();
  return t->record(std::move(out), {a, b}, [t, a, b](const Tensor& g) {
    const auto gv = g.values();
    if (a.requires_grad()) {
      auto ga = t->grad(a).values();
      const auto bv = b.value().values();
      for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto gb = t->grad(b).values();
      const auto av = a.value().values();
      for (std::size_t i = 0; i < gv.size(); ++i) gb[i] += gv[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  Tape* t = &a.tape();
  return t->record(std::move(out), {a}, [t, a, factor](const Tensor& g) {
    auto ga = t->grad(a).values();
    const auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += factor * gv[i];
  });
}

Var embedding(Var table, std::span<const std::int32_t> ids) {
  const Tensor& tv = table.value();
  if (tv.shape().size() != 2) throw std::invalid_argument("embedding: table must be rank 2, got " + tv.shape_string());
  if (ids.empty()) throw std::invalid_argument("embedding: empty id list");
  const std::size_t d = tv.cols();
  Tensor out = Tensor::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside table " + tv.shape_string());
    }
    const auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  Tape* t = &table.tape();
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return t->record(std::move(out), {table}, [t, table, saved = std::move(saved)](const Tensor& g) {
    Tensor& gt = t->grad(table);
    for (std::size_t i = 0; i < saved.size(); ++i) {
      auto dst = gt.row(static_cast<std::size_t>(saved[i]));
      const auto src = g.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), d = xv.cols();
  if (gamma.value().size() != d) shape_error("layer_norm gamma", xv, gamma.value());
  if (beta.value().size() != d) shape_error("layer_norm beta", xv, beta.value());
  Tensor out = Tensor::matrix(m, d);
  Tensor xhat = Tensor::matrix(m, d);
  std::vector<double> rstd(m);
  const auto gv = gamma.value().values();
  const auto bv = beta.value().values();
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = xv.row(i);
    double mu = 0.0;
    for (const double v : r) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (const double v : r) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    auto xh = xhat.row(i);
    auto o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (r[j] - mu) * rstd[i];
      o[j] = xh[j] * gv[j] + bv[j];
    }
  }
  Tape* t = &x.tape();
  return t->record(std::move(out), {x, gamma, beta},
                   [t, x, gamma, beta, m, d, xhat = std::move(xhat), rstd = std::move(rstd)](const Tensor& g) {
                     const auto gv = gamma.value().values();
                     if (gamma.requires_grad()) {
                       auto gg = t->grad(gamma).values();
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < d; ++j) gg[j] += g.at(i, j) * xhat.at(i, j);
                       }
                     }
                     if (beta.requires_grad()) {
                       auto gb = t->grad(beta).values();
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < d; ++j) gb[j] += g.at(i, j);
                       }
                     }
                     if (x.requires_grad()) {
                       Tensor& gx = t->grad(x);
                       std::vector<double> dxh(d);
                       for (std::size_t i = 0; i < m; ++i) {
                         double mean_d = 0.0, mean_dx = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           dxh[j] = g.at(i, j) * gv[j];
                           mean_d += dxh[j];
                           mean_dx += dxh[j] * xhat.at(i, j);
                         }
                         mean_d /= static_cast<double>(d);
                         mean_dx /= static_cast<double>(d);
                         for (std::size_t j = 0; j < d; ++j) {
                           gx.at(i, j) += rstd[i] * (dxh[j] - mean_d - xhat.at(i, j) * mean_dx);
                         }
                       }
                     }
                   });
}

Var rms_norm(Var x, Var gamma, double eps) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), d = xv.cols();
  if (gamma.value().size() != d) shape_error("rms_norm gamma", xv, gamma.value());
  Tensor out = Tensor::matrix(m, d);
  std::vector<double> rinv(m);
  const auto gv = gamma.value().values();
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = xv.row(i);
    double ms = 0.0;
    for (const double v : r) ms += v * v;
    ms /= static_cast<double>(d);
    rinv[i] = 1.0 / std::sqrt(ms + eps);
    auto o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) o[j] = r[j] * rinv[i] * gv[j];
  }
  Tape* t = &x.tape();
  return t->record(std::move(out), {x, gamma}, [t, x, gamma, m, d, rinv = std::move(rinv)](const Tensor& g) {
    const Tensor& xv = x.value();
    const auto gv = gamma.value().values();
    if (gamma.requires_grad()) {
      auto gg = t->grad(gamma).values();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d; ++j) gg[j] += g.at(i, j) * xv.at(i, j) * rinv[i];
      }
    }
    if (x.requires_grad()) {
      Tensor& gx = t->grad(x);
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += g.at(i, j) * gv[j] * xv.at(i, j);
        const double r3 = rinv[i] * rinv[i] * rinv[i] * dot / static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          gx.at(i, j) += rinv[i] * g.at(i, j) * gv[j] - xv.at(i, j) * r3;
        }
      }
    }
  });
}

Var softmax_lastdim(Var x) {
  Tensor out = x.value();
  const std::size_t m = out.rows(), d = out.cols();
  kernels::softmax_rows(out.values(), m, d);
  Tensor saved = out;
  Tape* t = &x.tape();
  return t->record(std::move(out), {x}, [t, x, m, d, y = std::move(saved)](const Tensor& g) {
    Tensor& gx = t->grad(x);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < d; ++j) gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

Var gelu(Var x) { return unary(x, gelu_value, gelu_grad); }

Var silu(Var x) {
  return unary(x, [](double v) { return v * sigmoid(v); }, silu_grad);
}

Var rotary(Var x, std::size_t num_heads, double base) {
  const Tensor& xv = x.value();
  const std::size_t L = xv.rows(), d = xv.cols();
  if (num_heads == 0 || d % num_heads != 0 || (d / num_heads) % 2 != 0) {
    throw std::invalid_argument("rotary: width " + std::to_string(d) + " needs an even head dimension over " +
                                std::to_string(num_heads) + " heads");
  }
  const std::size_t hd = d / num_heads, half = hd / 2;
  // Angle tables shared by forward and backward.
  std::vector<double> cosv(L * half), sinv(L * half);
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t j = 0; j < half; ++j) {
      const double theta = static_cast<double>(p) *
                           std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(hd));
      cosv[p * half + j] = std::cos(theta);
      sinv[p * half + j] = std::sin(theta);
    }
  }
  Tensor out = Tensor::matrix(L, d);
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t h = 0; h < num_heads; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t j = 0; j < half; ++j) {
        const double c = cosv[p * half + j], s = sinv[p * half + j];
        const double x1 = xv.at(p, off + j), x2 = xv.at(p, off + half + j);
        out.at(p, off + j) = x1 * c - x2 * s;
        out.at(p, off + half + j) = x1 * s + x2 * c;
      }
    }
  }
  Tape* t = &x.tape();
  return t->record(std::move(out), {x},
                   [t, x, L, num_heads, hd, half, cosv = std::move(cosv), sinv = std::move(sinv)](const Tensor& g) {
                     Tensor& gx = t->grad(x);
                     for (std::size_t p = 0; p < L; ++p) {
                       for (std::size_t h = 0; h < num_heads; ++h) {
                         const std::size_t off = h * hd;
                         for (std::size_t j = 0; j < half; ++j) {
                           const double c = cosv[p * half + j], s = sinv[p * half + j];
                           const double g1 = g.at(p, off + j), g2 = g.at(p, off + half + j);
                           gx.at(p, off + j) += g1 * c + g2 * s;
                           gx.at(p, off + half + j) += -g1 * s + g2 * c;
                         }
                       }
                     }
                   });
}

namespace {

Tensor gather_head(const Tensor& x, std::size_t head, std::size_t hd) {
  Tensor out = Tensor::matrix(x.rows(), hd);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.row(r).subspan(head * hd, hd);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

void scatter_head_add(Tensor& dst, const Tensor& src, std::size_t head, std::size_t hd) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    auto d = dst.row(r).subspan(head * hd, hd);
    const auto s = src.row(r);
    for (std::size_t j = 0; j < hd; ++j) d[j] += s[j];
  }
}

}  // namespace

Var attention(Var q, Var k, Var v, std::size_t num_heads, AttentionMode mode,
              std::span<const std::uint8_t> key_mask) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const std::size_t lq = qv.rows(), lk = kv.rows(), d = qv.cols();
  if (kv.cols() != d) shape_error("attention q/k", qv, kv);
  if (!vv.same_shape(kv)) shape_error("attention k/v", kv, vv);
  if (num_heads == 0 || d % num_heads != 0) {
    throw std::invalid_argument("attention: " + std::to_string(num_heads) + " heads do not divide width " +
                                std::to_string(d));
  }
  if (!key_mask.empty() && key_mask.size() != lk) {
    throw std::invalid_argument("attention: key mask of length " + std::to_string(key_mask.size()) + " for " +
                                std::to_string(lk) + " keys");
  }
  if (mode == AttentionMode::Causal && lq != lk) {
    throw std::invalid_argument("attention: causal mode needs equal query/key lengths");
  }
  const std::size_t hd = d / num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  auto allowed = [&](std::size_t i, std::size_t j) {
    if (!key_mask.empty() && !key_mask[j]) return false;
    return mode != AttentionMode::Causal || j <= i;
  };
  for (std::size_t i = 0; i < lq; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < lk && !any; ++j) any = allowed(i, j);
    if (!any) throw std::domain_error("attention: query row " + std::to_string(i) + " has no unmasked key");
  }

  Tensor out = Tensor::matrix(lq, d);
  std::vector<Tensor> probs;
  probs.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const Tensor qh = gather_head(qv, h, hd);
    const Tensor kh = gather_head(kv, h, hd);
    const Tensor vh = gather_head(vv, h, hd);
    Tensor s = Tensor::matrix(lq, lk);
    kernels::matmul_a_bt_acc(qh.values(), kh.values(), s.values(), lq, hd, lk);
    for (std::size_t i = 0; i < lq; ++i) {
      for (std::size_t j = 0; j < lk; ++j) s.at(i, j) = allowed(i, j) ? s.at(i, j) * inv_sqrt : kNegInf;
    }
    kernels::softmax_rows(s.values(), lq, lk);
    Tensor oh = Tensor::matrix(lq, hd);
    kernels::matmul_acc(s.values(), vh.values(), oh.values(), lq, lk, hd);
    scatter_head_add(out, oh, h, hd);
    probs.push_back(std::move(s));
  }

  Tape* t = &q.tape();
  return t->record(std::move(out), {q, k, v},
                   [t, q, k, v, num_heads, hd, lq, lk, inv_sqrt, probs = std::move(probs)](const Tensor& g) {
                     for (std::size_t h = 0; h < num_heads; ++h) {
                       const Tensor& p = probs[h];
                       const Tensor goh = gather_head(g, h, hd);
                       if (v.requires_grad()) {
                         Tensor gvh = Tensor::matrix(lk, hd);
                         kernels::matmul_at_b_acc(p.values(), goh.values(), gvh.values(), lk, lq, hd);
                         scatter_head_add(t->grad(v), gvh, h, hd);
                       }
                       if (!q.requires_grad() && !k.requires_grad()) continue;
                       const Tensor vh = gather_head(v.value(), h, hd);
                       Tensor ds = Tensor::matrix(lq, lk);
                       kernels::matmul_a_bt_acc(goh.values(), vh.values(), ds.values(), lq, hd, lk);
                       for (std::size_t i = 0; i < lq; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < lk; ++j) dot += ds.at(i, j) * p.at(i, j);
                         for (std::size_t j = 0; j < lk; ++j) ds.at(i, j) = p.at(i, j) * (ds.at(i, j) - dot) * inv_sqrt;
                       }
                       if (q.requires_grad()) {
                         const Tensor kh = gather_head(k.value(), h, hd);
                         Tensor gqh = Tensor::matrix(lq, hd);
                         kernels::matmul_acc(ds.values(), kh.values(), gqh.values(), lq, lk, hd);
                         scatter_head_add(t->grad(q), gqh, h, hd);
                       }
                       if (k.requires_grad()) {
                         const Tensor qh = gather_head(q.value(), h, hd);
                         Tensor gkh = Tensor::matrix(lk, hd);
                         kernels::matmul_at_b_acc(ds.values(), qh.values(), gkh.values(), lk, lq, hd);
                         scatter_head_add(t->grad(k), gkh, h, hd);
                       }
                     }
                   });
}

Var select_rows(Var x, std::span<const std::size_t> rows) {
  const Tensor& xv = x.value();
  if (rows.empty()) throw std::invalid_argument("select_rows: empty row list");
  Tensor out = Tensor::matrix(rows.size(), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) {
      throw std::out_of_range("select_rows: row " + std::to_string(rows[i]) + " outside " + xv.shape_string());
    }
    const auto src = xv.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  Tape* t = &x.tape();
  std::vector<std::size_t> saved(rows.begin(), rows.end());
  return t->record(std::move(out), {x}, [t, x, saved = std::move(saved)](const Tensor& g) {
    Tensor& gx = t->grad(x);
    for (std::size_t i = 0; i < saved.size(); ++i) {
      auto dst = gx.row(saved[i]);
      const auto src = g.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: nothing to concatenate");
  const std::size_t d = parts[0].value().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != d) shape_error("concat_rows", parts[0].value(), p.value());
    total += p.value().rows();
  }
  Tensor out = Tensor::matrix(total, d);
  std::size_t r = 0;
  for (const auto& p : parts) {
    const auto src = p.value().values();
    std::copy(src.begin(), src.end(), out.row(r).begin());
    r += p.value().rows();
  }
  Tape* t = &parts[0].tape();
  std::vector<Var> saved(parts.begin(), parts.end());
  return t->record(std::move(out), parts, [t, saved](const Tensor& g) {
    std::size_t r = 0;
    for (const auto& p : saved) {
      const std::size_t n = p.value().size();
      if (p.requires_grad()) {
        auto dst = t->grad(p).values();
        const auto src = g.values().subspan(r * g.cols(), n);
        for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
      }
      r += p.value().rows();
    }
  });
}

Var l1_loss(Var pred, const Tensor& target, std::span<const std::uint8_t> mask) {
  const Tensor& pv = pred.value();
  if (!pv.same_shape(target)) shape_error("l1_loss", pv, target);
  if (mask.size() != pv.size()) {
    throw std::invalid_argument("l1_loss: mask has " + std::to_string(mask.size()) + " cells for " +
                                pv.shape_string());
  }
  std::size_t count = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (!mask[i]) continue;
    ++count;
    sum += std::abs(pv[i] - target[i]);
  }
  if (count == 0) throw std::domain_error("l1_loss: mask selects no cell");
  const double inv = 1.0 / static_cast<double>(count);
  Tape* t = &pred.tape();
  std::vector<std::uint8_t> saved(mask.begin(), mask.end());
  return t->record(Tensor::scalar(sum * inv), {pred}, [t, pred, target, saved = std::move(saved), inv](const Tensor& g) {
    const auto pv = pred.value().values();
    auto gp = t->grad(pred).values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      if (!saved[i]) continue;
      const double diff = pv[i] - target[i];
      const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      gp[i] += g[0] * sign * inv;
    }
  });
}

Var bce_with_logits(Var logits, const Tensor& target) {
  const Tensor& xv = logits.value();
  if (!xv.same_shape(target)) shape_error("bce_with_logits", xv, target);
  double sum = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) sum += bce_with_logits_value(xv[i], target[i]);
  const double inv = 1.0 / static_cast<double>(xv.size());
  Tape* t = &logits.tape();
  return t->record(Tensor::scalar(sum * inv), {logits}, [t, logits, target, inv](const Tensor& g) {
    const auto xv = logits.value().values();
    auto gx = t->grad(logits).values();
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[0] * (sigmoid(xv[i]) - target[i]) * inv;
  });
}

Var weighted_sum(Var x, const Tensor& weights) {
  const Tensor& xv = x.value();
  if (xv.size() != weights.size()) shape_error("weighted_sum", xv, weights);
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * weights[i];
  Tape* t = &x.tape();
  return t->record(Tensor::scalar(s), {x}, [t, x, weights](const Tensor& g) {
    auto gx = t->grad(x).values();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * weights[i];
  });
}

}  // namespace molbench::ad
