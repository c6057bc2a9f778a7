#include "seismogpt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "seismogpt/errors.hpp"

namespace seismo {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Offsets into `b` for each row (all axes but the last) of `a`, plus the
// stride of b along a's last axis (0 when broadcast).
struct BroadcastPlan {
  std::vector<std::size_t> row_offsets;
  std::size_t inner = 1;
  std::size_t inner_stride = 1;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) {
    throw DimensionError("cannot broadcast " + shape_string(b) + " into " + shape_string(a));
  }
  const std::size_t r = a.size();
  Shape bext(r, 1);
  std::copy(b.begin(), b.end(), bext.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
  for (std::size_t i = 0; i < r; ++i) {
    if (bext[i] != 1 && bext[i] != a[i]) {
      throw DimensionError("cannot broadcast " + shape_string(b) + " into " + shape_string(a));
    }
  }
  auto bstr = row_major_strides(bext);
  for (std::size_t i = 0; i < r; ++i) {
    if (bext[i] == 1) bstr[i] = 0;
  }
  BroadcastPlan plan;
  plan.inner = r ? a.back() : 1;
  plan.inner_stride = r ? bstr.back() : 0;
  const std::size_t rows = shape_numel(a) / plan.inner;
  plan.row_offsets.resize(rows);
  std::vector<std::size_t> idx(r ? r - 1 : 0, 0);
  std::size_t offset = 0;
  for (std::size_t row = 0; row < rows; ++row) {
    plan.row_offsets[row] = offset;
    for (std::size_t ax = idx.size(); ax-- > 0;) {
      ++idx[ax];
      offset += bstr[ax];
      if (idx[ax] < a[ax]) break;
      offset -= bstr[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return plan;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void accumulate(Node& target, const Buffer& g) {
  auto& dst = target.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    Buffer out(a.numel());
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    const bool rec = detail::should_record({&a, &b});
    NodePtr an = a.node(), bn = b.node();
    return detail::make_result(a.shape(), std::move(out), rec, {an, bn}, [an, bn](Node& self) {
      if (an->requires_grad) accumulate(*an, self.grad);
      if (bn->requires_grad) accumulate(*bn, self.grad);
    });
  }
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape()));
  Buffer out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t inner = plan->inner;
  const std::size_t st = plan->inner_stride;
  for (std::size_t row = 0; row < plan->row_offsets.size(); ++row) {
    const double* bp = bd.data() + plan->row_offsets[row];
    const double* ap = ad.data() + row * inner;
    double* op = out.data() + row * inner;
    for (std::size_t j = 0; j < inner; ++j) op[j] = ap[j] + bp[j * st];
  }
  const bool rec = detail::should_record({&a, &b});
  NodePtr an = a.node(), bn = b.node();
  return detail::make_result(a.shape(), std::move(out), rec, {an, bn}, [an, bn, plan](Node& self) {
    if (an->requires_grad) accumulate(*an, self.grad);
    if (bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      const std::size_t inner = plan->inner;
      const std::size_t st = plan->inner_stride;
      for (std::size_t row = 0; row < plan->row_offsets.size(); ++row) {
        double* bp = gb.data() + plan->row_offsets[row];
        const double* gp = self.grad.data() + row * inner;
        for (std::size_t j = 0; j < inner; ++j) bp[j * st] += gp[j];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Buffer out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  const bool rec = detail::should_record({&a, &b});
  NodePtr an = a.node(), bn = b.node();
  return detail::make_result(a.shape(), std::move(out), rec, {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) accumulate(*an, self.grad);
    if (bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Buffer out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  const bool rec = detail::should_record({&a, &b});
  NodePtr an = a.node(), bn = b.node();
  return detail::make_result(a.shape(), std::move(out), rec, {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) {
      auto& ga = an->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * an->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  Buffer out(a.numel());
  const auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * factor;
  const bool rec = detail::should_record({&a});
  NodePtr an = a.node();
  return detail::make_result(a.shape(), std::move(out), rec, {an}, [an, factor](Node& self) {
    auto& ga = an->grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * factor;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t n = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape()[a.rank() - 1];
  const std::size_t kb = b.shape()[b.rank() - 2];
  const std::size_t m = b.shape()[b.rank() - 1];
  if (k != kb) {
    throw DimensionError("matmul inner extents differ: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const bool rec = detail::should_record({&a, &b});
  NodePtr an = a.node(), bn = b.node();

  if (b.rank() == 2) {
    // Right operand shared across the batch: one tall GEMM.
    const std::size_t rows = a.numel() / k;
    Shape out_shape = a.shape();
    out_shape.back() = m;
    Buffer out(rows * m);
    MatMap(out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m)).noalias() =
        ConstMatMap(an->data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k)) *
        ConstMatMap(bn->data.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    return detail::make_result(std::move(out_shape), std::move(out), rec, {an, bn},
                               [an, bn, rows, k, m](Node& self) {
      const auto R = static_cast<Eigen::Index>(rows);
      const auto K = static_cast<Eigen::Index>(k);
      const auto M = static_cast<Eigen::Index>(m);
      ConstMatMap g(self.grad.data(), R, M);
      if (an->requires_grad) {
        MatMap(an->grad_buffer().data(), R, K).noalias() += g * ConstMatMap(bn->data.data(), K, M).transpose();
      }
      if (bn->requires_grad) {
        MatMap(bn->grad_buffer().data(), K, M).noalias() += ConstMatMap(an->data.data(), R, K).transpose() * g;
      }
    });
  }

  // General broadcast over leading batch extents.
  Shape abatch(a.shape().begin(), a.shape().end() - 2);
  Shape bbatch(b.shape().begin(), b.shape().end() - 2);
  const std::size_t r = std::max(abatch.size(), bbatch.size());
  Shape aext(r, 1), bext(r, 1), obatch(r, 1);
  std::copy(abatch.begin(), abatch.end(), aext.begin() + static_cast<std::ptrdiff_t>(r - abatch.size()));
  std::copy(bbatch.begin(), bbatch.end(), bext.begin() + static_cast<std::ptrdiff_t>(r - bbatch.size()));
  for (std::size_t i = 0; i < r; ++i) {
    if (aext[i] != bext[i] && aext[i] != 1 && bext[i] != 1) {
      throw DimensionError("matmul batch extents not broadcastable: " + shape_string(a.shape()) + " x " +
                           shape_string(b.shape()));
    }
    obatch[i] = std::max(aext[i], bext[i]);
  }
  auto astr = row_major_strides(aext);
  auto bstr = row_major_strides(bext);
  const std::size_t nbatch = shape_numel(obatch);
  auto pairs = std::make_shared<std::vector<std::pair<std::size_t, std::size_t>>>(nbatch);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t bi = 0; bi < nbatch; ++bi) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t ax = 0; ax < r; ++ax) {
      if (aext[ax] != 1) ia += idx[ax] * astr[ax];
      if (bext[ax] != 1) ib += idx[ax] * bstr[ax];
    }
    (*pairs)[bi] = {ia, ib};
    for (std::size_t ax = r; ax-- > 0;) {
      if (++idx[ax] < obatch[ax]) break;
      idx[ax] = 0;
    }
  }
  Shape out_shape = obatch;
  out_shape.push_back(n);
  out_shape.push_back(m);
  Buffer out(nbatch * n * m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  const auto M = static_cast<Eigen::Index>(m);
  for (std::size_t bi = 0; bi < nbatch; ++bi) {
    const auto [ia, ib] = (*pairs)[bi];
    MatMap(out.data() + bi * n * m, N, M).noalias() =
        ConstMatMap(an->data.data() + ia * n * k, N, K) * ConstMatMap(bn->data.data() + ib * k * m, K, M);
  }
  return detail::make_result(std::move(out_shape), std::move(out), rec, {an, bn},
                             [an, bn, pairs, N, K, M](Node& self) {
    const auto nk = static_cast<std::size_t>(N * K);
    const auto km = static_cast<std::size_t>(K * M);
    const auto nm = static_cast<std::size_t>(N * M);
    for (std::size_t bi = 0; bi < pairs->size(); ++bi) {
      const auto [ia, ib] = (*pairs)[bi];
      ConstMatMap g(self.grad.data() + bi * nm, N, M);
      if (an->requires_grad) {
        MatMap(an->grad_buffer().data() + ia * nk, N, K).noalias() +=
            g * ConstMatMap(bn->data.data() + ib * km, K, M).transpose();
      }
      if (bn->requires_grad) {
        MatMap(bn->grad_buffer().data() + ib * km, K, M).noalias() +=
            ConstMatMap(an->data.data() + ia * nk, N, K).transpose() * g;
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(1)) {
    throw DimensionError("linear: weight " + shape_string(weight.shape()) + " incompatible with bias " +
                         shape_string(bias.shape()));
  }
  return add(matmul(x, weight), bias);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  const bool rec = detail::should_record({&a});
  NodePtr an = a.node();
  return detail::make_result(std::move(shape), an->data, rec, {an},
                             [an](Node& self) { accumulate(*an, self.grad); });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const std::size_t r = a.rank();
  if (axes.size() != r) throw DimensionError("permute: axes rank mismatch for " + shape_string(a.shape()));
  std::vector<bool> seen(r, false);
  for (auto ax : axes) {
    if (ax >= r || seen[ax]) throw DimensionError("permute: invalid axes for " + shape_string(a.shape()));
    seen[ax] = true;
  }
  const auto in_str = row_major_strides(a.shape());
  Shape out_shape(r);
  std::vector<std::size_t> src_str(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = a.shape()[axes[i]];
    src_str[i] = in_str[axes[i]];
  }
  // Source offset of every output element, rows of the last output axis.
  const std::size_t inner = out_shape.back();
  const std::size_t inner_stride = src_str.back();
  const std::size_t rows = a.numel() / inner;
  auto row_src = std::make_shared<std::vector<std::size_t>>(rows);
  std::vector<std::size_t> idx(r - 1, 0);
  std::size_t off = 0;
  for (std::size_t row = 0; row < rows; ++row) {
    (*row_src)[row] = off;
    for (std::size_t ax = r - 1; ax-- > 0;) {
      ++idx[ax];
      off += src_str[ax];
      if (idx[ax] < out_shape[ax]) break;
      off -= src_str[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  Buffer out(a.numel());
  const auto ad = a.data();
  for (std::size_t row = 0; row < rows; ++row) {
    const double* src = ad.data() + (*row_src)[row];
    double* dst = out.data() + row * inner;
    for (std::size_t j = 0; j < inner; ++j) dst[j] = src[j * inner_stride];
  }
  const bool rec = detail::should_record({&a});
  NodePtr an = a.node();
  return detail::make_result(std::move(out_shape), std::move(out), rec, {an},
                             [an, row_src, inner, inner_stride](Node& self) {
    auto& ga = an->grad_buffer();
    for (std::size_t row = 0; row < row_src->size(); ++row) {
      double* dst = ga.data() + (*row_src)[row];
      const double* src = self.grad.data() + row * inner;
      for (std::size_t j = 0; j < inner; ++j) dst[j * inner_stride] += src[j];
    }
  });
}

Tensor transpose_last2(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("transpose_last2 on " + shape_string(a.shape()));
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
  return permute(a, axes);
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t w = x.shape().back();
  const std::size_t rows = x.numel() / w;
  const auto xd = x.data();
  Buffer out(x.numel());
  constexpr double masked_threshold = kMaskedScore / 2;
  for (std::size_t row = 0; row < rows; ++row) {
    const double* xp = xd.data() + row * w;
    double* yp = out.data() + row * w;
    double mx = -std::numeric_limits<double>::infinity();
    bool poisoned = false;
    for (std::size_t j = 0; j < w; ++j) {
      if (std::isnan(xp[j]) || xp[j] == std::numeric_limits<double>::infinity()) poisoned = true;
      mx = std::max(mx, xp[j]);
    }
    if (poisoned) {
      std::fill(yp, yp + w, std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    if (!(mx > masked_threshold)) {
      throw DegenerateMaskError("softmax_lastdim: every entry of row " + std::to_string(row) + " is masked");
    }
    double s = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      yp[j] = std::exp(xp[j] - mx);
      s += yp[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < w; ++j) yp[j] *= inv;
  }
  const bool rec = detail::should_record({&x});
  NodePtr xn = x.node();
  auto res = detail::make_result(x.shape(), std::move(out), rec, {xn}, nullptr);
  if (rec) {
    res.node()->backward = [xn, w, rows](Node& self) {
      auto& gx = xn->grad_buffer();
      for (std::size_t row = 0; row < rows; ++row) {
        const double* y = self.data.data() + row * w;
        const double* g = self.grad.data() + row * w;
        double dot = 0.0;
        for (std::size_t j = 0; j < w; ++j) dot += g[j] * y[j];
        double* dx = gx.data() + row * w;
        for (std::size_t j = 0; j < w; ++j) dx[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return res;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t w = x.shape().back();
  if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != w || bias.dim(0) != w) {
    throw DimensionError("layernorm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not match last extent of " + shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / w;
  auto xhat = std::make_shared<Buffer>(x.numel());
  auto rstd = std::make_shared<Buffer>(rows);
  Buffer out(x.numel());
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  for (std::size_t row = 0; row < rows; ++row) {
    const double* xp = xd.data() + row * w;
    double mu = 0.0;
    for (std::size_t j = 0; j < w; ++j) mu += xp[j];
    mu /= static_cast<double>(w);
    double var = 0.0;
    for (std::size_t j = 0; j < w; ++j) var += (xp[j] - mu) * (xp[j] - mu);
    var /= static_cast<double>(w);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[row] = rs;
    double* hp = xhat->data() + row * w;
    double* op = out.data() + row * w;
    for (std::size_t j = 0; j < w; ++j) {
      hp[j] = (xp[j] - mu) * rs;
      op[j] = hp[j] * gd[j] + bd[j];
    }
  }
  const bool rec = detail::should_record({&x, &gain, &bias});
  NodePtr xn = x.node(), gn = gain.node(), bn = bias.node();
  return detail::make_result(x.shape(), std::move(out), rec, {xn, gn, bn},
                             [xn, gn, bn, xhat, rstd, w, rows](Node& self) {
    const double inv_w = 1.0 / static_cast<double>(w);
    if (gn->requires_grad || bn->requires_grad) {
      auto& gg = gn->grad_buffer();
      auto& gb = bn->grad_buffer();
      for (std::size_t row = 0; row < rows; ++row) {
        const double* g = self.grad.data() + row * w;
        const double* h = xhat->data() + row * w;
        for (std::size_t j = 0; j < w; ++j) {
          gg[j] += g[j] * h[j];
          gb[j] += g[j];
        }
      }
    }
    if (xn->requires_grad) {
      auto& gx = xn->grad_buffer();
      Buffer dh(w);
      for (std::size_t row = 0; row < rows; ++row) {
        const double* g = self.grad.data() + row * w;
        const double* h = xhat->data() + row * w;
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
          dh[j] = g[j] * gn->data[j];
          mean_dh += dh[j];
          mean_dh_h += dh[j] * h[j];
        }
        mean_dh *= inv_w;
        mean_dh_h *= inv_w;
        double* dx = gx.data() + row * w;
        const double rs = (*rstd)[row];
        for (std::size_t j = 0; j < w; ++j) dx[j] += rs * (dh[j] - mean_dh - h[j] * mean_dh_h);
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  const auto xd = x.data();
  Buffer out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xd[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v)));
  }
  const bool rec = detail::should_record({&x});
  NodePtr xn = x.node();
  return detail::make_result(x.shape(), std::move(out), rec, {xn}, [xn](Node& self) {
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xn->data[i];
      const double t = std::tanh(c * (v + a * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * a * v * v);
      gx[i] += self.grad[i] * d;
    }
  });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ContractError("dropout probability must be < 1");
  auto keep = std::make_shared<Buffer>(x.numel());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = 1.0 / (1.0 - p);
  const auto xd = x.data();
  Buffer out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*keep)[i] = u(rng) >= p ? s : 0.0;
    out[i] = xd[i] * (*keep)[i];
  }
  const bool rec = detail::should_record({&x});
  NodePtr xn = x.node();
  return detail::make_result(x.shape(), std::move(out), rec, {xn}, [xn, keep](Node& self) {
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * (*keep)[i];
  });
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride, std::size_t padding) {
  return conv1d(x, kernels, Tensor(), stride, padding);
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  if (x.rank() < 2 || kernels.rank() != 3) {
    throw DimensionError("conv1d: input " + shape_string(x.shape()) + ", kernels " +
                         shape_string(kernels.shape()));
  }
  if (stride == 0) throw ContractError("conv1d: stride must be positive");
  const std::size_t cin = x.shape()[x.rank() - 2];
  const std::size_t width = x.shape().back();
  const std::size_t cout = kernels.dim(0);
  const std::size_t ksize = kernels.dim(2);
  if (kernels.dim(1) != cin) {
    throw DimensionError("conv1d: kernels " + shape_string(kernels.shape()) + " expect " +
                         std::to_string(kernels.dim(1)) + " input channels, input " + shape_string(x.shape()));
  }
  if (width + 2 * padding < ksize) {
    throw DimensionError("conv1d: kernel width " + std::to_string(ksize) + " exceeds padded input " +
                         shape_string(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv1d: bias " + shape_string(bias.shape()) + " for " + std::to_string(cout) +
                         " output channels");
  }
  const std::size_t wout = (width + 2 * padding - ksize) / stride + 1;
  const std::size_t batch = x.numel() / (cin * width);
  const std::size_t ck = cin * ksize;
  const std::size_t cols = batch * wout;

  // colT [C_in*K, batch*W']
  auto colT = std::make_shared<Buffer>(ck * cols, 0.0);
  const auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* xp = xd.data() + (b * cin + ci) * width;
      for (std::size_t kk = 0; kk < ksize; ++kk) {
        double* cp = colT->data() + (ci * ksize + kk) * cols + b * wout;
        for (std::size_t w = 0; w < wout; ++w) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(w * stride + kk) - static_cast<std::ptrdiff_t>(padding);
          if (src >= 0 && src < static_cast<std::ptrdiff_t>(width)) cp[w] = xp[src];
        }
      }
    }
  }
  Buffer prod(cout * cols);
  MatMap(prod.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cols)).noalias() =
      ConstMatMap(kernels.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(ck)) *
      ConstMatMap(colT->data(), static_cast<Eigen::Index>(ck), static_cast<Eigen::Index>(cols));

  Shape out_shape(x.shape().begin(), x.shape().end() - 2);
  out_shape.push_back(cout);
  out_shape.push_back(wout);
  Buffer out(batch * cout * wout);
  const auto bd = bias.defined() ? bias.data() : std::span<const double>();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double* src = prod.data() + co * cols + b * wout;
      double* dst = out.data() + (b * cout + co) * wout;
      const double bv = bd.empty() ? 0.0 : bd[co];
      for (std::size_t w = 0; w < wout; ++w) dst[w] = src[w] + bv;
    }
  }

  const bool rec = detail::should_record({&x, &kernels, &bias});
  NodePtr xn = x.node(), kn = kernels.node(), bn = bias.defined() ? bias.node() : nullptr;
  std::vector<NodePtr> parents{xn, kn};
  if (bn) parents.push_back(bn);
  if (!rec) colT.reset();
  return detail::make_result(std::move(out_shape), std::move(out), rec, std::move(parents),
                             [=](Node& self) {
    Buffer gprod(cout * cols);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t co = 0; co < cout; ++co) {
        const double* src = self.grad.data() + (b * cout + co) * wout;
        std::copy(src, src + wout, gprod.data() + co * cols + b * wout);
      }
    }
    const auto CO = static_cast<Eigen::Index>(cout);
    const auto CK = static_cast<Eigen::Index>(ck);
    const auto COLS = static_cast<Eigen::Index>(cols);
    ConstMatMap g(gprod.data(), CO, COLS);
    if (bn && bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (std::size_t co = 0; co < cout; ++co) gb[co] += g.row(static_cast<Eigen::Index>(co)).sum();
    }
    if (kn->requires_grad) {
      MatMap(kn->grad_buffer().data(), CO, CK).noalias() += g * ConstMatMap(colT->data(), CK, COLS).transpose();
    }
    if (xn->requires_grad) {
      RowMat dcol = ConstMatMap(kn->data.data(), CO, CK).transpose() * g;
      auto& gx = xn->grad_buffer();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t ci = 0; ci < cin; ++ci) {
          double* xp = gx.data() + (b * cin + ci) * width;
          for (std::size_t kk = 0; kk < ksize; ++kk) {
            const double* cp = dcol.data() + (ci * ksize + kk) * cols + b * wout;
            for (std::size_t w = 0; w < wout; ++w) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(w * stride + kk) - static_cast<std::ptrdiff_t>(padding);
              if (src >= 0 && src < static_cast<std::ptrdiff_t>(width)) xp[src] += cp[w];
            }
          }
        }
      }
    }
  });
}

Tensor mean_lastdim(const Tensor& x) {
  const std::size_t w = x.shape().back();
  const std::size_t rows = x.numel() / w;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  if (out_shape.empty()) out_shape.push_back(1);
  Buffer out(rows);
  const auto xd = x.data();
  for (std::size_t row = 0; row < rows; ++row) {
    double s = 0.0;
    for (std::size_t j = 0; j < w; ++j) s += xd[row * w + j];
    out[row] = s / static_cast<double>(w);
  }
  const bool rec = detail::should_record({&x});
  NodePtr xn = x.node();
  return detail::make_result(std::move(out_shape), std::move(out), rec, {xn}, [xn, w, rows](Node& self) {
    auto& gx = xn->grad_buffer();
    const double inv = 1.0 / static_cast<double>(w);
    for (std::size_t row = 0; row < rows; ++row) {
      const double g = self.grad[row] * inv;
      for (std::size_t j = 0; j < w; ++j) gx[row * w + j] += g;
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto xd = x.data();
  const double s = std::accumulate(xd.begin(), xd.end(), 0.0);
  const bool rec = detail::should_record({&x});
  NodePtr xn = x.node();
  return detail::make_result({1}, {s}, rec, {xn}, [xn](Node& self) {
    auto& gx = xn->grad_buffer();
    for (auto& v : gx) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

}  // namespace seismo
