#include "ulrn/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include <cblas.h>

#include "ulrn/errors.hpp"

namespace ulrn::ad {

namespace {

using detail::Node;

Graph& graph_of(const Tensor& a) {
  require(a.valid(), ErrorKind::kContract, "operation on an empty tensor");
  return a.graph();
}

Graph& graph_of(const Tensor& a, const Tensor& b) {
  Graph& g = graph_of(a);
  require(b.valid() && &b.graph() == &g, ErrorKind::kContract,
          "operands belong to different graphs");
  return g;
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  require(x.rank() == rank, ErrorKind::kShape,
          std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
              shape_string(x.shape()));
}

std::span<const float> values(const Node* n) { return *n->value; }

// C[m,n] += op(A) * op(B), row-major; op transposes when the flag is set.
// BLAS threading is pinned to one thread: parallelism comes from running
// documents side by side, and a fixed kernel keeps results reproducible.
void gemm_accumulate(bool trans_a, bool trans_b, const float* a, const float* b, float* c,
                     std::size_t m, std::size_t k, std::size_t n) {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
  const auto mi = static_cast<blasint>(m), ki = static_cast<blasint>(k),
             ni = static_cast<blasint>(n);
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, mi, ni, ki, 1.0f, a, trans_a ? mi : ki, b,
              trans_b ? ki : ni, 1.0f, c, ni);
}

std::vector<float> transposed(std::span<const float> x, std::size_t rows,
                              std::size_t cols) {
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
  return out;
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, Forward f, Derivative df) {
  Graph& g = graph_of(x);
  auto in = x.data();
  std::vector<float> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  Node* px = x.node();
  return g.record(x.shape(), std::move(out), x.requires_grad(),
                  [px, df](const Node& self) {
                    auto gx = px->grad_buffer();
                    auto xv = values(px);
                    auto yv = values(&self);
                    for (std::size_t i = 0; i < gx.size(); ++i)
                      gx[i] += self.grad[i] * df(xv[i], yv[i]);
                  });
}

bool broadcastable(const Shape& from, const Shape& to) {
  if (from.size() > to.size()) return false;
  const std::size_t lead = to.size() - from.size();
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i] != to[lead + i] && from[i] != 1) return false;
  }
  return true;
}

enum class BinaryOp { kAdd, kSub, kMul };

Tensor binary(const Tensor& a_in, const Tensor& b_in, BinaryOp op) {
  graph_of(a_in, b_in);
  Tensor a = a_in;
  Tensor b = b_in;
  if (a.shape() != b.shape()) {
    if (broadcastable(b.shape(), a.shape())) {
      b = broadcast_to(b, a.shape());
    } else if (broadcastable(a.shape(), b.shape())) {
      a = broadcast_to(a, b.shape());
    } else {
      fail(ErrorKind::kShape, "cannot broadcast " + shape_string(a.shape()) +
                                  " with " + shape_string(b.shape()));
    }
  }
  auto av = a.data();
  auto bv = b.data();
  std::vector<float> out(av.size());
  switch (op) {
    case BinaryOp::kAdd:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
      break;
    case BinaryOp::kSub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
      break;
    case BinaryOp::kMul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
      break;
  }
  Node* pa = a.node();
  Node* pb = b.node();
  return a.graph().record(
      a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
      [pa, pb, op](const Node& self) {
        const auto& gy = self.grad;
        if (pa->requires_grad) {
          auto ga = pa->grad_buffer();
          if (op == BinaryOp::kMul) {
            auto bv = values(pb);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bv[i];
          } else {
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
          }
        }
        if (pb->requires_grad) {
          auto gb = pb->grad_buffer();
          if (op == BinaryOp::kMul) {
            auto av = values(pa);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * av[i];
          } else if (op == BinaryOp::kSub) {
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
          } else {
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i];
          }
        }
      });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  Graph& g = graph_of(a, b);
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          ErrorKind::kShape,
          "matmul dimension mismatch: " + shape_string(a.shape()) + " x " +
              shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(m * n, 0.0f);
  gemm_accumulate(false, false, a.data().data(), b.data().data(), out.data(), m, k, n);
  Node* pa = a.node();
  Node* pb = b.node();
  return g.record({m, n}, std::move(out), a.requires_grad() || b.requires_grad(),
                  [pa, pb, m, k, n](const Node& self) {
                    const float* gc = self.grad.data();
                    if (pa->requires_grad) {
                      // dA = dC * B^T
                      gemm_accumulate(false, true, gc, values(pb).data(),
                                      pa->grad_buffer().data(), m, n, k);
                    }
                    if (pb->requires_grad) {
                      // dB = A^T * dC
                      gemm_accumulate(true, false, values(pa).data(), gc,
                                      pb->grad_buffer().data(), k, m, n);
                    }
                  });
}

Tensor transpose(const Tensor& x) {
  Graph& g = graph_of(x);
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Node* px = x.node();
  return g.record({c, r}, transposed(x.data(), r, c), x.requires_grad(),
                  [px, r, c](const Node& self) {
                    auto gx = px->grad_buffer();
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j)
                        gx[i * c + j] += self.grad[j * r + i];
                  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  Graph& g = graph_of(x);
  require(numel(shape) == x.size(), ErrorKind::kShape,
          "cannot reshape " + shape_string(x.shape()) + " to " +
              shape_string(shape));
  Node* px = x.node();
  std::vector<float> out(x.data().begin(), x.data().end());
  return g.record(std::move(shape), std::move(out), x.requires_grad(),
                  [px](const Node& self) {
                    auto gx = px->grad_buffer();
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                  });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  Graph& g = graph_of(x);
  require(broadcastable(x.shape(), shape), ErrorKind::kShape,
          "cannot broadcast " + shape_string(x.shape()) + " to " +
              shape_string(shape));
  // Map each output index to its source index via per-axis source strides
  // (zero on broadcast axes).
  const std::size_t rank = shape.size();
  const std::size_t lead = rank - x.rank();
  std::vector<std::size_t> src_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = x.rank(); i-- > 0;) {
    src_stride[lead + i] = x.shape()[i] == 1 ? 0 : stride;
    stride *= x.shape()[i];
  }
  const std::size_t total = numel(shape);
  auto source = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t s = 0;
    for (std::size_t ax = 0; ax < rank; ++ax) s += idx[ax] * src_stride[ax];
    (*source)[flat] = s;
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < shape[ax]) break;
      idx[ax] = 0;
    }
  }
  auto xv = x.data();
  std::vector<float> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = xv[(*source)[i]];
  Node* px = x.node();
  return g.record(shape, std::move(out), x.requires_grad(),
                  [px, source](const Node& self) {
                    auto gx = px->grad_buffer();
                    for (std::size_t i = 0; i < source->size(); ++i)
                      gx[(*source)[i]] += self.grad[i];
                  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::kMul); }

Tensor scale(const Tensor& x, float factor) {
  return unary(
      x, [factor](float v) { return v * factor; },
      [factor](float, float) { return factor; });
}

Tensor add_scalar(const Tensor& x, float offset) {
  return unary(
      x, [offset](float v) { return v + offset; }, [](float, float) { return 1.0f; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0f); }

Tensor exp(const Tensor& x) {
  return unary(
      x, [](float v) { return std::exp(v); }, [](float, float y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](float v) { return std::log(std::max(v, kLogEpsilon)); },
      [](float v, float) { return v > kLogEpsilon ? 1.0f / v : 0.0f; });
}

Tensor rsqrt(const Tensor& x) {
  for (float v : x.data()) {
    require(v > 0.0f, ErrorKind::kContract, "rsqrt of a non-positive value");
  }
  return unary(
      x, [](float v) { return 1.0f / std::sqrt(v); },
      [](float, float y) { return -0.5f * y * y * y; });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](float v) { return v / (1.0f + std::exp(-v)); },
      [](float v, float) {
        const float s = 1.0f / (1.0f + std::exp(-v));
        return s + v * s * (1.0f - s);
      });
}

Tensor gelu(const Tensor& x) {
  constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
  return unary(
      x,
      [](float v) {
        return 0.5f * v * (1.0f + std::tanh(kC * (v + 0.044715f * v * v * v)));
      },
      [](float v, float) {
        const float u = kC * (v + 0.044715f * v * v * v);
        const float t = std::tanh(u);
        const float du = kC * (1.0f + 3.0f * 0.044715f * v * v);
        return 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
      });
}

Tensor sum(const Tensor& x) {
  Graph& g = graph_of(x);
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Node* px = x.node();
  return g.record({1}, {static_cast<float>(acc)}, x.requires_grad(),
                  [px](const Node& self) {
                    auto gx = px->grad_buffer();
                    const float gy = self.grad[0];
                    for (float& v : gx) v += gy;
                  });
}

Tensor mean(const Tensor& x) {
  Graph& g = graph_of(x);
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  const double n = static_cast<double>(x.size());
  Node* px = x.node();
  return g.record({1}, {static_cast<float>(acc / n)}, x.requires_grad(),
                  [px, n](const Node& self) {
                    auto gx = px->grad_buffer();
                    const float gy = static_cast<float>(self.grad[0] / n);
                    for (float& v : gx) v += gy;
                  });
}

Tensor softmax(const Tensor& x, int axis) {
  Graph& g = graph_of(x);
  const int rank = static_cast<int>(x.rank());
  const int ax = axis < 0 ? axis + rank : axis;
  require(ax >= 0 && ax < rank, ErrorKind::kShape,
          "softmax axis " + std::to_string(axis) + " invalid for " +
              shape_string(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= x.shape()[i];
  for (int i = ax + 1; i < rank; ++i) inner *= x.shape()[i];
  const std::size_t n = x.shape()[ax];

  auto xv = x.data();
  std::vector<float> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      float mx = xv[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const float e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j < n; ++j) {
        out[base + j * inner] = static_cast<float>(out[base + j * inner] * inv);
      }
    }
  }
  Node* px = x.node();
  return g.record(x.shape(), std::move(out), x.requires_grad(),
                  [px, outer, inner, n](const Node& self) {
                    auto gx = px->grad_buffer();
                    auto y = values(&self);
                    const auto& gy = self.grad;
                    for (std::size_t o = 0; o < outer; ++o) {
                      for (std::size_t in = 0; in < inner; ++in) {
                        const std::size_t base = o * n * inner + in;
                        double dot = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                          const std::size_t k = base + j * inner;
                          dot += static_cast<double>(gy[k]) * y[k];
                        }
                        const float d = static_cast<float>(dot);
                        for (std::size_t j = 0; j < n; ++j) {
                          const std::size_t k = base + j * inner;
                          gx[k] += y[k] * (gy[k] - d);
                        }
                      }
                    }
                  });
}

Tensor causal_softmax(const Tensor& x) {
  Graph& g = graph_of(x);
  require(x.rank() == 2 && x.dim(0) == x.dim(1), ErrorKind::kShape,
          "causal_softmax expects a square matrix, got " + shape_string(x.shape()));
  const std::size_t t = x.dim(0);
  auto xv = x.data();
  std::vector<float> out(xv.size(), 0.0f);
  for (std::size_t i = 0; i < t; ++i) {
    const float* row = xv.data() + i * t;
    float* orow = out.data() + i * t;
    float mx = row[0];
    for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      orow[j] = std::exp(row[j] - mx);
      total += orow[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j <= i; ++j) orow[j] = static_cast<float>(orow[j] * inv);
  }
  Node* px = x.node();
  return g.record(x.shape(), std::move(out), x.requires_grad(),
                  [px, t](const Node& self) {
                    auto gx = px->grad_buffer();
                    auto y = values(&self);
                    const auto& gy = self.grad;
                    for (std::size_t i = 0; i < t; ++i) {
                      const std::size_t base = i * t;
                      double dot = 0.0;
                      for (std::size_t j = 0; j <= i; ++j)
                        dot += static_cast<double>(gy[base + j]) * y[base + j];
                      const float d = static_cast<float>(dot);
                      for (std::size_t j = 0; j <= i; ++j)
                        gx[base + j] += y[base + j] * (gy[base + j] - d);
                    }
                  });
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, float eps) {
  Graph& g = graph_of(x, gain);
  require(x.rank() >= 1 && gain.rank() == 1 && gain.dim(0) == x.shape().back(),
          ErrorKind::kShape,
          "rms_norm gain " + shape_string(gain.shape()) + " does not match " +
              shape_string(x.shape()));
  const std::size_t n = gain.dim(0);
  const std::size_t rows = x.size() / n;
  auto xv = x.data();
  auto gv = gain.data();
  std::vector<float> out(xv.size());
  auto inv_rms = std::make_shared<std::vector<float>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = xv.data() + r * n;
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += static_cast<double>(row[j]) * row[j];
    const float inv = static_cast<float>(1.0 / std::sqrt(ss / n + eps));
    (*inv_rms)[r] = inv;
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = row[j] * inv * gv[j];
  }
  Node* px = x.node();
  Node* pg = gain.node();
  return g.record(
      x.shape(), std::move(out), x.requires_grad() || gain.requires_grad(),
      [px, pg, inv_rms, rows, n](const Node& self) {
        auto xv = values(px);
        auto gv = values(pg);
        const auto& gy = self.grad;
        if (pg->requires_grad) {
          auto gg = pg->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            const float inv = (*inv_rms)[r];
            for (std::size_t j = 0; j < n; ++j)
              gg[j] += gy[r * n + j] * xv[r * n + j] * inv;
          }
        }
        if (px->requires_grad) {
          auto gx = px->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            const float inv = (*inv_rms)[r];
            double dot = 0.0;  // sum_j dxhat_j * xhat_j
            for (std::size_t j = 0; j < n; ++j) {
              dot += static_cast<double>(gy[r * n + j]) * gv[j] * xv[r * n + j] * inv;
            }
            const float m = static_cast<float>(dot / n);
            for (std::size_t j = 0; j < n; ++j) {
              const float xhat = xv[r * n + j] * inv;
              gx[r * n + j] += inv * (gy[r * n + j] * gv[j] - xhat * m);
            }
          }
        }
      });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  Graph& g = graph_of(table);
  require_rank(table, 2, "embedding");
  require(!ids.empty(), ErrorKind::kContract, "embedding of an empty id list");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      fail(ErrorKind::kVocabulary, "token id " + std::to_string(id) +
                                       " outside vocabulary of size " +
                                       std::to_string(vocab));
    }
  }
  auto tv = table.data();
  std::vector<float> out(ids.size() * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[t]) * d, d,
                out.data() + t * d);
  }
  auto idcopy = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
  Node* pt = table.node();
  return g.record({ids.size(), d}, std::move(out), table.requires_grad(),
                  [pt, idcopy, d](const Node& self) {
                    auto gt = pt->grad_buffer();
                    for (std::size_t t = 0; t < idcopy->size(); ++t) {
                      float* dst = gt.data() + static_cast<std::size_t>((*idcopy)[t]) * d;
                      const float* src = self.grad.data() + t * d;
                      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                    }
                  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(x);
  require_rank(x, 2, "slice_rows");
  require(begin < end && end <= x.dim(0), ErrorKind::kIndex,
          "row slice [" + std::to_string(begin) + "," + std::to_string(end) +
              ") out of range for " + shape_string(x.shape()));
  const std::size_t c = x.dim(1);
  auto xv = x.data();
  std::vector<float> out(xv.begin() + begin * c, xv.begin() + end * c);
  Node* px = x.node();
  return g.record({end - begin, c}, std::move(out), x.requires_grad(),
                  [px, begin, c](const Node& self) {
                    auto gx = px->grad_buffer();
                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                      gx[begin * c + i] += self.grad[i];
                  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(x);
  require_rank(x, 2, "slice_cols");
  require(begin < end && end <= x.dim(1), ErrorKind::kIndex,
          "column slice [" + std::to_string(begin) + "," + std::to_string(end) +
              ") out of range for " + shape_string(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1), w = end - begin;
  auto xv = x.data();
  std::vector<float> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(xv.data() + i * c + begin, w, out.data() + i * w);
  Node* px = x.node();
  return g.record({r, w}, std::move(out), x.requires_grad(),
                  [px, begin, r, c, w](const Node& self) {
                    auto gx = px->grad_buffer();
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < w; ++j)
                        gx[i * c + begin + j] += self.grad[i * w + j];
                  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), ErrorKind::kContract, "concat of zero tensors");
  Graph& g = graph_of(parts[0]);
  const std::size_t c = parts[0].dim(1);
  std::size_t rows = 0;
  bool grad = false;
  std::vector<Node*> nodes;
  for (const Tensor& p : parts) {
    graph_of(parts[0], p);
    require(p.rank() == 2 && p.dim(1) == c, ErrorKind::kShape,
            "concat_rows column mismatch: " + shape_string(p.shape()));
    rows += p.dim(0);
    grad = grad || p.requires_grad();
    nodes.push_back(p.node());
  }
  std::vector<float> out;
  out.reserve(rows * c);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return g.record({rows, c}, std::move(out), grad, [nodes](const Node& self) {
    std::size_t offset = 0;
    for (Node* n : nodes) {
      const std::size_t len = n->value->size();
      if (n->requires_grad) {
        auto gn = n->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) gn[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), ErrorKind::kContract, "concat of zero tensors");
  Graph& g = graph_of(parts[0]);
  const std::size_t r = parts[0].dim(0);
  std::size_t cols = 0;
  bool grad = false;
  std::vector<Node*> nodes;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    graph_of(parts[0], p);
    require(p.rank() == 2 && p.dim(0) == r, ErrorKind::kShape,
            "concat_cols row mismatch: " + shape_string(p.shape()));
    cols += p.dim(1);
    grad = grad || p.requires_grad();
    nodes.push_back(p.node());
    widths.push_back(p.dim(1));
  }
  std::vector<float> out(r * cols);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].data();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(pv.data() + i * widths[k], widths[k], out.data() + i * cols + offset);
    offset += widths[k];
  }
  return g.record({r, cols}, std::move(out), grad,
                  [nodes, widths, r, cols](const Node& self) {
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < nodes.size(); ++k) {
                      if (nodes[k]->requires_grad) {
                        auto gn = nodes[k]->grad_buffer();
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < widths[k]; ++j)
                            gn[i * widths[k] + j] += self.grad[i * cols + offset + j];
                      }
                      offset += widths[k];
                    }
                  });
}

Tensor pick(const Tensor& x, std::span<const std::int32_t> index) {
  Graph& g = graph_of(x);
  require_rank(x, 2, "pick");
  const std::size_t n = x.dim(0), v = x.dim(1);
  require(index.size() == n, ErrorKind::kShape,
          "pick needs " + std::to_string(n) + " indices, got " +
              std::to_string(index.size()));
  for (std::int32_t k : index) {
    if (k < 0 || static_cast<std::size_t>(k) >= v) {
      fail(ErrorKind::kIndex, "target " + std::to_string(k) +
                                  " outside distribution of size " + std::to_string(v));
    }
  }
  auto xv = x.data();
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i * v + static_cast<std::size_t>(index[i])];
  auto idx = std::make_shared<std::vector<std::int32_t>>(index.begin(), index.end());
  Node* px = x.node();
  return g.record({n}, std::move(out), x.requires_grad(), [px, idx, v](const Node& self) {
    auto gx = px->grad_buffer();
    for (std::size_t i = 0; i < idx->size(); ++i)
      gx[i * v + static_cast<std::size_t>((*idx)[i])] += self.grad[i];
  });
}

Tensor rope(const Tensor& x, std::size_t n_heads, float base,
            std::size_t position_offset) {
  Graph& g = graph_of(x);
  require_rank(x, 2, "rope");
  const std::size_t t = x.dim(0), width = x.dim(1);
  require(n_heads > 0 && width % n_heads == 0 && (width / n_heads) % 2 == 0,
          ErrorKind::kShape,
          "rope needs an even head dimension; width " + std::to_string(width) +
              " over " + std::to_string(n_heads) + " heads");
  const std::size_t head_dim = width / n_heads;
  const std::size_t half = head_dim / 2;
  auto cos_table = std::make_shared<std::vector<float>>(t * half);
  auto sin_table = std::make_shared<std::vector<float>>(t * half);
  for (std::size_t p = 0; p < t; ++p) {
    for (std::size_t j = 0; j < half; ++j) {
      const double freq =
          std::pow(static_cast<double>(base), -2.0 * static_cast<double>(j) /
                                                  static_cast<double>(head_dim));
      const double angle = static_cast<double>(p + position_offset) * freq;
      (*cos_table)[p * half + j] = static_cast<float>(std::cos(angle));
      (*sin_table)[p * half + j] = static_cast<float>(std::sin(angle));
    }
  }
  auto xv = x.data();
  std::vector<float> out(xv.size());
  for (std::size_t p = 0; p < t; ++p) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t off = p * width + h * head_dim;
      for (std::size_t j = 0; j < half; ++j) {
        const float c = (*cos_table)[p * half + j];
        const float s = (*sin_table)[p * half + j];
        const float x0 = xv[off + 2 * j], x1 = xv[off + 2 * j + 1];
        out[off + 2 * j] = x0 * c - x1 * s;
        out[off + 2 * j + 1] = x0 * s + x1 * c;
      }
    }
  }
  Node* px = x.node();
  return g.record(x.shape(), std::move(out), x.requires_grad(),
                  [px, cos_table, sin_table, t, n_heads, width, head_dim,
                   half](const Node& self) {
                    auto gx = px->grad_buffer();
                    const auto& gy = self.grad;
                    for (std::size_t p = 0; p < t; ++p) {
                      for (std::size_t h = 0; h < n_heads; ++h) {
                        const std::size_t off = p * width + h * head_dim;
                        for (std::size_t j = 0; j < half; ++j) {
                          const float c = (*cos_table)[p * half + j];
                          const float s = (*sin_table)[p * half + j];
                          const float g0 = gy[off + 2 * j], g1 = gy[off + 2 * j + 1];
                          gx[off + 2 * j] += g0 * c + g1 * s;
                          gx[off + 2 * j + 1] += -g0 * s + g1 * c;
                        }
                      }
                    }
                  });
}

}  // namespace ulrn::ad
