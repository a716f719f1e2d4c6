#include "mdet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mdet::ops {
namespace {

template <typename S>
using T = Tensor<S>;
template <typename S>
using In = typename Tape<S>::Inputs;
template <typename S>
using GIn = typename Tape<S>::GradInputs;
template <typename S>
using RowMat = typename Tensor<S>::RowMatrix;
template <typename S>
using StridedMap = Eigen::Map<const RowMat<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using StridedMutMap = Eigen::Map<RowMat<S>, 0, Eigen::OuterStride<>>;

template <typename S>
Tape<S>& tape_of(Var<S> a) {
  if (!a.valid()) throw ContractViolation("ops: invalid variable");
  return *a.tape();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

template <typename S>
void require_same_shape(const char* op, Var<S> a, Var<S> b) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

template <typename S>
Var<S> elementwise_binary(const char* name, Var<S> a, Var<S> b, int kind) {
  require_same_shape(name, a, b);
  return tape_of(a).record(
      {a, b},
      [kind](In<S> in) {
        const auto& x = *in[0];
        const auto& y = *in[1];
        switch (kind) {
          case 0: return T<S>(x.shape(), x.array() + y.array());
          case 1: return T<S>(x.shape(), x.array() - y.array());
          default: return T<S>(x.shape(), x.array() * y.array());
        }
      },
      [kind](In<S> in, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (kind == 2) {
          if (gi[0]) gi[0]->array() += g.array() * in[1]->array();
          if (gi[1]) gi[1]->array() += g.array() * in[0]->array();
          return;
        }
        if (gi[0]) gi[0]->array() += g.array();
        if (gi[1]) {
          if (kind == 0) gi[1]->array() += g.array();
          else gi[1]->array() -= g.array();
        }
      });
}

/// View of a tensor as [outer, extent, inner] around `axis`.
struct AxisSplit {
  Index outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, Index axis) {
  AxisSplit s;
  for (Index a = 0; a < static_cast<Index>(shape.size()); ++a) {
    const Index e = shape[static_cast<std::size_t>(a)];
    if (a < axis) s.outer *= e;
    else if (a == axis) s.extent = e;
    else s.inner *= e;
  }
  return s;
}

}  // namespace

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  require(a.value().rank() == 2 && b.value().rank() == 2 && a.shape()[1] == b.shape()[0],
          "matmul: incompatible shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  return tape_of(a).record(
      {a, b},
      [](In<S> in) {
        RowMat<S> out = in[0]->matrix() * in[1]->matrix();
        return T<S>::from_matrix(out);
      },
      [](In<S> in, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (gi[0]) gi[0]->matrix().noalias() += g.matrix() * in[1]->matrix().transpose();
        if (gi[1]) gi[1]->matrix().noalias() += in[0]->matrix().transpose() * g.matrix();
      });
}

template <typename S>
Var<S> linear(Var<S> x, Var<S> w) {
  require(w.value().rank() == 2 && x.value().last_extent() == w.shape()[0],
          "linear: input " + shape_string(x.shape()) + " does not match weight " + shape_string(w.shape()));
  return tape_of(x).record(
      {x, w},
      [](In<S> in) {
        Shape shape = in[0]->shape();
        if (shape.empty()) shape.push_back(1);
        shape.back() = in[1]->extent(1);
        auto out = T<S>::uninitialized(shape);
        out.matrix().noalias() = in[0]->matrix() * in[1]->matrix();
        return out;
      },
      [](In<S> in, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (gi[0]) gi[0]->matrix().noalias() += g.matrix() * in[1]->matrix().transpose();
        if (gi[1]) gi[1]->matrix().noalias() += in[0]->matrix().transpose() * g.matrix();
      });
}

template <typename S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> bias) {
  return bias_add(linear(x, w), bias);
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  return elementwise_binary("add", a, b, 0);
}
template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  return elementwise_binary("sub", a, b, 1);
}
template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  return elementwise_binary("mul", a, b, 2);
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  return tape_of(a).record(
      {a}, [factor](In<S> in) { return T<S>(in[0]->shape(), in[0]->array() * factor); },
      [factor](In<S>, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (gi[0]) gi[0]->array() += g.array() * factor;
      });
}

template <typename S>
Var<S> bias_add(Var<S> x, Var<S> b) {
  require(b.value().size() == x.value().last_extent(),
          "bias_add: bias " + shape_string(b.shape()) + " does not match " + shape_string(x.shape()));
  return tape_of(x).record(
      {x, b},
      [](In<S> in) {
        T<S> out = *in[0];
        out.matrix().rowwise() += in[1]->array().matrix().transpose();
        return out;
      },
      [](In<S>, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (gi[0]) gi[0]->array() += g.array();
        if (gi[1]) gi[1]->array() += g.matrix().colwise().sum().transpose().array();
      });
}

template <typename S>
Var<S> scale_lastaxis(Var<S> x, Var<S> gain) {
  require(gain.value().size() == x.value().last_extent(),
          "scale_lastaxis: gain " + shape_string(gain.shape()) + " does not match " + shape_string(x.shape()));
  return tape_of(x).record(
      {x, gain},
      [](In<S> in) {
        T<S> out = *in[0];
        out.matrix().array().rowwise() *= in[1]->array().transpose();
        return out;
      },
      [](In<S> in, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (gi[0]) {
          gi[0]->matrix().array() += g.matrix().array().rowwise() * in[1]->array().transpose();
        }
        if (gi[1]) {
          gi[1]->array() +=
              (g.matrix().array() * in[0]->matrix().array()).colwise().sum().transpose();
        }
      });
}

template <typename S>
Var<S> gelu(Var<S> x) {
  return tape_of(x).record(
      {x},
      [](In<S> in) {
        auto out = T<S>::uninitialized(in[0]->shape());
        const S inv_sqrt2 = S(1) / std::numbers::sqrt2_v<S>;
        out.array() = in[0]->array().unaryExpr(
            [inv_sqrt2](S v) { return S(0.5) * v * (S(1) + std::erf(v * inv_sqrt2)); });
        return out;
      },
      [](In<S> in, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (!gi[0]) return;
        const S inv_sqrt2 = S(1) / std::numbers::sqrt2_v<S>;
        const S inv_sqrt2pi = std::numbers::inv_sqrtpi_v<S> * inv_sqrt2;
        const auto& xv = in[0]->array();
        auto& out = gi[0]->array();
        for (Index k = 0; k < xv.size(); ++k) {
          const S v = xv[k];
          const S d = S(0.5) * (S(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(S(-0.5) * v * v);
          out[k] += g[k] * d;
        }
      });
}

template <typename S>
Var<S> layer_norm(Var<S> x, S eps) {
  return tape_of(x).record(
      {x},
      [eps](In<S> in) {
        T<S> out = *in[0];
        auto m = out.matrix();
        for (Index r = 0; r < m.rows(); ++r) {
          auto row = m.row(r).array();
          const S mu = row.mean();
          row -= mu;
          const S var = row.square().mean();
          row /= std::sqrt(var + eps);
        }
        return out;
      },
      [eps](In<S> in, const T<S>& y, const T<S>& g, GIn<S> gi) {
        if (!gi[0]) return;
        const auto xm = in[0]->matrix();
        const auto ym = y.matrix();
        const auto gm = g.matrix();
        auto dx = gi[0]->matrix();
        for (Index r = 0; r < xm.rows(); ++r) {
          const auto xr = xm.row(r).array();
          const S mu = xr.mean();
          const S inv_std = S(1) / std::sqrt((xr - mu).square().mean() + eps);
          const auto gr = gm.row(r).array();
          const auto yr = ym.row(r).array();
          dx.row(r).array() += inv_std * (gr - gr.mean() - yr * (gr * yr).mean());
        }
      });
}

template <typename S>
Var<S> softmax_lastaxis(Var<S> x) {
  require(x.value().last_extent() >= 1, "softmax_lastaxis: empty last axis");
  return tape_of(x).record(
      {x},
      [](In<S> in) {
        T<S> out = *in[0];
        auto m = out.matrix();
        for (Index r = 0; r < m.rows(); ++r) {
          auto row = m.row(r).array();
          row = (row - row.maxCoeff()).exp();
          row /= row.sum();
        }
        return out;
      },
      [](In<S>, const T<S>& y, const T<S>& g, GIn<S> gi) {
        if (!gi[0]) return;
        const auto ym = y.matrix();
        const auto gm = g.matrix();
        auto dx = gi[0]->matrix();
        for (Index r = 0; r < ym.rows(); ++r) {
          const S dot = (ym.row(r).array() * gm.row(r).array()).sum();
          dx.row(r).array() += ym.row(r).array() * (gm.row(r).array() - dot);
        }
      });
}

template <typename S>
Var<S> sum(Var<S> x) {
  return tape_of(x).record(
      {x}, [](In<S> in) { return T<S>::scalar(in[0]->array().sum()); },
      [](In<S>, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (gi[0]) gi[0]->array() += g[0];
      });
}

template <typename S>
Var<S> mean(Var<S> x) {
  return scale(sum(x), S(1) / static_cast<S>(x.value().size()));
}

template <typename S>
Var<S> sum_axis(Var<S> x, Index axis) {
  const Index rank = x.value().rank();
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, "sum_axis: axis out of range for " + shape_string(x.shape()));
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + axis);
  const AxisSplit s = split_at(x.shape(), axis);
  return tape_of(x).record(
      {x},
      [s, out_shape](In<S> in) {
        T<S> out(out_shape);
        const S* src = in[0]->data();
        S* dst = out.data();
        for (Index o = 0; o < s.outer; ++o)
          for (Index e = 0; e < s.extent; ++e) {
            const S* row = src + (o * s.extent + e) * s.inner;
            S* acc = dst + o * s.inner;
            for (Index k = 0; k < s.inner; ++k) acc[k] += row[k];
          }
        return out;
      },
      [s](In<S>, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (!gi[0]) return;
        S* dst = gi[0]->data();
        const S* src = g.data();
        for (Index o = 0; o < s.outer; ++o)
          for (Index e = 0; e < s.extent; ++e) {
            S* row = dst + (o * s.extent + e) * s.inner;
            const S* gr = src + o * s.inner;
            for (Index k = 0; k < s.inner; ++k) row[k] += gr[k];
          }
      });
}

template <typename S>
Var<S> reshape(Var<S> x, Shape shape) {
  require(shape_size(shape) == x.value().size(), "reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  return tape_of(x).record(
      {x}, [shape](In<S> in) { return in[0]->reshaped(shape); },
      [](In<S>, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (gi[0]) gi[0]->array() += g.array();
      });
}

template <typename S>
Var<S> transpose01(Var<S> x) {
  require(x.value().rank() >= 2, "transpose01: rank < 2 for " + shape_string(x.shape()));
  const Index a = x.shape()[0], b = x.shape()[1];
  const Index inner = x.value().size() / (a * b);
  Shape out_shape = x.shape();
  std::swap(out_shape[0], out_shape[1]);
  auto permute = [a, b, inner](const S* src, S* dst, bool forward) {
    for (Index i = 0; i < a; ++i)
      for (Index j = 0; j < b; ++j) {
        const S* from = src + (forward ? (i * b + j) : (j * a + i)) * inner;
        S* to = dst + (forward ? (j * a + i) : (i * b + j)) * inner;
        for (Index k = 0; k < inner; ++k) to[k] += from[k];
      }
  };
  return tape_of(x).record(
      {x},
      [out_shape, permute](In<S> in) {
        T<S> out(out_shape);
        permute(in[0]->data(), out.data(), true);
        return out;
      },
      [permute](In<S>, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (gi[0]) permute(g.data(), gi[0]->data(), false);
      });
}

template <typename S>
Var<S> concat_lastaxis(Var<S> a, Var<S> b) {
  Shape sa = a.shape(), sb = b.shape();
  require(sa.size() == sb.size() && !sa.empty() && std::equal(sa.begin(), sa.end() - 1, sb.begin()),
          "concat_lastaxis: " + shape_string(sa) + " vs " + shape_string(sb));
  const Index ca = sa.back(), cb = sb.back();
  Shape out_shape = sa;
  out_shape.back() = ca + cb;
  return tape_of(a).record(
      {a, b},
      [out_shape, ca, cb](In<S> in) {
        auto out = T<S>::uninitialized(out_shape);
        out.matrix().leftCols(ca) = in[0]->matrix();
        out.matrix().rightCols(cb) = in[1]->matrix();
        return out;
      },
      [ca, cb](In<S>, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (gi[0]) gi[0]->matrix() += g.matrix().leftCols(ca);
        if (gi[1]) gi[1]->matrix() += g.matrix().rightCols(cb);
      });
}

template <typename S>
Var<S> gather_rows(Var<S> table, std::vector<Index> rows) {
  require(table.value().rank() == 2, "gather_rows: table must be rank 2, got " + shape_string(table.shape()));
  const Index vocab = table.shape()[0], width = table.shape()[1];
  for (Index r : rows) {
    require(r >= 0 && r < vocab, "gather_rows: index " + std::to_string(r) + " outside table of " +
                                     std::to_string(vocab) + " rows");
  }
  return tape_of(table).record(
      {table},
      [rows, width](In<S> in) {
        auto out = T<S>::uninitialized(Shape{static_cast<Index>(rows.size()), width});
        for (std::size_t r = 0; r < rows.size(); ++r) {
          out.matrix().row(static_cast<Index>(r)) = in[0]->matrix().row(rows[r]);
        }
        return out;
      },
      [rows](In<S>, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (!gi[0]) return;
        for (std::size_t r = 0; r < rows.size(); ++r) {
          gi[0]->matrix().row(rows[r]) += g.matrix().row(static_cast<Index>(r));
        }
      });
}

template <typename S>
Var<S> column(Var<S> x, Index c) {
  require(x.value().rank() == 2 && c >= 0 && c < x.shape()[1],
          "column: index " + std::to_string(c) + " invalid for " + shape_string(x.shape()));
  return tape_of(x).record(
      {x},
      [c](In<S> in) {
        auto out = T<S>::uninitialized(Shape{in[0]->extent(0)});
        out.array() = in[0]->matrix().col(c).array();
        return out;
      },
      [c](In<S>, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (gi[0]) gi[0]->matrix().col(c) += g.array().matrix();
      });
}

template <typename S>
Var<S> row_norms(Var<S> x) {
  require(x.value().rank() == 2, "row_norms: expected rank 2, got " + shape_string(x.shape()));
  return tape_of(x).record(
      {x},
      [](In<S> in) {
        auto out = T<S>::uninitialized(Shape{in[0]->extent(0)});
        out.array() = in[0]->matrix().rowwise().norm().array();
        return out;
      },
      [](In<S> in, const T<S>& y, const T<S>& g, GIn<S> gi) {
        if (!gi[0]) return;
        const auto xm = in[0]->matrix();
        auto dx = gi[0]->matrix();
        for (Index r = 0; r < xm.rows(); ++r) {
          if (y[r] > S(0)) dx.row(r) += (g[r] / y[r]) * xm.row(r);
        }
      });
}

template <typename S>
Var<S> triangle_scores(Var<S> q, Var<S> k, Index heads, S factor) {
  require_same_shape("triangle_scores", q, k);
  require(q.value().rank() == 3 && q.shape()[0] == q.shape()[1],
          "triangle_scores: expected [N, N, D], got " + shape_string(q.shape()));
  const Index n = q.shape()[0], width = q.shape()[2];
  require(heads > 0 && width % heads == 0,
          "triangle_scores: width " + std::to_string(width) + " not divisible by " + std::to_string(heads) + " heads");
  const Index dh = width / heads;
  // Each (head, l) slice is one GEMM: [i, c] x [j, c]^T -> [i, j].
  return tape_of(q).record(
      {q, k},
      [n, width, heads, dh, factor](In<S> in) {
        auto out = T<S>::uninitialized(Shape{heads, n, n, n});
        RowMat<S> block(n, n);
        S* o = out.data();
        for (Index h = 0; h < heads; ++h)
          for (Index l = 0; l < n; ++l) {
            StridedMap<S> qm(in[0]->data() + l * width + h * dh, n, dh, Eigen::OuterStride<>(n * width));
            StridedMap<S> km(in[1]->data() + l * n * width + h * dh, n, dh, Eigen::OuterStride<>(width));
            block.noalias() = factor * (qm * km.transpose());
            for (Index i = 0; i < n; ++i)
              for (Index j = 0; j < n; ++j) o[((h * n + i) * n + j) * n + l] = block(i, j);
          }
        return out;
      },
      [n, width, heads, dh, factor](In<S> in, const T<S>&, const T<S>& g, GIn<S> gi) {
        RowMat<S> block(n, n);
        const S* gs = g.data();
        for (Index h = 0; h < heads; ++h)
          for (Index l = 0; l < n; ++l) {
            for (Index i = 0; i < n; ++i)
              for (Index j = 0; j < n; ++j) block(i, j) = factor * gs[((h * n + i) * n + j) * n + l];
            StridedMap<S> qm(in[0]->data() + l * width + h * dh, n, dh, Eigen::OuterStride<>(n * width));
            StridedMap<S> km(in[1]->data() + l * n * width + h * dh, n, dh, Eigen::OuterStride<>(width));
            if (gi[0]) {
              StridedMutMap<S> dq(gi[0]->data() + l * width + h * dh, n, dh, Eigen::OuterStride<>(n * width));
              dq.noalias() += block * km;
            }
            if (gi[1]) {
              StridedMutMap<S> dk(gi[1]->data() + l * n * width + h * dh, n, dh, Eigen::OuterStride<>(width));
              dk.noalias() += block.transpose() * qm;
            }
          }
      });
}

template <typename S>
Var<S> triangle_mix(Var<S> alpha, Var<S> v1, Var<S> v2) {
  require_same_shape("triangle_mix", v1, v2);
  require(v1.value().rank() == 3 && v1.shape()[0] == v1.shape()[1],
          "triangle_mix: expected values [N, N, D], got " + shape_string(v1.shape()));
  const Index n = v1.shape()[0], width = v1.shape()[2];
  require(alpha.value().rank() == 4 && alpha.shape()[1] == n && alpha.shape()[2] == n && alpha.shape()[3] == n &&
              alpha.shape()[0] > 0 && width % alpha.shape()[0] == 0,
          "triangle_mix: weights " + shape_string(alpha.shape()) + " incompatible with values " +
              shape_string(v1.shape()));
  const Index heads = alpha.shape()[0], dh = width / heads;
  return tape_of(alpha).record(
      {alpha, v1, v2},
      [n, width, heads, dh](In<S> in) {
        T<S> out(Shape{n, n, width});
        const S* a = in[0]->data();
        const S* x1 = in[1]->data();
        const S* x2 = in[2]->data();
        S* o = out.data();
        for (Index i = 0; i < n; ++i)
          for (Index l = 0; l < n; ++l) {
            const S* p1 = x1 + (i * n + l) * width;
            for (Index j = 0; j < n; ++j) {
              const S* p2 = x2 + (l * n + j) * width;
              S* po = o + (i * n + j) * width;
              for (Index h = 0; h < heads; ++h) {
                const S w = a[((h * n + i) * n + j) * n + l];
                for (Index c = h * dh; c < (h + 1) * dh; ++c) po[c] += w * p1[c] * p2[c];
              }
            }
          }
        return out;
      },
      [n, width, heads, dh](In<S> in, const T<S>&, const T<S>& g, GIn<S> gi) {
        const S* a = in[0]->data();
        const S* x1 = in[1]->data();
        const S* x2 = in[2]->data();
        const S* gs = g.data();
        S* da = gi[0] ? gi[0]->data() : nullptr;
        S* d1 = gi[1] ? gi[1]->data() : nullptr;
        S* d2 = gi[2] ? gi[2]->data() : nullptr;
        for (Index i = 0; i < n; ++i)
          for (Index l = 0; l < n; ++l) {
            const S* p1 = x1 + (i * n + l) * width;
            for (Index j = 0; j < n; ++j) {
              const S* p2 = x2 + (l * n + j) * width;
              const S* pg = gs + (i * n + j) * width;
              for (Index h = 0; h < heads; ++h) {
                const Index ai = ((h * n + i) * n + j) * n + l;
                const S w = a[ai];
                S acc = 0;
                for (Index c = h * dh; c < (h + 1) * dh; ++c) {
                  acc += pg[c] * p1[c] * p2[c];
                  if (d1) d1[(i * n + l) * width + c] += pg[c] * w * p2[c];
                  if (d2) d2[(l * n + j) * width + c] += pg[c] * w * p1[c];
                }
                if (da) da[ai] += acc;
              }
            }
          }
      });
}

template <typename S>
Var<S> edge_geometry(Var<S> positions) {
  require(positions.value().rank() == 2 && positions.shape()[1] == 3,
          "edge_geometry: expected [N, 3], got " + shape_string(positions.shape()));
  const Index n = positions.shape()[0];
  return tape_of(positions).record(
      {positions},
      [n](In<S> in) {
        T<S> out(Shape{n * n, 3});
        const auto p = in[0]->matrix();
        auto o = out.matrix();
        for (Index i = 0; i < n; ++i)
          for (Index j = 0; j < n; ++j) {
            const Eigen::Matrix<S, 1, 3> r = p.row(j) - p.row(i);
            const S rho = std::hypot(r[0], r[1]);
            const S d = r.norm();
            if (d == S(0)) continue;
            o(i * n + j, 0) = d;
            o(i * n + j, 1) = std::atan2(r[1], r[0]);
            o(i * n + j, 2) = std::atan2(rho, r[2]);
          }
        return out;
      },
      [n](In<S> in, const T<S>&, const T<S>& g, GIn<S> gi) {
        if (!gi[0]) return;
        const auto p = in[0]->matrix();
        const auto gm = g.matrix();
        auto dp = gi[0]->matrix();
        for (Index i = 0; i < n; ++i)
          for (Index j = 0; j < n; ++j) {
            const Eigen::Matrix<S, 1, 3> r = p.row(j) - p.row(i);
            const S d2 = r.squaredNorm();
            if (d2 == S(0)) continue;
            const S d = std::sqrt(d2);
            const S rho2 = r[0] * r[0] + r[1] * r[1];
            const S rho = std::sqrt(rho2);
            const Index e = i * n + j;
            Eigen::Matrix<S, 1, 3> dr = gm(e, 0) * r / d;
            if (rho2 > S(0)) {
              dr[0] += gm(e, 1) * (-r[1] / rho2) + gm(e, 2) * (r[0] * r[2] / (rho * d2));
              dr[1] += gm(e, 1) * (r[0] / rho2) + gm(e, 2) * (r[1] * r[2] / (rho * d2));
              dr[2] += gm(e, 2) * (-rho / d2);
            }
            dp.row(j) += dr;
            dp.row(i) -= dr;
          }
      });
}

template <typename S>
Var<S> gaussian_rbf(Var<S> d, Var<S> mu, Var<S> sigma, Var<S> m, Var<S> b) {
  require_same_shape("gaussian_rbf", mu, sigma);
  require(d.value().rank() == 1 && mu.value().rank() == 1 && m.value().size() == 1 && b.value().size() == 1,
          "gaussian_rbf: expected d[E], mu[K], sigma[K], scalar m and b");
  const Index e_count = d.shape()[0], k_count = mu.shape()[0];
  const S inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<S> / std::numbers::sqrt2_v<S>;
  return tape_of(d).record(
      {d, mu, sigma, m, b},
      [e_count, k_count, inv_sqrt_2pi](In<S> in) {
        auto out = T<S>::uninitialized(Shape{e_count, k_count});
        auto o = out.matrix();
        const S m = (*in[3])[0], b = (*in[4])[0];
        for (Index e = 0; e < e_count; ++e) {
          const S t = m * (*in[0])[e] + b;
          for (Index k = 0; k < k_count; ++k) {
            const S s = (*in[2])[k];
            const S u = (t - (*in[1])[k]) / s;
            o(e, k) = inv_sqrt_2pi / s * std::exp(S(-0.5) * u * u);
          }
        }
        return out;
      },
      [e_count, k_count](In<S> in, const T<S>& y, const T<S>& g, GIn<S> gi) {
        const auto ym = y.matrix();
        const auto gm = g.matrix();
        const S m = (*in[3])[0], b = (*in[4])[0];
        for (Index e = 0; e < e_count; ++e) {
          const S dist = (*in[0])[e];
          const S t = m * dist + b;
          S dt = 0;
          for (Index k = 0; k < k_count; ++k) {
            const S s = (*in[2])[k];
            const S u = (t - (*in[1])[k]) / s;
            const S gy = gm(e, k) * ym(e, k);
            dt += -gy * u / s;
            if (gi[1]) (*gi[1])[k] += gy * u / s;
            if (gi[2]) (*gi[2])[k] += gy * (u * u - S(1)) / s;
          }
          if (gi[0]) (*gi[0])[e] += dt * m;
          if (gi[3]) (*gi[3])[0] += dt * dist;
          if (gi[4]) (*gi[4])[0] += dt;
        }
      });
}

template <typename S>
Var<S> fourier_features(Var<S> phi, Var<S> theta, std::vector<S> omega_phi, std::vector<S> omega_theta) {
  require_same_shape("fourier_features", phi, theta);
  require(phi.value().rank() == 1, "fourier_features: expected rank-1 angles, got " + shape_string(phi.shape()));
  const Index e_count = phi.shape()[0];
  const Index kp = static_cast<Index>(omega_phi.size()), kt = static_cast<Index>(omega_theta.size());
  return tape_of(phi).record(
      {phi, theta},
      [=](In<S> in) {
        auto out = T<S>::uninitialized(Shape{e_count, 2 * kp + 2 * kt});
        auto o = out.matrix();
        for (Index e = 0; e < e_count; ++e) {
          const S p = (*in[0])[e], t = (*in[1])[e];
          for (Index k = 0; k < kp; ++k) {
            o(e, k) = std::sin(p * omega_phi[static_cast<std::size_t>(k)]);
            o(e, kp + k) = std::cos(p * omega_phi[static_cast<std::size_t>(k)]);
          }
          for (Index k = 0; k < kt; ++k) {
            o(e, 2 * kp + k) = std::sin(t * omega_theta[static_cast<std::size_t>(k)]);
            o(e, 2 * kp + kt + k) = std::cos(t * omega_theta[static_cast<std::size_t>(k)]);
          }
        }
        return out;
      },
      [=](In<S>, const T<S>& y, const T<S>& g, GIn<S> gi) {
        const auto ym = y.matrix();
        const auto gm = g.matrix();
        for (Index e = 0; e < e_count; ++e) {
          S dp = 0, dt = 0;
          for (Index k = 0; k < kp; ++k) {
            const S w = omega_phi[static_cast<std::size_t>(k)];
            dp += w * (gm(e, k) * ym(e, kp + k) - gm(e, kp + k) * ym(e, k));
          }
          for (Index k = 0; k < kt; ++k) {
            const S w = omega_theta[static_cast<std::size_t>(k)];
            dt += w * (gm(e, 2 * kp + k) * ym(e, 2 * kp + kt + k) - gm(e, 2 * kp + kt + k) * ym(e, 2 * kp + k));
          }
          if (gi[0]) (*gi[0])[e] += dp;
          if (gi[1]) (*gi[1])[e] += dt;
        }
      });
}

#define MDET_INSTANTIATE_OPS(S)                                                                      \
  template Var<S> matmul(Var<S>, Var<S>);                                                            \
  template Var<S> linear(Var<S>, Var<S>);                                                            \
  template Var<S> linear(Var<S>, Var<S>, Var<S>);                                                    \
  template Var<S> add(Var<S>, Var<S>);                                                               \
  template Var<S> sub(Var<S>, Var<S>);                                                               \
  template Var<S> mul(Var<S>, Var<S>);                                                               \
  template Var<S> scale(Var<S>, S);                                                                  \
  template Var<S> bias_add(Var<S>, Var<S>);                                                          \
  template Var<S> scale_lastaxis(Var<S>, Var<S>);                                                    \
  template Var<S> gelu(Var<S>);                                                                      \
  template Var<S> layer_norm(Var<S>, S);                                                             \
  template Var<S> softmax_lastaxis(Var<S>);                                                          \
  template Var<S> sum(Var<S>);                                                                       \
  template Var<S> mean(Var<S>);                                                                      \
  template Var<S> sum_axis(Var<S>, Index);                                                           \
  template Var<S> reshape(Var<S>, Shape);                                                            \
  template Var<S> transpose01(Var<S>);                                                               \
  template Var<S> concat_lastaxis(Var<S>, Var<S>);                                                   \
  template Var<S> gather_rows(Var<S>, std::vector<Index>);                                           \
  template Var<S> column(Var<S>, Index);                                                             \
  template Var<S> row_norms(Var<S>);                                                                 \
  template Var<S> triangle_scores(Var<S>, Var<S>, Index, S);                                         \
  template Var<S> triangle_mix(Var<S>, Var<S>, Var<S>);                                              \
  template Var<S> edge_geometry(Var<S>);                                                             \
  template Var<S> gaussian_rbf(Var<S>, Var<S>, Var<S>, Var<S>, Var<S>);                              \
  template Var<S> fourier_features(Var<S>, Var<S>, std::vector<S>, std::vector<S>);

MDET_INSTANTIATE_OPS(float)
MDET_INSTANTIATE_OPS(double)

}  // namespace mdet::ops
