#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "meshfield/autograd.hpp"
#include "meshfield/errors.hpp"

namespace meshfield::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

// Maps each output element of a broadcast op to the flat index of an input.
std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> in_stride(rank, 0);
  {
    std::size_t stride = 1;
    for (std::size_t k = 0; k < in.size(); ++k) {
      std::size_t axis_in = in.size() - 1 - k;
      std::size_t axis_out = rank - 1 - k;
      in_stride[axis_out] = in[axis_in] == 1 ? 0 : stride;
      stride *= in[axis_in];
    }
  }
  std::vector<std::size_t> index(numel(out));
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    index[i] = offset;
    for (std::size_t axis = rank; axis-- > 0;) {
      ++counter[axis];
      offset += in_stride[axis];
      if (counter[axis] < out[axis]) break;
      offset -= in_stride[axis] * counter[axis];
      counter[axis] = 0;
    }
  }
  return index;
}

template <typename F, typename D>
Tensor unary(const Tensor& x, std::string_view name, F f, D df) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  auto captured = x;
  auto result_values = std::make_shared<std::vector<double>>(out);
  return make_op(
      x.shape(), std::move(out), {x},
      [captured, result_values, df](std::span<const double> g, const GradSlots& slots) {
        auto in = captured.data();
        auto& gx = *slots[0];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(in[i], (*result_values)[i]);
      },
      name);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  Map(out.data(), m, n).noalias() = MapC(a.data().data(), m, k) * MapC(b.data().data(), k, n);
  return make_op(
      {m, n}, std::move(out), {a, b},
      [a, b, m, k, n](std::span<const double> g, const GradSlots& slots) {
        MapC G(g.data(), m, n);
        if (slots[0]) Map(slots[0]->data(), m, k).noalias() += G * MapC(b.data().data(), k, n).transpose();
        if (slots[1]) Map(slots[1]->data(), k, n).noalias() += MapC(a.data().data(), m, k).transpose() * G;
      },
      "matmul");
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const auto r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  Map(out.data(), c, r) = MapC(x.data().data(), r, c).transpose();
  return make_op(
      {c, r}, std::move(out), {x},
      [r, c](std::span<const double> g, const GradSlots& slots) {
        Map(slots[0]->data(), r, c) += MapC(g.data(), c, r).transpose();
      },
      "transpose");
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[rank - 1 - k] = std::max(da, db);
  }
  return out;
}

Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise kind) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = numel(out_shape);
  const bool same = a.shape() == out_shape && b.shape() == out_shape;
  auto ia = std::make_shared<std::vector<std::size_t>>();
  auto ib = std::make_shared<std::vector<std::size_t>>();
  if (!same) {
    *ia = broadcast_index(a.shape(), out_shape);
    *ib = broadcast_index(b.shape(), out_shape);
  }
  auto pa = a.data();
  auto pb = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = pa[same ? i : (*ia)[i]];
    double y = pb[same ? i : (*ib)[i]];
    switch (kind) {
      case Elementwise::add: out[i] = x + y; break;
      case Elementwise::sub: out[i] = x - y; break;
      case Elementwise::mul: out[i] = x * y; break;
      case Elementwise::div: out[i] = x / y; break;
    }
  }
  static constexpr const char* names[] = {"add", "sub", "mul", "div"};
  return make_op(
      out_shape, std::move(out), {a, b},
      [a, b, ia, ib, same, kind](std::span<const double> g, const GradSlots& slots) {
        auto pa = a.data();
        auto pb = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const std::size_t ja = same ? i : (*ia)[i];
          const std::size_t jb = same ? i : (*ib)[i];
          switch (kind) {
            case Elementwise::add:
              if (slots[0]) (*slots[0])[ja] += g[i];
              if (slots[1]) (*slots[1])[jb] += g[i];
              break;
            case Elementwise::sub:
              if (slots[0]) (*slots[0])[ja] += g[i];
              if (slots[1]) (*slots[1])[jb] -= g[i];
              break;
            case Elementwise::mul:
              if (slots[0]) (*slots[0])[ja] += g[i] * pb[jb];
              if (slots[1]) (*slots[1])[jb] += g[i] * pa[ja];
              break;
            case Elementwise::div:
              if (slots[0]) (*slots[0])[ja] += g[i] / pb[jb];
              if (slots[1]) (*slots[1])[jb] -= g[i] * pa[ja] / (pb[jb] * pb[jb]);
              break;
          }
        }
      },
      names[static_cast<int>(kind)]);
}

Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::add); }
Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::sub); }
Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::mul); }
Tensor operator/(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::div); }

Tensor operator*(const Tensor& x, double s) {
  return unary(x, "scale", [s](double v) { return v * s; }, [s](double, double) { return s; });
}
Tensor operator*(double s, const Tensor& x) { return x * s; }
Tensor operator-(const Tensor& x) { return x * -1.0; }
Tensor operator+(const Tensor& x, double s) {
  return unary(x, "shift", [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}
Tensor operator+(double s, const Tensor& x) { return x + s; }
Tensor operator-(const Tensor& x, double s) { return x + (-s); }

Tensor activation(const Tensor& x, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
                   [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::sigmoid:
      return unary(
          x, "sigmoid",
          [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
          },
          [](double, double y) { return y * (1.0 - y); });
    case Activation::tanh:
      return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
    case Activation::sin:
      return unary(x, "sin", [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
    case Activation::cos:
      return unary(x, "cos", [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); });
    case Activation::exp:
      return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
  }
  throw ContractError("unknown activation");
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

namespace {

// (outer, axis, inner) view of a tensor around one axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i < axis) s.outer *= shape[i];
    else if (i == axis) s.extent = shape[i];
    else s.inner *= shape[i];
  }
  return s;
}

Tensor reduce_axis(const Tensor& x, std::size_t axis, bool average, std::string_view name) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(name) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_str(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  const double scale = average ? 1.0 / static_cast<double>(s.extent) : 1.0;
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t a = 0; a < s.extent; ++a)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += in[(o * s.extent + a) * s.inner + i];
  for (auto& v : out) v *= scale;
  return make_op(
      out_shape, std::move(out), {x},
      [s, scale](std::span<const double> g, const GradSlots& slots) {
        auto& gx = *slots[0];
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t a = 0; a < s.extent; ++a)
            for (std::size_t i = 0; i < s.inner; ++i)
              gx[(o * s.extent + a) * s.inner + i] += g[o * s.inner + i] * scale;
      },
      name);
}

}  // namespace

Tensor reduce_mean(const Tensor& x, std::size_t axis) { return reduce_axis(x, axis, true, "reduce_mean"); }
Tensor reduce_sum(const Tensor& x, std::size_t axis) { return reduce_axis(x, axis, false, "reduce_sum"); }

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_op(
      {}, {total}, {x},
      [](std::span<const double> g, const GradSlots& slots) {
        for (auto& v : *slots[0]) v += g[0];
      },
      "sum");
}

Tensor mean(const Tensor& x) { return sum(x) * (1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return make_op(
      std::move(shape), x.to_vector(), {x},
      [](std::span<const double> g, const GradSlots& slots) {
        auto& gx = *slots[0];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      },
      "reshape");
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_rows");
  if (begin > end || end > x.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t cols = x.dim(1);
  auto in = x.data();
  std::vector<double> out(in.begin() + begin * cols, in.begin() + end * cols);
  return make_op(
      {end - begin, cols}, std::move(out), {x},
      [begin, cols](std::span<const double> g, const GradSlots& slots) {
        auto& gx = *slots[0];
        for (std::size_t i = 0; i < g.size(); ++i) gx[begin * cols + i] += g[i];
      },
      "slice_rows");
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: row counts differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  std::vector<double> out(rows * (ca + cb));
  auto pa = a.data();
  auto pb = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(pa.begin() + r * ca, ca, out.begin() + r * (ca + cb));
    std::copy_n(pb.begin() + r * cb, cb, out.begin() + r * (ca + cb) + ca);
  }
  return make_op(
      {rows, ca + cb}, std::move(out), {a, b},
      [rows, ca, cb](std::span<const double> g, const GradSlots& slots) {
        for (std::size_t r = 0; r < rows; ++r) {
          if (slots[0])
            for (std::size_t c = 0; c < ca; ++c) (*slots[0])[r * ca + c] += g[r * (ca + cb) + c];
          if (slots[1])
            for (std::size_t c = 0; c < cb; ++c) (*slots[1])[r * cb + c] += g[r * (ca + cb) + ca + c];
        }
      },
      "concat_cols");
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "gather_rows");
  const std::size_t cols = x.dim(1);
  auto in = x.data();
  std::vector<double> out(rows.size() * cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(in.begin() + rows[i] * cols, cols, out.begin() + i * cols);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  return make_op(
      {rows.size(), cols}, std::move(out), {x},
      [idx, cols](std::span<const double> g, const GradSlots& slots) {
        auto& gx = *slots[0];
        for (std::size_t i = 0; i < idx->size(); ++i)
          for (std::size_t c = 0; c < cols; ++c) gx[(*idx)[i] * cols + c] += g[i * cols + c];
      },
      "gather_rows");
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("dot: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ in length");
  }
  auto pa = a.data();
  auto pb = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) acc += pa[i] * pb[i];
  return make_op(
      {}, {acc}, {a, b},
      [a, b](std::span<const double> g, const GradSlots& slots) {
        auto pa = a.data();
        auto pb = b.data();
        if (slots[0])
          for (std::size_t i = 0; i < pa.size(); ++i) (*slots[0])[i] += g[0] * pb[i];
        if (slots[1])
          for (std::size_t i = 0; i < pb.size(); ++i) (*slots[1])[i] += g[0] * pa[i];
      },
      "dot");
}

Tensor l2_normalize(const Tensor& x) {
  auto in = x.data();
  double sq = 0.0;
  for (double v : in) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericDomainError("l2_normalize: zero-norm input");
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] / norm;
  auto y = std::make_shared<std::vector<double>>(out);
  return make_op(
      x.shape(), std::move(out), {x},
      [y, norm](std::span<const double> g, const GradSlots& slots) {
        // d(x/|x|) = (g - y (y.g)) / |x|
        double yg = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) yg += (*y)[i] * g[i];
        auto& gx = *slots[0];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += (g[i] - (*y)[i] * yg) / norm;
      },
      "l2_normalize");
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("cosine_sim: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ in length");
  }
  auto pa = a.data();
  auto pb = b.data();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ab += pa[i] * pb[i];
    aa += pa[i] * pa[i];
    bb += pb[i] * pb[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericDomainError("cosine_sim: zero-norm input");
  const double s = ab / (na * nb);
  return make_op(
      {}, {s}, {a, b},
      [a, b, na, nb, s](std::span<const double> g, const GradSlots& slots) {
        auto pa = a.data();
        auto pb = b.data();
        // ds/da = b/(|a||b|) - s a/|a|^2
        if (slots[0])
          for (std::size_t i = 0; i < pa.size(); ++i)
            (*slots[0])[i] += g[0] * (pb[i] / (na * nb) - s * pa[i] / (na * na));
        if (slots[1])
          for (std::size_t i = 0; i < pb.size(); ++i)
            (*slots[1])[i] += g[0] * (pa[i] / (na * nb) - s * pb[i] / (nb * nb));
      },
      "cosine_sim");
}

Tensor clamp_row_norm(const Tensor& x, double max_norm) {
  require_rank(x, 2, "clamp_row_norm");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  auto in = x.data();
  std::vector<double> out(in.begin(), in.end());
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += in[r * cols + c] * in[r * cols + c];
    const double n = std::sqrt(sq);
    (*norms)[r] = n;
    if (n > max_norm)
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] *= max_norm / n;
  }
  return make_op(
      {rows, cols}, std::move(out), {x},
      [x, norms, rows, cols, max_norm](std::span<const double> g, const GradSlots& slots) {
        auto in = x.data();
        auto& gx = *slots[0];
        for (std::size_t r = 0; r < rows; ++r) {
          const double n = (*norms)[r];
          if (n <= max_norm) {
            for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r * cols + c];
            continue;
          }
          // y = m x / |x|  =>  dy^T g = m (g - u (u.g)) / |x|, u = x/|x|
          double ug = 0.0;
          for (std::size_t c = 0; c < cols; ++c) ug += in[r * cols + c] / n * g[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c)
            gx[r * cols + c] += max_norm * (g[r * cols + c] - in[r * cols + c] / n * ug) / n;
        }
      },
      "clamp_row_norm");
}

}  // namespace meshfield::ag
