#include "tensor/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>

#include "core/error.hpp"

namespace advpaint {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}
MatMap as_mat(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}
ConstVecMap as_vec(const Tensor& t) {
  return ConstVecMap(t.data().data(), static_cast<Eigen::Index>(t.numel()));
}
VecMap as_vec(Tensor& t) { return VecMap(t.data().data(), static_cast<Eigen::Index>(t.numel())); }

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::kDimension, std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.shape().size() != rank) {
    fail(ErrorCode::kDimension, std::string(op) + ": expected rank " + std::to_string(rank) +
                                    ", got " + shape_str(a.shape()));
  }
}

// out[i] = in[index[i]]; backward scatters (and accumulates repeats).
Var gather(const char* op, Var a, Shape out_shape, std::vector<std::size_t> index) {
  const Tensor& in = a.value();
  Tensor out(std::move(out_shape));
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = in[index[i]];
  auto idx = std::make_shared<const std::vector<std::size_t>>(std::move(index));
  return a.graph()->record(op, std::move(out), {a}, [a, idx](Graph& g, const Tensor& dy) {
    if (Tensor* da = g.grad_slot(a)) {
      const auto& ix = *idx;
      for (std::size_t i = 0; i < ix.size(); ++i) (*da)[ix[i]] += dy[i];
    }
  });
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  as_vec(out) += as_vec(b.value());
  return a.graph()->record("add", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& dy) {
    if (Tensor* da = g.grad_slot(a)) as_vec(*da) += as_vec(dy);
    if (Tensor* db = g.grad_slot(b)) as_vec(*db) += as_vec(dy);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  as_vec(out) -= as_vec(b.value());
  return a.graph()->record("sub", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& dy) {
    if (Tensor* da = g.grad_slot(a)) as_vec(*da) += as_vec(dy);
    if (Tensor* db = g.grad_slot(b)) as_vec(*db) -= as_vec(dy);
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  as_vec(out).array() *= as_vec(b.value()).array();
  return a.graph()->record("mul", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& dy) {
    if (Tensor* da = g.grad_slot(a)) {
      as_vec(*da).array() += as_vec(dy).array() * as_vec(b.value()).array();
    }
    if (Tensor* db = g.grad_slot(b)) {
      as_vec(*db).array() += as_vec(dy).array() * as_vec(a.value()).array();
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  as_vec(out) *= c;
  return a.graph()->record("scale", std::move(out), {a}, [a, c](Graph& g, const Tensor& dy) {
    if (Tensor* da = g.grad_slot(a)) as_vec(*da) += c * as_vec(dy);
  });
}

Var silu(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * sigmoid(x[i]);
  return a.graph()->record("silu", std::move(out), {a}, [a](Graph& g, const Tensor& dy) {
    if (Tensor* da = g.grad_slot(a)) {
      const Tensor& xv = a.value();
      for (std::size_t i = 0; i < xv.numel(); ++i) {
        const double s = sigmoid(xv[i]);
        (*da)[i] += dy[i] * s * (1.0 + xv[i] * (1.0 - s));
      }
    }
  });
}

Var add_rowvec(Var a, Var b) {
  require_rank("add_rowvec", b, 1);
  const std::size_t c = b.shape()[0];
  if (a.shape().back() != c) {
    fail(ErrorCode::kDimension, "add_rowvec: last extent of " + shape_str(a.shape()) +
                                    " does not match " + shape_str(b.shape()));
  }
  const std::size_t rows = a.value().numel() / c;
  Tensor out = a.value();
  as_mat(out, rows, c).rowwise() += as_vec(b.value()).transpose();
  return a.graph()->record("add_rowvec", std::move(out), {a, b},
                           [a, b, rows, c](Graph& g, const Tensor& dy) {
                             if (Tensor* da = g.grad_slot(a)) as_vec(*da) += as_vec(dy);
                             if (Tensor* db = g.grad_slot(b)) {
                               as_vec(*db) += as_mat(dy, rows, c).colwise().sum().transpose();
                             }
                           });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph()->record("reshape", std::move(out), {a}, [a](Graph& g, const Tensor& dy) {
    if (Tensor* da = g.grad_slot(a)) as_vec(*da) += as_vec(dy);
  });
}

Var transpose(Var a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<std::size_t> idx(r * c);
  for (std::size_t j = 0; j < c; ++j)
    for (std::size_t i = 0; i < r; ++i) idx[j * r + i] = i * c + j;
  return gather("transpose", a, {c, r}, std::move(idx));
}

Var concat_channels(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kDimension, "concat_channels: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t channels = 0;
  for (Var p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail) {
      fail(ErrorCode::kDimension, "concat_channels: incompatible shapes " +
                                      shape_str(parts[0].shape()) + " and " + shape_str(p.shape()));
    }
    channels += p.shape()[0];
  }
  Shape out_shape = parts[0].shape();
  out_shape[0] = channels;
  Tensor out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (Var p : parts) {
    offsets.push_back(off);
    const Tensor& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<long>(off));
    off += v.numel();
  }
  return parts[0].graph()->record(
      "concat_channels", std::move(out), parts, [parts, offsets](Graph& g, const Tensor& dy) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (Tensor* dp = g.grad_slot(parts[k])) {
            for (std::size_t i = 0; i < dp->numel(); ++i) (*dp)[i] += dy[offsets[k] + i];
          }
        }
      });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kDimension, "concat_cols: no inputs");
  const std::size_t rows = parts[0].shape().at(0);
  std::size_t cols = 0;
  std::vector<std::size_t> starts;
  for (Var p : parts) {
    require_rank("concat_cols", p, 2);
    if (p.shape()[0] != rows) {
      fail(ErrorCode::kDimension, "concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                                      " vs " + shape_str(p.shape()));
    }
    starts.push_back(cols);
    cols += p.shape()[1];
  }
  Tensor out({rows, cols});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    const std::size_t w = v.shape()[1];
    as_mat(out, rows, cols).middleCols(static_cast<Eigen::Index>(starts[k]),
                                       static_cast<Eigen::Index>(w)) = as_mat(v, rows, w);
  }
  return parts[0].graph()->record(
      "concat_cols", std::move(out), parts, [parts, starts, rows, cols](Graph& g, const Tensor& dy) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (Tensor* dp = g.grad_slot(parts[k])) {
            const std::size_t w = dp->shape()[1];
            as_mat(*dp, rows, w) += as_mat(dy, rows, cols).middleCols(
                static_cast<Eigen::Index>(starts[k]), static_cast<Eigen::Index>(w));
          }
        }
      });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", a, 2);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  if (!(begin < end && end <= c)) {
    fail(ErrorCode::kDimension, "slice_cols: bad range [" + std::to_string(begin) + ", " +
                                    std::to_string(end) + ") of " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<std::size_t> idx(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) idx[i * w + j] = i * c + begin + j;
  return gather("slice_cols", a, {r, w}, std::move(idx));
}

Var upsample2x(Var a) {
  require_rank("upsample2x", a, 3);
  const std::size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  std::vector<std::size_t> idx(c * 4 * h * w);
  std::size_t k = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t x = 0; x < 2 * w; ++x) idx[k++] = (ch * h + y / 2) * w + x / 2;
  return gather("upsample2x", a, {c, 2 * h, 2 * w}, std::move(idx));
}

Var avgpool2x2(Var a) {
  require_rank("avgpool2x2", a, 3);
  const std::size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  if (h % 2 || w % 2) fail(ErrorCode::kDimension, "avgpool2x2: odd extent " + shape_str(a.shape()));
  const Tensor& x = a.value();
  Tensor out({c, h / 2, w / 2});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t xx = 0; xx < w / 2; ++xx) {
        out.at(ch, y, xx) = 0.25 * (x.at(ch, 2 * y, 2 * xx) + x.at(ch, 2 * y, 2 * xx + 1) +
                                    x.at(ch, 2 * y + 1, 2 * xx) + x.at(ch, 2 * y + 1, 2 * xx + 1));
      }
  return a.graph()->record("avgpool2x2", std::move(out), {a}, [a, c, h, w](Graph& g,
                                                                           const Tensor& dy) {
    if (Tensor* da = g.grad_slot(a)) {
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) da->at(ch, y, x) += 0.25 * dy.at(ch, y / 2, x / 2);
    }
  });
}

Var pixel_unshuffle(Var a, std::size_t f) {
  require_rank("pixel_unshuffle", a, 3);
  const std::size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  if (f == 0 || h % f || w % f) {
    fail(ErrorCode::kDimension, "pixel_unshuffle: " + shape_str(a.shape()) +
                                    " not divisible by " + std::to_string(f));
  }
  const std::size_t oh = h / f, ow = w / f;
  std::vector<std::size_t> idx(c * h * w);
  std::size_t k = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t dy = 0; dy < f; ++dy)
      for (std::size_t dx = 0; dx < f; ++dx)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t x = 0; x < ow; ++x) idx[k++] = (ch * h + y * f + dy) * w + x * f + dx;
  return gather("pixel_unshuffle", a, {c * f * f, oh, ow}, std::move(idx));
}

Var pixel_shuffle(Var a, std::size_t f) {
  require_rank("pixel_shuffle", a, 3);
  const std::size_t cf = a.shape()[0], oh = a.shape()[1], ow = a.shape()[2];
  if (f == 0 || cf % (f * f)) {
    fail(ErrorCode::kDimension, "pixel_shuffle: " + shape_str(a.shape()) +
                                    " channels not divisible by " + std::to_string(f * f));
  }
  const std::size_t c = cf / (f * f), h = oh * f, w = ow * f;
  std::vector<std::size_t> idx(cf * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t src_c = (ch * f + y % f) * f + x % f;
        idx[(ch * h + y) * w + x] = (src_c * oh + y / f) * ow + x / f;
      }
  return gather("pixel_shuffle", a, {c, h, w}, std::move(idx));
}

Var embedding(Var table, std::span<const int> ids) {
  require_rank("embedding", table, 2);
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  require(!ids.empty(), ErrorCode::kDimension, "embedding: empty id list");
  std::vector<std::size_t> idx(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      fail(ErrorCode::kInvalidArgument, "token id " + std::to_string(ids[i]) +
                                            " outside vocabulary of " + std::to_string(v));
    }
    for (std::size_t j = 0; j < d; ++j) idx[i * d + j] = static_cast<std::size_t>(ids[i]) * d + j;
  }
  return gather("embedding", table, {ids.size(), d}, std::move(idx));
}

Var sum(Var a) {
  Tensor out = Tensor::scalar(as_vec(a.value()).sum());
  return a.graph()->record("sum", std::move(out), {a}, [a](Graph& g, const Tensor& dy) {
    if (Tensor* da = g.grad_slot(a)) as_vec(*da).array() += dy[0];
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().numel());
  Tensor out = Tensor::scalar(as_vec(a.value()).sum() / n);
  return a.graph()->record("mean", std::move(out), {a}, [a, n](Graph& g, const Tensor& dy) {
    if (Tensor* da = g.grad_slot(a)) as_vec(*da).array() += dy[0] / n;
  });
}

Var sum_squares(Var a) {
  Tensor out = Tensor::scalar(as_vec(a.value()).squaredNorm());
  return a.graph()->record("sum_squares", std::move(out), {a}, [a](Graph& g, const Tensor& dy) {
    if (Tensor* da = g.grad_slot(a)) as_vec(*da) += (2.0 * dy[0]) * as_vec(a.value());
  });
}

Var matmul(Var a, Var b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    fail(ErrorCode::kDimension,
         "matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  as_mat(out, m, n).noalias() = as_mat(a.value(), m, k) * as_mat(b.value(), k, n);
  return a.graph()->record("matmul", std::move(out), {a, b},
                           [a, b, m, k, n](Graph& g, const Tensor& dy) {
                             if (Tensor* da = g.grad_slot(a)) {
                               as_mat(*da, m, k).noalias() +=
                                   as_mat(dy, m, n) * as_mat(b.value(), k, n).transpose();
                             }
                             if (Tensor* db = g.grad_slot(b)) {
                               as_mat(*db, k, n).noalias() +=
                                   as_mat(a.value(), m, k).transpose() * as_mat(dy, m, n);
                             }
                           });
}

Var softmax_lastdim(Var a) {
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.value().numel() / c;
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x[r * c];
    double* yr = &out[r * c];
    double mx = xr[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      s += yr[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < c; ++j) yr[j] *= inv;
  }
  auto self = std::make_shared<Var>();
  Var y = a.graph()->record("softmax", std::move(out), {a}, [a, self, rows, c](Graph& g,
                                                                               const Tensor& dy) {
    Tensor* da = g.grad_slot(a);
    if (!da) return;
    const Tensor& yv = self->value();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = &yv[r * c];
      const double* gr = &dy[r * c];
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
      double* dr = &(*da)[r * c];
      for (std::size_t j = 0; j < c; ++j) dr[j] += yr[j] * (gr[j] - dot);
    }
  });
  *self = y;
  return y;
}

Var conv2d(Var x, Var w, Var bias, std::size_t stride, std::size_t pad) {
  require_rank("conv2d", x, 3);
  require_rank("conv2d", w, 4);
  const std::size_t cin = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const std::size_t cout = w.shape()[0], k = w.shape()[2];
  if (w.shape()[1] != cin || w.shape()[3] != k || (k != 1 && k != 3) || stride == 0) {
    fail(ErrorCode::kDimension,
         "conv2d: incompatible input " + shape_str(x.shape()) + " and kernel " + shape_str(w.shape()));
  }
  if (h + 2 * pad < k || wd + 2 * pad < k || (h + 2 * pad - k) % stride ||
      (wd + 2 * pad - k) % stride) {
    fail(ErrorCode::kDimension, "conv2d: non-integral output extent for input " +
                                    shape_str(x.shape()) + ", k=" + std::to_string(k) +
                                    ", stride=" + std::to_string(stride) +
                                    ", pad=" + std::to_string(pad));
  }
  if (bias.valid() && bias.shape() != Shape{cout}) {
    fail(ErrorCode::kDimension, "conv2d: bias " + shape_str(bias.shape()) + " for " +
                                    std::to_string(cout) + " output channels");
  }
  const std::size_t oh = (h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - k) / stride + 1;
  const std::size_t kk = cin * k * k, p = oh * ow;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  auto cols = std::make_shared<Tensor>();
  if (!direct) {
    *cols = Tensor({kk, p}, 0.0);
    const Tensor& xv = x.value();
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          double* row = &(*cols)[((c * k + ky) * k + kx) * p];
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (ix < 0 || ix >= static_cast<long>(wd)) continue;
              row[oy * ow + ox] = xv.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        }
  }
  const Tensor& colv = direct ? x.value() : *cols;

  Tensor out({cout, oh, ow});
  auto om = as_mat(out, cout, p);
  om.noalias() = as_mat(w.value(), cout, kk) * as_mat(colv, kk, p);
  if (bias.valid()) om.colwise() += as_vec(bias.value());

  std::vector<Var> inputs{x, w};
  if (bias.valid()) inputs.push_back(bias);
  return x.graph()->record(
      "conv2d", std::move(out), inputs,
      [=](Graph& g, const Tensor& dy) {
        auto dym = as_mat(dy, cout, p);
        const Tensor& cv = direct ? x.value() : *cols;
        if (Tensor* dw = g.grad_slot(w)) {
          as_mat(*dw, cout, kk).noalias() += dym * as_mat(cv, kk, p).transpose();
        }
        if (bias.valid()) {
          if (Tensor* db = g.grad_slot(bias)) as_vec(*db) += dym.rowwise().sum();
        }
        Tensor* dx = g.grad_slot(x);
        if (!dx) return;
        if (direct) {
          as_mat(*dx, cin, p).noalias() += as_mat(w.value(), cout, kk).transpose() * dym;
          return;
        }
        Tensor dcols({kk, p});
        as_mat(dcols, kk, p).noalias() = as_mat(w.value(), cout, kk).transpose() * dym;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const double* row = &dcols[((c * k + ky) * k + kx) * p];
              for (std::size_t oy = 0; oy < oh; ++oy) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                for (std::size_t ox = 0; ox < ow; ++ox) {
                  const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                  if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                  dx->at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                      row[oy * ow + ox];
                }
              }
            }
      });
}

Var layer_norm(Var x, Var gamma, Var beta) {
  const std::size_t c = x.shape().back();
  require(c > 0, ErrorCode::kDimension, "layer_norm: empty feature extent");
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    fail(ErrorCode::kDimension, "layer_norm: affine shapes " + shape_str(gamma.shape()) + ", " +
                                    shape_str(beta.shape()) + " for features of " +
                                    std::to_string(c));
  }
  const std::size_t rows = x.value().numel() / c;
  const Tensor& xv = x.value();
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out(xv.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &xv[r * c];
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (xr[j] - mu) * is;
      (*xhat)[r * c + j] = xh;
      out[r * c + j] = gv[j] * xh + bv[j];
    }
  }
  return x.graph()->record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, rows, c](Graph& g, const Tensor& dy) {
        const Tensor& gv2 = gamma.value();
        if (Tensor* dg = g.grad_slot(gamma)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) (*dg)[j] += dy[r * c + j] * (*xhat)[r * c + j];
        }
        if (Tensor* db = g.grad_slot(beta)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) (*db)[j] += dy[r * c + j];
        }
        Tensor* dx = g.grad_slot(x);
        if (!dx) return;
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t r = 0; r < rows; ++r) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double dxh = dy[r * c + j] * gv2[j];
            m1 += dxh;
            m2 += dxh * (*xhat)[r * c + j];
          }
          m1 *= inv_c;
          m2 *= inv_c;
          const double is = (*inv_std)[r];
          for (std::size_t j = 0; j < c; ++j) {
            const double dxh = dy[r * c + j] * gv2[j];
            (*dx)[r * c + j] += is * (dxh - m1 - (*xhat)[r * c + j] * m2);
          }
        }
      });
}

}  // namespace advpaint
