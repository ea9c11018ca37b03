#include "mman/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mman {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using detail::Node;

MatrixMap as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MatrixMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

Node& input(Node& n, std::size_t k) { return *n.inputs[k]; }

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() = as_matrix(a.node()->value, m, k) * as_matrix(b.node()->value, k, n);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& z) {
    auto dz = as_matrix(z.grad, m, n);
    Node& na = input(z, 0);
    Node& nb = input(z, 1);
    if (na.requires_grad) as_matrix(na.grad, m, k).noalias() += dz * as_matrix(nb.value, k, n).transpose();
    if (nb.requires_grad) as_matrix(nb.grad, k, n).noalias() += as_matrix(na.value, m, k).transpose() * dz;
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  as_matrix(out, n, m) = as_matrix(a.node()->value, m, n).transpose();
  return Tensor::make_result({n, m}, std::move(out), {a}, [m, n](Node& z) {
    Node& na = input(z, 0);
    as_matrix(na.grad, m, n) += as_matrix(z.grad, n, m).transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& z) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& in = input(z, k);
      if (!in.requires_grad) continue;
      for (std::size_t i = 0; i < z.grad.size(); ++i) in.grad[i] += z.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& z) {
    Node& na = input(z, 0);
    Node& nb = input(z, 1);
    for (std::size_t i = 0; i < z.grad.size(); ++i) {
      if (na.requires_grad) na.grad[i] += z.grad[i];
      if (nb.requires_grad) nb.grad[i] -= z.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& z) {
    Node& na = input(z, 0);
    Node& nb = input(z, 1);
    for (std::size_t i = 0; i < z.grad.size(); ++i) {
      if (na.requires_grad) na.grad[i] += z.grad[i] * nb.value[i];
      if (nb.requires_grad) nb.grad[i] += z.grad[i] * na.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& z) {
    Node& na = input(z, 0);
    for (std::size_t i = 0; i < z.grad.size(); ++i) na.grad[i] += z.grad[i] * factor;
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_rank(a, 2, "add_row");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (row.size() != n || row.rank() > 2 || (row.rank() == 2 && row.dim(0) != 1)) {
    throw DimensionError("add_row: cannot broadcast " + shape_to_string(row.shape()) + " over rows of " +
                         shape_to_string(a.shape()));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + row[j];
  }
  return Tensor::make_result({m, n}, std::move(out), {a, row}, [m, n](Node& z) {
    Node& na = input(z, 0);
    Node& nr = input(z, 1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double g = z.grad[i * n + j];
        if (na.requires_grad) na.grad[i * n + j] += g;
        if (nr.requires_grad) nr.grad[j] += g;
      }
    }
  });
}

Tensor elementwise(const Tensor& x, Activation f) {
  std::vector<double> out(x.size());
  auto in = x.data();
  switch (f) {
    case Activation::kTanh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(in[i]);
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) {
        // Branch on sign so exp never overflows.
        out[i] = in[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-in[i])) : std::exp(in[i]) / (1.0 + std::exp(in[i]));
      }
      break;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [f](Node& z) {
    Node& nx = input(z, 0);
    for (std::size_t i = 0; i < z.grad.size(); ++i) {
      const double y = z.value[i];
      double d = 0.0;
      switch (f) {
        case Activation::kTanh: d = 1.0 - y * y; break;
        case Activation::kRelu: d = nx.value[i] > 0.0 ? 1.0 : 0.0; break;
        case Activation::kSigmoid: d = y * (1.0 - y); break;
      }
      nx.grad[i] += z.grad[i] * d;
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis, std::optional<std::size_t> valid_extent) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(x.shape()));
  }
  const AxisView v = axis_view(x.shape(), axis);
  const std::size_t valid = valid_extent.value_or(v.extent);
  if (valid == 0 || valid > v.extent) {
    throw DimensionError("softmax: valid extent " + std::to_string(valid) + " outside [1, " +
                         std::to_string(v.extent) + "]");
  }
  auto in = x.data();
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < valid; ++t) peak = std::max(peak, in[base + t * v.inner]);
      double total = 0.0;
      for (std::size_t t = 0; t < valid; ++t) {
        const double e = std::exp(in[base + t * v.inner] - peak);
        out[base + t * v.inner] = e;
        total += e;
      }
      for (std::size_t t = 0; t < valid; ++t) out[base + t * v.inner] /= total;
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [v, valid](Node& z) {
    Node& nx = input(z, 0);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.extent * v.inner + i;
        double dot = 0.0;
        for (std::size_t t = 0; t < valid; ++t) dot += z.grad[base + t * v.inner] * z.value[base + t * v.inner];
        for (std::size_t t = 0; t < valid; ++t) {
          const std::size_t k = base + t * v.inner;
          nx.grad[k] += z.value[k] * (z.grad[k] - dot);
        }
      }
    }
  });
}

Tensor reduce(const Tensor& x, Reduction op, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(x.shape()));
  }
  const AxisView v = axis_view(x.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (i != axis) out_shape.push_back(x.dim(i));
  }
  if (out_shape.empty()) out_shape.push_back(1);
  const double factor = op == Reduction::kMean ? 1.0 / static_cast<double>(v.extent) : 1.0;
  auto in = x.data();
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      double acc = 0.0;
      for (std::size_t t = 0; t < v.extent; ++t) acc += in[(o * v.extent + t) * v.inner + i];
      out[o * v.inner + i] = acc * factor;
    }
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), {x}, [v, factor](Node& z) {
    Node& nx = input(z, 0);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const double g = z.grad[o * v.inner + i] * factor;
        for (std::size_t t = 0; t < v.extent; ++t) nx.grad[(o * v.extent + t) * v.inner + i] += g;
      }
    }
  });
}

Tensor sum(const Tensor& x) { return reduce(reshape(x, {x.size()}), Reduction::kSum, 0); }

Tensor conv2d(const Tensor& input_map, const Tensor& kernels, const Tensor& bias, Pair stride) {
  require_rank(input_map, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  const std::size_t in_ch = input_map.dim(0), h = input_map.dim(1), w = input_map.dim(2);
  const std::size_t out_ch = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != in_ch) {
    throw DimensionError("conv2d: kernels " + shape_to_string(kernels.shape()) + " expect " +
                         std::to_string(kernels.dim(1)) + " input channels, input " +
                         shape_to_string(input_map.shape()) + " has " + std::to_string(in_ch));
  }
  if (bias.size() != out_ch) {
    throw DimensionError("conv2d: bias " + shape_to_string(bias.shape()) + " does not match " +
                         std::to_string(out_ch) + " output channels");
  }
  if (kh > h || kw > w) {
    throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " exceeds input " + std::to_string(h) + "x" + std::to_string(w) +
                         " (valid padding); pad the input or shrink the kernel");
  }
  if (stride[0] == 0 || stride[1] == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t oh = (h - kh) / stride[0] + 1, ow = (w - kw) / stride[1] + 1;
  const auto& x = input_map.node()->value;
  const auto& k = kernels.node()->value;
  const auto& b = bias.node()->value;
  std::vector<double> out(out_ch * oh * ow);
  for (std::size_t o = 0; o < out_ch; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double acc = 0.0;
        for (std::size_t c = 0; c < in_ch; ++c) {
          for (std::size_t a = 0; a < kh; ++a) {
            const double* row = &x[(c * h + y * stride[0] + a) * w + xo * stride[1]];
            const double* krow = &k[((o * in_ch + c) * kh + a) * kw];
            for (std::size_t bb = 0; bb < kw; ++bb) acc += krow[bb] * row[bb];
          }
        }
        out[(o * oh + y) * ow + xo] = acc + b[o];
      }
    }
  }
  return Tensor::make_result(
      {out_ch, oh, ow}, std::move(out), {input_map, kernels, bias},
      [=](Node& z) {
        Node& nx = input(z, 0);
        Node& nk = input(z, 1);
        Node& nb = input(z, 2);
        for (std::size_t o = 0; o < out_ch; ++o) {
          for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xo = 0; xo < ow; ++xo) {
              const double g = z.grad[(o * oh + y) * ow + xo];
              if (g == 0.0) continue;
              if (nb.requires_grad) nb.grad[o] += g;
              for (std::size_t c = 0; c < in_ch; ++c) {
                for (std::size_t a = 0; a < kh; ++a) {
                  const std::size_t xrow = (c * h + y * stride[0] + a) * w + xo * stride[1];
                  const std::size_t krow = ((o * in_ch + c) * kh + a) * kw;
                  for (std::size_t bb = 0; bb < kw; ++bb) {
                    if (nk.requires_grad) nk.grad[krow + bb] += g * nx.value[xrow + bb];
                    if (nx.requires_grad) nx.grad[xrow + bb] += g * nk.value[krow + bb];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor maxpool2d(const Tensor& input_map, Pair window, Pair stride) {
  require_rank(input_map, 3, "maxpool2d");
  const std::size_t ch = input_map.dim(0), h = input_map.dim(1), w = input_map.dim(2);
  if (window[0] == 0 || window[1] == 0 || stride[0] == 0 || stride[1] == 0) {
    throw DimensionError("maxpool2d: window and stride must be positive");
  }
  if (window[0] > h || window[1] > w) {
    throw DimensionError("maxpool2d: window " + std::to_string(window[0]) + "x" + std::to_string(window[1]) +
                         " exceeds input " + std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t oh = (h - window[0]) / stride[0] + 1, ow = (w - window[1]) / stride[1] + 1;
  const auto& x = input_map.node()->value;
  std::vector<double> out(ch * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        std::size_t best = (c * h + y * stride[0]) * w + xo * stride[1];
        for (std::size_t a = 0; a < window[0]; ++a) {
          for (std::size_t b = 0; b < window[1]; ++b) {
            const std::size_t at = (c * h + y * stride[0] + a) * w + xo * stride[1] + b;
            if (x[at] > x[best]) best = at;
          }
        }
        const std::size_t o = (c * oh + y) * ow + xo;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return Tensor::make_result({ch, oh, ow}, std::move(out), {input_map},
                             [argmax = std::move(argmax)](Node& z) {
                               Node& nx = input(z, 0);
                               for (std::size_t o = 0; o < argmax.size(); ++o) nx.grad[argmax[o]] += z.grad[o];
                             });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Node& z) {
    Node& nx = input(z, 0);
    for (std::size_t i = 0; i < z.grad.size(); ++i) nx.grad[i] += z.grad[i];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_rows");
  const std::size_t n = x.dim(1);
  if (begin >= end || end > x.dim(0)) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_to_string(x.shape()));
  }
  auto in = x.data();
  std::vector<double> out(in.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          in.begin() + static_cast<std::ptrdiff_t>(end * n));
  return Tensor::make_result({end - begin, n}, std::move(out), {x}, [offset = begin * n](Node& z) {
    Node& nx = input(z, 0);
    for (std::size_t i = 0; i < z.grad.size(); ++i) nx.grad[offset + i] += z.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1), width = end - begin;
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_to_string(x.shape()));
  }
  auto in = x.data();
  std::vector<double> out(m * width);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < width; ++j) out[i * width + j] = in[i * n + begin + j];
  }
  return Tensor::make_result({m, width}, std::move(out), {x}, [m, n, begin, width](Node& z) {
    Node& nx = input(z, 0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < width; ++j) nx.grad[i * n + begin + j] += z.grad[i * width + j];
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t m = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) {
      throw DimensionError("concat_cols: row count mismatch " + shape_to_string(parts[0].shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto in = parts[k].data();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + offset));
    }
    offset += widths[k];
  }
  return Tensor::make_result({m, total}, std::move(out), {parts.begin(), parts.end()},
                             [m, total, widths](Node& z) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 Node& nk = input(z, k);
                                 if (nk.requires_grad) {
                                   for (std::size_t i = 0; i < m; ++i) {
                                     for (std::size_t j = 0; j < widths[k]; ++j) {
                                       nk.grad[i * widths[k] + j] += z.grad[i * total + offset + j];
                                     }
                                   }
                                 }
                                 offset += widths[k];
                               }
                             });
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("stack: nothing to stack");
  const Shape inner = parts[0].shape();
  const std::size_t n = parts[0].size();
  std::vector<double> out;
  out.reserve(n * parts.size());
  for (const auto& p : parts) {
    if (p.shape() != inner) {
      throw DimensionError("stack: shape mismatch " + shape_to_string(inner) + " vs " + shape_to_string(p.shape()));
    }
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return Tensor::make_result(std::move(shape), std::move(out), {parts.begin(), parts.end()}, [n](Node& z) {
    for (std::size_t k = 0; k < z.inputs.size(); ++k) {
      Node& nk = input(z, k);
      if (!nk.requires_grad) continue;
      for (std::size_t i = 0; i < n; ++i) nk.grad[i] += z.grad[k * n + i];
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank(table, 2, "gather_rows");
  const std::size_t rows = table.dim(0), n = table.dim(1);
  if (ids.empty()) throw DimensionError("gather_rows: no ids");
  auto in = table.data();
  std::vector<double> out(ids.size() * n);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= rows) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[r]) + " out of range for table with " +
                           std::to_string(rows) + " rows");
    }
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(ids[r] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  std::vector<std::size_t> index(ids.begin(), ids.end());
  return Tensor::make_result({ids.size(), n}, std::move(out), {table}, [index = std::move(index), n](Node& z) {
    Node& nt = input(z, 0);
    for (std::size_t r = 0; r < index.size(); ++r) {
      for (std::size_t j = 0; j < n; ++j) nt.grad[index[r] * n + j] += z.grad[r * n + j];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (gain.size() != n || offset.size() != n) {
    throw DimensionError("layer_norm: gain/offset " + shape_to_string(gain.shape()) + "/" +
                         shape_to_string(offset.shape()) + " do not match width " + std::to_string(n));
  }
  auto in = x.data();
  auto g = gain.data();
  auto b = offset.data();
  std::vector<double> out(m * n);
  std::vector<double> normalized(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += in[i * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = in[i * n + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      normalized[i * n + j] = (in[i * n + j] - mean) * inv_std[i];
      out[i * n + j] = normalized[i * n + j] * g[j] + b[j];
    }
  }
  return Tensor::make_result(
      {m, n}, std::move(out), {x, gain, offset},
      [m, n, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& z) {
        Node& nx = input(z, 0);
        Node& ng = input(z, 1);
        Node& nb = input(z, 2);
        for (std::size_t i = 0; i < m; ++i) {
          double mean_dy = 0.0, mean_dy_xhat = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dy = z.grad[i * n + j];
            if (ng.requires_grad) ng.grad[j] += dy * normalized[i * n + j];
            if (nb.requires_grad) nb.grad[j] += dy;
            const double dxhat = dy * ng.value[j];
            mean_dy += dxhat;
            mean_dy_xhat += dxhat * normalized[i * n + j];
          }
          if (!nx.requires_grad) continue;
          mean_dy /= static_cast<double>(n);
          mean_dy_xhat /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const double dxhat = z.grad[i * n + j] * ng.value[j];
            nx.grad[i * n + j] += inv_std[i] * (dxhat - mean_dy - normalized[i * n + j] * mean_dy_xhat);
          }
        }
      });
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  if (targets.size() != logits.size()) {
    throw DimensionError("bce_with_logits: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_to_string(logits.shape()));
  }
  auto z = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    total += std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  std::vector<double> y(targets.begin(), targets.end());
  return Tensor::make_result({1}, {total}, {logits}, [y = std::move(y)](Node& out) {
    Node& nz = input(out, 0);
    const double g = out.grad[0];
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double zi = nz.value[i];
      const double s = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi)) : std::exp(zi) / (1.0 + std::exp(zi));
      nz.grad[i] += g * (s - y[i]);
    }
  });
}

}  // namespace mman
