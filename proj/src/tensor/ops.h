/**
 * @file ops.h
 * @brief Differentiable operations for the tensor engine.
 *
 * Shapes are validated eagerly; mismatches throw ShapeError naming both
 * operands. Broadcasting is limited to row-vector bias addition and scalar
 * scaling, which is all the model needs.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "tensor/tensor.h"

namespace quartet {

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

template <typename S>
void requireSameShape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shapeStr(a.shape()) + " vs " +
                     shapeStr(b.shape()));
  }
}

template <typename S>
void require2d(const Tensor<S>& t, const char* op) {
  if (t.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected 2-d tensor, got " + shapeStr(t.shape()));
  }
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::requireSameShape(a, b, "add");
  std::vector<S> out(a.value().begin(), a.value().end());
  for (int64_t i = 0; i < b.numel(); ++i) out[static_cast<size_t>(i)] += b.value()[i];
  return makeOpResult<S>(a.shape(), std::move(out), {a, b}, [](TensorNode<S>& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      for (size_t i = 0; i < self.grad.size(); ++i) parent->grad[i] += self.grad[i];
    }
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::requireSameShape(a, b, "sub");
  std::vector<S> out(a.value().begin(), a.value().end());
  for (int64_t i = 0; i < b.numel(); ++i) out[static_cast<size_t>(i)] -= b.value()[i];
  return makeOpResult<S>(a.shape(), std::move(out), {a, b}, [](TensorNode<S>& self) {
    auto& a_node = self.parents[0];
    auto& b_node = self.parents[1];
    if (a_node->requires_grad) {
      for (size_t i = 0; i < self.grad.size(); ++i) a_node->grad[i] += self.grad[i];
    }
    if (b_node->requires_grad) {
      for (size_t i = 0; i < self.grad.size(); ++i) b_node->grad[i] -= self.grad[i];
    }
  });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::requireSameShape(a, b, "mul");
  std::vector<S> out(static_cast<size_t>(a.numel()));
  for (int64_t i = 0; i < a.numel(); ++i) out[static_cast<size_t>(i)] = a.value()[i] * b.value()[i];
  return makeOpResult<S>(a.shape(), std::move(out), {a, b}, [](TensorNode<S>& self) {
    auto& a_node = self.parents[0];
    auto& b_node = self.parents[1];
    if (a_node->requires_grad) {
      for (size_t i = 0; i < self.grad.size(); ++i) a_node->grad[i] += self.grad[i] * b_node->value[i];
    }
    if (b_node->requires_grad) {
      for (size_t i = 0; i < self.grad.size(); ++i) b_node->grad[i] += self.grad[i] * a_node->value[i];
    }
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, double factor) {
  std::vector<S> out(static_cast<size_t>(a.numel()));
  const S f = static_cast<S>(factor);
  for (int64_t i = 0; i < a.numel(); ++i) out[static_cast<size_t>(i)] = a.value()[i] * f;
  return makeOpResult<S>(a.shape(), std::move(out), {a}, [f](TensorNode<S>& self) {
    auto& a_node = self.parents[0];
    if (!a_node->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) a_node->grad[i] += self.grad[i] * f;
  });
}

/// x: [rows, cols], row: [cols]; adds the row vector to every row of x.
template <typename S>
Tensor<S> addRowBroadcast(const Tensor<S>& x, const Tensor<S>& row) {
  detail::require2d(x, "addRowBroadcast");
  if (row.shape().size() != 1 || row.dim(0) != x.dim(1)) {
    throw ShapeError("addRowBroadcast: shape mismatch " + shapeStr(x.shape()) + " vs " +
                     shapeStr(row.shape()));
  }
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<S> out(x.value().begin(), x.value().end());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out[static_cast<size_t>(r) * cols + c] += row.value()[c];
  }
  return makeOpResult<S>(x.shape(), std::move(out), {x, row}, [rows, cols](TensorNode<S>& self) {
    auto& x_node = self.parents[0];
    auto& row_node = self.parents[1];
    if (x_node->requires_grad) {
      for (size_t i = 0; i < self.grad.size(); ++i) x_node->grad[i] += self.grad[i];
    }
    if (row_node->requires_grad) {
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          row_node->grad[static_cast<size_t>(c)] += self.grad[static_cast<size_t>(r) * cols + c];
        }
      }
    }
  });
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require2d(a, "matmul");
  detail::require2d(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shapeStr(a.shape()) + " x " +
                     shapeStr(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<S> out(static_cast<size_t>(m) * n, S(0));
  const S* av = a.value().data();
  const S* bv = b.value().data();
  for (int i = 0; i < m; ++i) {
    S* out_row = out.data() + static_cast<size_t>(i) * n;
    const S* a_row = av + static_cast<size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const S a_il = a_row[l];
      if (a_il == S(0)) continue;
      const S* b_row = bv + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) out_row[j] += a_il * b_row[j];
    }
  }
  return makeOpResult<S>({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode<S>& self) {
    auto& a_node = self.parents[0];
    auto& b_node = self.parents[1];
    if (a_node->requires_grad) {
      // dA[i,l] = sum_j dOut[i,j] * B[l,j]
      for (int i = 0; i < m; ++i) {
        const S* g_row = self.grad.data() + static_cast<size_t>(i) * n;
        S* da_row = a_node->grad.data() + static_cast<size_t>(i) * k;
        for (int l = 0; l < k; ++l) {
          const S* b_row = b_node->value.data() + static_cast<size_t>(l) * n;
          S sum = S(0);
          for (int j = 0; j < n; ++j) sum += g_row[j] * b_row[j];
          da_row[l] += sum;
        }
      }
    }
    if (b_node->requires_grad) {
      // dB[l,j] = sum_i A[i,l] * dOut[i,j]
      for (int i = 0; i < m; ++i) {
        const S* a_row = a_node->value.data() + static_cast<size_t>(i) * k;
        const S* g_row = self.grad.data() + static_cast<size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
          const S a_il = a_row[l];
          if (a_il == S(0)) continue;
          S* db_row = b_node->grad.data() + static_cast<size_t>(l) * n;
          for (int j = 0; j < n; ++j) db_row[j] += a_il * g_row[j];
        }
      }
    }
  });
}

template <typename S>
Tensor<S> transposeLastTwo(const Tensor<S>& a) {
  detail::require2d(a, "transposeLastTwo");
  const int rows = a.dim(0), cols = a.dim(1);
  std::vector<S> out(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out[static_cast<size_t>(c) * rows + r] = a.value()[static_cast<size_t>(r) * cols + c];
    }
  }
  return makeOpResult<S>({cols, rows}, std::move(out), {a}, [rows, cols](TensorNode<S>& self) {
    auto& a_node = self.parents[0];
    if (!a_node->requires_grad) return;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        a_node->grad[static_cast<size_t>(r) * cols + c] +=
            self.grad[static_cast<size_t>(c) * rows + r];
      }
    }
  });
}

/// Concatenates 2-d tensors along the last (column) dimension.
template <typename S>
Tensor<S> concatLastDim(const std::vector<Tensor<S>>& parts) {
  detail::require(!parts.empty(), "concatLastDim: no inputs");
  const int rows = parts[0].dim(0);
  int total_cols = 0;
  for (const auto& p : parts) {
    detail::require2d(p, "concatLastDim");
    if (p.dim(0) != rows) {
      throw ShapeError("concatLastDim: row mismatch " + shapeStr(parts[0].shape()) + " vs " +
                       shapeStr(p.shape()));
    }
    total_cols += p.dim(1);
  }
  std::vector<S> out(static_cast<size_t>(rows) * total_cols);
  std::vector<int> offsets;
  int offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const int cols = p.dim(1);
    for (int r = 0; r < rows; ++r) {
      std::copy_n(p.value().data() + static_cast<size_t>(r) * cols, cols,
                  out.data() + static_cast<size_t>(r) * total_cols + offset);
    }
    offset += cols;
  }
  return makeOpResult<S>({rows, total_cols}, std::move(out), parts,
                         [rows, total_cols, offsets](TensorNode<S>& self) {
                           for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                             auto& parent = self.parents[pi];
                             if (!parent->requires_grad) continue;
                             const int cols = parent->shape[1];
                             const int off = offsets[pi];
                             for (int r = 0; r < rows; ++r) {
                               for (int c = 0; c < cols; ++c) {
                                 parent->grad[static_cast<size_t>(r) * cols + c] +=
                                     self.grad[static_cast<size_t>(r) * total_cols + off + c];
                               }
                             }
                           }
                         });
}

/// Concatenates 2-d tensors along the first (row) dimension. Zero-row inputs
/// are legal; this is how an empty recurrence memory enters the graph.
template <typename S>
Tensor<S> concatRows(const std::vector<Tensor<S>>& parts) {
  detail::require(!parts.empty(), "concatRows: no inputs");
  const int cols = parts[0].dim(1);
  int total_rows = 0;
  for (const auto& p : parts) {
    detail::require2d(p, "concatRows");
    if (p.dim(1) != cols) {
      throw ShapeError("concatRows: column mismatch " + shapeStr(parts[0].shape()) + " vs " +
                       shapeStr(p.shape()));
    }
    total_rows += p.dim(0);
  }
  std::vector<S> out;
  out.reserve(static_cast<size_t>(total_rows) * cols);
  std::vector<int> row_offsets;
  int row_offset = 0;
  for (const auto& p : parts) {
    row_offsets.push_back(row_offset);
    out.insert(out.end(), p.value().begin(), p.value().end());
    row_offset += p.dim(0);
  }
  return makeOpResult<S>({total_rows, cols}, std::move(out), parts,
                         [cols, row_offsets](TensorNode<S>& self) {
                           for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                             auto& parent = self.parents[pi];
                             if (!parent->requires_grad) continue;
                             const size_t base = static_cast<size_t>(row_offsets[pi]) * cols;
                             for (size_t i = 0; i < parent->grad.size(); ++i) {
                               parent->grad[i] += self.grad[base + i];
                             }
                           }
                         });
}

template <typename S>
Tensor<S> sliceCols(const Tensor<S>& x, int start, int len) {
  detail::require2d(x, "sliceCols");
  const int rows = x.dim(0), cols = x.dim(1);
  detail::require(start >= 0 && len > 0 && start + len <= cols,
                  "sliceCols: range [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") out of " + shapeStr(x.shape()));
  std::vector<S> out(static_cast<size_t>(rows) * len);
  for (int r = 0; r < rows; ++r) {
    std::copy_n(x.value().data() + static_cast<size_t>(r) * cols + start, len,
                out.data() + static_cast<size_t>(r) * len);
  }
  return makeOpResult<S>({rows, len}, std::move(out), {x},
                         [rows, cols, start, len](TensorNode<S>& self) {
                           auto& x_node = self.parents[0];
                           if (!x_node->requires_grad) return;
                           for (int r = 0; r < rows; ++r) {
                             for (int c = 0; c < len; ++c) {
                               x_node->grad[static_cast<size_t>(r) * cols + start + c] +=
                                   self.grad[static_cast<size_t>(r) * len + c];
                             }
                           }
                         });
}

/// Contiguous slice of a 1-d tensor.
template <typename S>
Tensor<S> sliceVector(const Tensor<S>& x, int start, int len) {
  detail::require(x.shape().size() == 1, "sliceVector: expected 1-d tensor, got " +
                                             shapeStr(x.shape()));
  detail::require(start >= 0 && len > 0 && start + len <= x.dim(0),
                  "sliceVector: range [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") out of " + shapeStr(x.shape()));
  std::vector<S> out(x.value().begin() + start, x.value().begin() + start + len);
  return makeOpResult<S>({len}, std::move(out), {x}, [start, len](TensorNode<S>& self) {
    auto& x_node = self.parents[0];
    if (!x_node->requires_grad) return;
    for (int i = 0; i < len; ++i) {
      x_node->grad[static_cast<size_t>(start + i)] += self.grad[static_cast<size_t>(i)];
    }
  });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  std::vector<S> out(static_cast<size_t>(x.numel()));
  for (int64_t i = 0; i < x.numel(); ++i) out[static_cast<size_t>(i)] = x.value()[i] > S(0) ? x.value()[i] : S(0);
  return makeOpResult<S>(x.shape(), std::move(out), {x}, [](TensorNode<S>& self) {
    auto& x_node = self.parents[0];
    if (!x_node->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (x_node->value[i] > S(0)) x_node->grad[i] += self.grad[i];
    }
  });
}

/// Inverted dropout: surviving activations are scaled by 1/(1-p) at train
/// time so the expectation matches evaluation, where this is the identity.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, Rng* rng, bool train) {
  if (!train || p <= 0.0) return x;
  detail::require(p < 1.0, "dropout: p must be < 1");
  detail::require(rng != nullptr, "dropout: rng required at train time");
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(x.numel()));
  std::vector<S> out(static_cast<size_t>(x.numel()));
  for (int64_t i = 0; i < x.numel(); ++i) {
    const bool keep = rng->uniform() >= p;
    (*mask)[static_cast<size_t>(i)] = keep ? 1 : 0;
    out[static_cast<size_t>(i)] = keep ? x.value()[i] * keep_scale : S(0);
  }
  return makeOpResult<S>(x.shape(), std::move(out), {x}, [mask, keep_scale](TensorNode<S>& self) {
    auto& x_node = self.parents[0];
    if (!x_node->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if ((*mask)[i]) x_node->grad[i] += self.grad[i] * keep_scale;
    }
  });
}

/// Softmax over the last dimension of [rows, cols] scores after adding the
/// mask (0 keeps a position, a large negative value drops it). Rows with
/// every position masked produce all-zero output.
template <typename S>
Tensor<S> maskedSoftmax(const Tensor<S>& scores, const Tensor<S>& mask) {
  detail::require2d(scores, "maskedSoftmax");
  detail::requireSameShape(scores, mask, "maskedSoftmax");
  const int rows = scores.dim(0), cols = scores.dim(1);
  std::vector<S> out(static_cast<size_t>(rows) * cols, S(0));
  constexpr double kAllMaskedCutoff = -1e8;
  for (int r = 0; r < rows; ++r) {
    const S* s_row = scores.value().data() + static_cast<size_t>(r) * cols;
    const S* m_row = mask.value().data() + static_cast<size_t>(r) * cols;
    S* o_row = out.data() + static_cast<size_t>(r) * cols;
    double max_z = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cols; ++c) {
      max_z = std::max(max_z, static_cast<double>(s_row[c]) + static_cast<double>(m_row[c]));
    }
    if (max_z <= kAllMaskedCutoff) continue;  // fully masked row
    double denom = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double z = static_cast<double>(s_row[c]) + static_cast<double>(m_row[c]);
      const double e = std::exp(z - max_z);
      o_row[c] = static_cast<S>(e);
      denom += e;
    }
    const S inv = static_cast<S>(1.0 / denom);
    for (int c = 0; c < cols; ++c) o_row[c] *= inv;
  }
  return makeOpResult<S>(scores.shape(), std::move(out), {scores, mask},
                         [rows, cols](TensorNode<S>& self) {
                           auto& s_node = self.parents[0];
                           if (!s_node->requires_grad) return;
                           // dz_c = y_c * (g_c - sum_j y_j g_j), per row.
                           for (int r = 0; r < rows; ++r) {
                             const S* y = self.value.data() + static_cast<size_t>(r) * cols;
                             const S* g = self.grad.data() + static_cast<size_t>(r) * cols;
                             S* ds = s_node->grad.data() + static_cast<size_t>(r) * cols;
                             S dot = S(0);
                             for (int c = 0; c < cols; ++c) dot += y[c] * g[c];
                             for (int c = 0; c < cols; ++c) ds[c] += y[c] * (g[c] - dot);
                           }
                         });
}

/// Normalizes each row of x to zero mean and unit variance (epsilon 1e-5
/// inside the square root), then applies the per-column affine gain/bias.
template <typename S>
Tensor<S> layerNorm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                    double eps = 1e-5) {
  detail::require2d(x, "layerNorm");
  const int rows = x.dim(0), cols = x.dim(1);
  if (gain.shape() != Shape{cols} || bias.shape() != Shape{cols}) {
    throw ShapeError("layerNorm: affine params " + shapeStr(gain.shape()) + "/" +
                     shapeStr(bias.shape()) + " do not match " + shapeStr(x.shape()));
  }
  auto normalized = std::make_shared<std::vector<S>>(static_cast<size_t>(rows) * cols);
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
  std::vector<S> out(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    const S* x_row = x.value().data() + static_cast<size_t>(r) * cols;
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += x_row[c];
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double d = x_row[c] - mean;
      var += d * d;
    }
    var /= cols;
    const double istd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(r)] = static_cast<S>(istd);
    for (int c = 0; c < cols; ++c) {
      const S xhat = static_cast<S>((x_row[c] - mean) * istd);
      (*normalized)[static_cast<size_t>(r) * cols + c] = xhat;
      out[static_cast<size_t>(r) * cols + c] = xhat * gain.value()[c] + bias.value()[c];
    }
  }
  return makeOpResult<S>(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, cols, normalized, inv_std](TensorNode<S>& self) {
        auto& x_node = self.parents[0];
        auto& gain_node = self.parents[1];
        auto& bias_node = self.parents[2];
        for (int r = 0; r < rows; ++r) {
          const S* g = self.grad.data() + static_cast<size_t>(r) * cols;
          const S* xhat = normalized->data() + static_cast<size_t>(r) * cols;
          if (gain_node->requires_grad || bias_node->requires_grad) {
            for (int c = 0; c < cols; ++c) {
              if (gain_node->requires_grad) gain_node->grad[static_cast<size_t>(c)] += g[c] * xhat[c];
              if (bias_node->requires_grad) bias_node->grad[static_cast<size_t>(c)] += g[c];
            }
          }
          if (x_node->requires_grad) {
            // dx = istd * (dy*gain - mean(dy*gain) - xhat * mean(dy*gain*xhat))
            double mean_dg = 0.0, mean_dg_xhat = 0.0;
            for (int c = 0; c < cols; ++c) {
              const double dg = static_cast<double>(g[c]) * gain_node->value[static_cast<size_t>(c)];
              mean_dg += dg;
              mean_dg_xhat += dg * xhat[c];
            }
            mean_dg /= cols;
            mean_dg_xhat /= cols;
            const double istd = (*inv_std)[static_cast<size_t>(r)];
            S* dx = x_node->grad.data() + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) {
              const double dg = static_cast<double>(g[c]) * gain_node->value[static_cast<size_t>(c)];
              dx[c] += static_cast<S>(istd * (dg - mean_dg - xhat[c] * mean_dg_xhat));
            }
          }
        }
      });
}

/// Gathers embedding rows: table [vocab, dim], ids [count] -> [count, dim].
template <typename S>
Tensor<S> embeddingGather(const Tensor<S>& table, const std::vector<int32_t>& ids) {
  detail::require2d(table, "embeddingGather");
  const int vocab = table.dim(0), dim = table.dim(1);
  for (int32_t id : ids) {
    if (id < 0 || id >= vocab) {
      throw DataError("embeddingGather: token " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(vocab));
    }
  }
  const int count = static_cast<int>(ids.size());
  std::vector<S> out(static_cast<size_t>(count) * dim);
  for (int t = 0; t < count; ++t) {
    std::copy_n(table.value().data() + static_cast<size_t>(ids[static_cast<size_t>(t)]) * dim, dim,
                out.data() + static_cast<size_t>(t) * dim);
  }
  auto ids_copy = std::make_shared<std::vector<int32_t>>(ids);
  return makeOpResult<S>({count, dim}, std::move(out), {table},
                         [dim, ids_copy](TensorNode<S>& self) {
                           auto& table_node = self.parents[0];
                           if (!table_node->requires_grad) return;
                           for (size_t t = 0; t < ids_copy->size(); ++t) {
                             const size_t row = static_cast<size_t>((*ids_copy)[t]);
                             for (int c = 0; c < dim; ++c) {
                               table_node->grad[row * dim + c] += self.grad[t * dim + c];
                             }
                           }
                         });
}

/// Expands per-distance position scores into per-pair scores.
///
/// Input b is [q_len, n_dist] where column d holds the score for relative
/// distance d; output [q_len, mem_rows + q_len] has
/// out[i][j] = b[i][mem_rows + i - j] for j <= mem_rows + i, and 0 for future
/// positions (which the causal mask removes anyway). Requires
/// n_dist >= mem_rows + q_len so every needed distance is present.
template <typename S>
Tensor<S> relPositionGather(const Tensor<S>& b, int mem_rows) {
  detail::require2d(b, "relPositionGather");
  const int q_len = b.dim(0), n_dist = b.dim(1);
  const int k_len = mem_rows + q_len;
  detail::require(mem_rows >= 0, "relPositionGather: negative memory length");
  detail::require(n_dist >= k_len, "relPositionGather: " + std::to_string(n_dist) +
                                       " distances for key length " + std::to_string(k_len));
  std::vector<S> out(static_cast<size_t>(q_len) * k_len, S(0));
  for (int i = 0; i < q_len; ++i) {
    const S* b_row = b.value().data() + static_cast<size_t>(i) * n_dist;
    S* o_row = out.data() + static_cast<size_t>(i) * k_len;
    for (int j = 0; j <= mem_rows + i; ++j) o_row[j] = b_row[mem_rows + i - j];
  }
  return makeOpResult<S>({q_len, k_len}, std::move(out), {b},
                         [q_len, n_dist, k_len, mem_rows](TensorNode<S>& self) {
                           auto& b_node = self.parents[0];
                           if (!b_node->requires_grad) return;
                           for (int i = 0; i < q_len; ++i) {
                             const S* g_row = self.grad.data() + static_cast<size_t>(i) * k_len;
                             S* db_row = b_node->grad.data() + static_cast<size_t>(i) * n_dist;
                             for (int j = 0; j <= mem_rows + i; ++j) {
                               db_row[mem_rows + i - j] += g_row[j];
                             }
                           }
                         });
}

/// Mean negative log-softmax probability of the targets. Positions whose
/// keep flag is 0 are excluded from the mean; keep == nullptr keeps all.
template <typename S>
Tensor<S> crossEntropy(const Tensor<S>& logits, const std::vector<int32_t>& targets,
                       const std::vector<uint8_t>* keep = nullptr) {
  detail::require2d(logits, "crossEntropy");
  const int count = logits.dim(0), vocab = logits.dim(1);
  detail::require(static_cast<int>(targets.size()) == count,
                  "crossEntropy: " + std::to_string(targets.size()) + " targets for " +
                      std::to_string(count) + " positions");
  detail::require(keep == nullptr || static_cast<int>(keep->size()) == count,
                  "crossEntropy: keep mask length mismatch");
  int64_t kept = 0;
  double total_nll = 0.0;
  for (int t = 0; t < count; ++t) {
    if (keep != nullptr && (*keep)[static_cast<size_t>(t)] == 0) continue;
    const int32_t target = targets[static_cast<size_t>(t)];
    if (target < 0 || target >= vocab) {
      throw DataError("crossEntropy: target " + std::to_string(target) +
                      " outside vocabulary of " + std::to_string(vocab));
    }
    const S* row = logits.value().data() + static_cast<size_t>(t) * vocab;
    double max_l = row[0];
    for (int v = 1; v < vocab; ++v) max_l = std::max(max_l, static_cast<double>(row[v]));
    double sum_exp = 0.0;
    for (int v = 0; v < vocab; ++v) sum_exp += std::exp(static_cast<double>(row[v]) - max_l);
    total_nll += max_l + std::log(sum_exp) - static_cast<double>(row[target]);
    ++kept;
  }
  const double loss = kept > 0 ? total_nll / static_cast<double>(kept) : 0.0;
  auto targets_copy = std::make_shared<std::vector<int32_t>>(targets);
  auto keep_copy = keep != nullptr ? std::make_shared<std::vector<uint8_t>>(*keep) : nullptr;
  return makeOpResult<S>(
      {1}, {static_cast<S>(loss)}, {logits},
      [count, vocab, kept, targets_copy, keep_copy](TensorNode<S>& self) {
        auto& logits_node = self.parents[0];
        if (!logits_node->requires_grad || kept == 0) return;
        const S g = self.grad[0] / static_cast<S>(kept);
        for (int t = 0; t < count; ++t) {
          if (keep_copy && (*keep_copy)[static_cast<size_t>(t)] == 0) continue;
          const S* row = logits_node->value.data() + static_cast<size_t>(t) * vocab;
          S* drow = logits_node->grad.data() + static_cast<size_t>(t) * vocab;
          double max_l = row[0];
          for (int v = 1; v < vocab; ++v) max_l = std::max(max_l, static_cast<double>(row[v]));
          double sum_exp = 0.0;
          for (int v = 0; v < vocab; ++v) sum_exp += std::exp(static_cast<double>(row[v]) - max_l);
          const double inv_sum = 1.0 / sum_exp;
          const int32_t target = (*targets_copy)[static_cast<size_t>(t)];
          for (int v = 0; v < vocab; ++v) {
            const double softmax = std::exp(static_cast<double>(row[v]) - max_l) * inv_sum;
            const double indicator = v == target ? 1.0 : 0.0;
            drow[v] += static_cast<S>((softmax - indicator)) * g;
          }
        }
      });
}

template <typename S>
Tensor<S> sumAll(const Tensor<S>& x) {
  double total = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) total += x.value()[i];
  return makeOpResult<S>({1}, {static_cast<S>(total)}, {x}, [](TensorNode<S>& self) {
    auto& x_node = self.parents[0];
    if (!x_node->requires_grad) return;
    for (auto& g : x_node->grad) g += self.grad[0];
  });
}

/// x @ w + b with w stored [in, out]; b may be undefined to skip the bias.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  Tensor<S> y = matmul(x, w);
  if (b.defined()) y = addRowBroadcast(y, b);
  return y;
}

}  // namespace quartet
