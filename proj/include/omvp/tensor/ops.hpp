#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "omvp/tensor/graph.hpp"

// Differentiable primitives. Every function evaluates eagerly and records its
// vector-Jacobian product on the owning graph.

namespace omvp::tensor {

namespace detail {

inline void same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a.value().shape()) + " vs " +
                            shape_string(b.value().shape()));
}

inline Tensor like(const Tensor& t, double fill = 0.0) { return Tensor::matrix(t.rows(), t.cols(), fill); }

}  // namespace detail

inline Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows())
        throw ContractError("matmul: inner dimensions " + std::to_string(av.cols()) + " and " + std::to_string(bv.rows()));
    Tensor c = Tensor::matrix(av.rows(), bv.cols());
    as_matrix(c).noalias() = as_matrix(av) * as_matrix(bv);
    const std::size_t ia = a.id, ib = b.id;
    return a.graph->push(std::move(c), {a, b}, [ia, ib](Graph& g, const Tensor& dc) {
        if (g.needs_grad(ia)) as_matrix(g.grad_buffer(ia)).noalias() += as_matrix(dc) * as_matrix(g.value(ib)).transpose();
        if (g.needs_grad(ib)) as_matrix(g.grad_buffer(ib)).noalias() += as_matrix(g.value(ia)).transpose() * as_matrix(dc);
    });
}

/// a * b^T
inline Var matmul_nt(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.cols())
        throw ContractError("matmul_nt: column counts " + std::to_string(av.cols()) + " and " + std::to_string(bv.cols()));
    Tensor c = Tensor::matrix(av.rows(), bv.rows());
    as_matrix(c).noalias() = as_matrix(av) * as_matrix(bv).transpose();
    const std::size_t ia = a.id, ib = b.id;
    return a.graph->push(std::move(c), {a, b}, [ia, ib](Graph& g, const Tensor& dc) {
        if (g.needs_grad(ia)) as_matrix(g.grad_buffer(ia)).noalias() += as_matrix(dc) * as_matrix(g.value(ib));
        if (g.needs_grad(ib)) as_matrix(g.grad_buffer(ib)).noalias() += as_matrix(dc).transpose() * as_matrix(g.value(ia));
    });
}

inline Var add(Var a, Var b) {
    detail::same_shape(a, b, "add");
    Tensor c = detail::like(a.value());
    as_matrix(c) = as_matrix(a.value()) + as_matrix(b.value());
    const std::size_t ia = a.id, ib = b.id;
    return a.graph->push(std::move(c), {a, b}, [ia, ib](Graph& g, const Tensor& dc) {
        if (g.needs_grad(ia)) as_matrix(g.grad_buffer(ia)) += as_matrix(dc);
        if (g.needs_grad(ib)) as_matrix(g.grad_buffer(ib)) += as_matrix(dc);
    });
}

inline Var sub(Var a, Var b) {
    detail::same_shape(a, b, "sub");
    Tensor c = detail::like(a.value());
    as_matrix(c) = as_matrix(a.value()) - as_matrix(b.value());
    const std::size_t ia = a.id, ib = b.id;
    return a.graph->push(std::move(c), {a, b}, [ia, ib](Graph& g, const Tensor& dc) {
        if (g.needs_grad(ia)) as_matrix(g.grad_buffer(ia)) += as_matrix(dc);
        if (g.needs_grad(ib)) as_matrix(g.grad_buffer(ib)) -= as_matrix(dc);
    });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
    detail::same_shape(a, b, "mul");
    Tensor c = detail::like(a.value());
    as_matrix(c) = as_matrix(a.value()).cwiseProduct(as_matrix(b.value()));
    const std::size_t ia = a.id, ib = b.id;
    return a.graph->push(std::move(c), {a, b}, [ia, ib](Graph& g, const Tensor& dc) {
        if (g.needs_grad(ia)) as_matrix(g.grad_buffer(ia)) += as_matrix(dc).cwiseProduct(as_matrix(g.value(ib)));
        if (g.needs_grad(ib)) as_matrix(g.grad_buffer(ib)) += as_matrix(dc).cwiseProduct(as_matrix(g.value(ia)));
    });
}

/// scale * x + shift, elementwise.
inline Var affine(Var x, double scale, double shift = 0.0) {
    Tensor y = detail::like(x.value());
    as_matrix(y) = (as_matrix(x.value()) * scale).array() + shift;
    const std::size_t ix = x.id;
    return x.graph->push(std::move(y), {x}, [ix, scale](Graph& g, const Tensor& dy) {
        as_matrix(g.grad_buffer(ix)) += as_matrix(dy) * scale;
    });
}

/// x + row, broadcasting a 1 x c row over every row of x.
inline Var add_row(Var x, Var row) {
    const Tensor& xv = x.value();
    const Tensor& rv = row.value();
    if (rv.rows() != 1 || rv.cols() != xv.cols())
        throw ContractError("add_row: row shape " + shape_string(rv.shape()) + " vs " + shape_string(xv.shape()));
    Tensor y = detail::like(xv);
    as_matrix(y) = as_matrix(xv).rowwise() + as_matrix(rv).row(0);
    const std::size_t ix = x.id, ir = row.id;
    return x.graph->push(std::move(y), {x, row}, [ix, ir](Graph& g, const Tensor& dy) {
        if (g.needs_grad(ix)) as_matrix(g.grad_buffer(ix)) += as_matrix(dy);
        if (g.needs_grad(ir)) as_matrix(g.grad_buffer(ir)).row(0) += as_matrix(dy).colwise().sum();
    });
}

/// x W + b for a weight W (in x out) and bias b (1 x out).
inline Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

inline Var elu(Var x) {
    const Tensor& xv = x.value();
    Tensor y = detail::like(xv);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : std::expm1(xv[i]);
    const std::size_t ix = x.id;
    return x.graph->push(std::move(y), {x}, [ix](Graph& g, const Tensor& dy) {
        const Tensor& xv = g.value(ix);
        Tensor& dx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * (xv[i] > 0.0 ? 1.0 : std::exp(xv[i]));
    });
}

inline Var sigmoid(Var x) {
    const Tensor& xv = x.value();
    Tensor y = detail::like(xv);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    const std::size_t ix = x.id;
    Tensor keep = x.graph->needs_grad(x) ? y : Tensor();
    return x.graph->push(std::move(y), {x}, [ix, keep = std::move(keep)](Graph& g, const Tensor& dy) {
        Tensor& dx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * keep[i] * (1.0 - keep[i]);
    });
}

inline Var tanh(Var x) {
    const Tensor& xv = x.value();
    Tensor y = detail::like(xv);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(xv[i]);
    const std::size_t ix = x.id;
    return x.graph->push(std::move(y), {x}, [ix](Graph& g, const Tensor& dy) {
        const Tensor& xv = g.value(ix);
        Tensor& dx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            const double t = std::tanh(xv[i]);
            dx[i] += dy[i] * (1.0 - t * t);
        }
    });
}

/// |x|, with derivative sign(x) (0 at 0).
inline Var abs(Var x) {
    Tensor y = detail::like(x.value());
    as_matrix(y) = as_matrix(x.value()).cwiseAbs();
    const std::size_t ix = x.id;
    return x.graph->push(std::move(y), {x}, [ix](Graph& g, const Tensor& dy) {
        const Tensor& xv = g.value(ix);
        Tensor& dx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * static_cast<double>((xv[i] > 0.0) - (xv[i] < 0.0));
    });
}

namespace detail {

inline void softmax_rows_inplace(double* row, std::size_t n) {
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
}

}  // namespace detail

/// Row-wise softmax, shifted by the row maximum.
inline Var softmax_rows(Var x) {
    Tensor y = detail::like(x.value());
    as_matrix(y) = as_matrix(x.value());
    const std::size_t r = y.rows(), c = y.cols();
    for (std::size_t i = 0; i < r; ++i) detail::softmax_rows_inplace(y.data() + i * c, c);
    const std::size_t ix = x.id;
    Graph& g0 = *x.graph;
    Tensor keep = g0.needs_grad(x) ? y : Tensor();
    return g0.push(std::move(y), {x}, [ix, keep = std::move(keep)](Graph& g, const Tensor& dy) {
        auto yv = as_matrix(keep);
        auto d = as_matrix(dy);
        Eigen::VectorXd dot = d.cwiseProduct(yv).rowwise().sum();
        as_matrix(g.grad_buffer(ix)) += yv.cwiseProduct((d.colwise() - dot));
    });
}

/// Per-row normalisation to zero mean and unit variance followed by gain and bias
/// rows (1 x c each).
inline Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5) {
    const Tensor& xv = x.value();
    const std::size_t r = xv.rows(), c = xv.cols();
    if (gain.value().size() != c || bias.value().size() != c)
        throw ContractError("layer_norm_rows: gain/bias length must equal column count");
    Tensor xhat = Tensor::matrix(r, c);
    std::vector<double> inv_std(r);
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = xv.data() + i * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(c);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) xhat(i, j) = (row[j] - mean) * inv_std[i];
    }
    Tensor y = Tensor::matrix(r, c);
    const Tensor& gv = gain.value();
    const Tensor& bv = bias.value();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) y(i, j) = xhat(i, j) * gv[j] + bv[j];
    const std::size_t ix = x.id, ig = gain.id, ib = bias.id;
    return x.graph->push(std::move(y), {x, gain, bias},
                         [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, const Tensor& dy) {
                             const std::size_t r = xhat.rows(), c = xhat.cols();
                             const Tensor& gv = g.value(ig);
                             if (g.needs_grad(ig)) {
                                 Tensor& dg = g.grad_buffer(ig);
                                 for (std::size_t i = 0; i < r; ++i)
                                     for (std::size_t j = 0; j < c; ++j) dg[j] += dy(i, j) * xhat(i, j);
                             }
                             if (g.needs_grad(ib)) {
                                 Tensor& db = g.grad_buffer(ib);
                                 for (std::size_t i = 0; i < r; ++i)
                                     for (std::size_t j = 0; j < c; ++j) db[j] += dy(i, j);
                             }
                             if (g.needs_grad(ix)) {
                                 Tensor& dx = g.grad_buffer(ix);
                                 std::vector<double> dxhat(c);
                                 for (std::size_t i = 0; i < r; ++i) {
                                     double m1 = 0.0, m2 = 0.0;
                                     for (std::size_t j = 0; j < c; ++j) {
                                         dxhat[j] = dy(i, j) * gv[j];
                                         m1 += dxhat[j];
                                         m2 += dxhat[j] * xhat(i, j);
                                     }
                                     m1 /= static_cast<double>(c);
                                     m2 /= static_cast<double>(c);
                                     for (std::size_t j = 0; j < c; ++j)
                                         dx(i, j) += inv_std[i] * (dxhat[j] - m1 - xhat(i, j) * m2);
                                 }
                             }
                         });
}

inline Var reshape(Var x, std::size_t rows, std::size_t cols) {
    const Tensor& xv = x.value();
    if (rows * cols != xv.size())
        throw ContractError("reshape: " + std::to_string(xv.size()) + " elements into " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    Tensor y = Tensor::matrix(rows, cols, std::vector<double>(xv.values().begin(), xv.values().end()));
    const std::size_t ix = x.id;
    return x.graph->push(std::move(y), {x}, [ix](Graph& g, const Tensor& dy) {
        Tensor& dx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no inputs");
    const std::size_t c = parts.front().cols();
    std::size_t r = 0;
    for (const Var& p : parts) {
        if (p.cols() != c) throw ContractError("concat_rows: column count mismatch");
        r += p.rows();
    }
    Tensor y = Tensor::matrix(r, c);
    std::vector<std::size_t> ids, offsets;
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& pv = p.value();
        std::copy(pv.values().begin(), pv.values().end(), y.data() + off * c);
        ids.push_back(p.id);
        offsets.push_back(off);
        off += p.rows();
    }
    return parts.front().graph->push(std::move(y), parts, [ids, offsets, c](Graph& g, const Tensor& dy) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!g.needs_grad(ids[k])) continue;
            Tensor& dx = g.grad_buffer(ids[k]);
            const double* src = dy.data() + offsets[k] * c;
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += src[i];
        }
    });
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const std::size_t r = parts.front().rows();
    std::size_t c = 0;
    for (const Var& p : parts) {
        if (p.rows() != r) throw ContractError("concat_cols: row count mismatch");
        c += p.cols();
    }
    Tensor y = Tensor::matrix(r, c);
    std::vector<std::size_t> ids, offsets;
    std::size_t off = 0;
    for (const Var& p : parts) {
        as_matrix(y).block(0, static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(r),
                           static_cast<Eigen::Index>(p.cols())) = as_matrix(p.value());
        ids.push_back(p.id);
        offsets.push_back(off);
        off += p.cols();
    }
    return parts.front().graph->push(std::move(y), parts, [ids, offsets](Graph& g, const Tensor& dy) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!g.needs_grad(ids[k])) continue;
            Tensor& dx = g.grad_buffer(ids[k]);
            as_matrix(dx) += as_matrix(dy).block(0, static_cast<Eigen::Index>(offsets[k]),
                                                 static_cast<Eigen::Index>(dx.rows()),
                                                 static_cast<Eigen::Index>(dx.cols()));
        }
    });
}

inline Var slice_cols(Var x, std::size_t begin, std::size_t count) {
    const Tensor& xv = x.value();
    if (begin + count > xv.cols()) throw ContractError("slice_cols: range out of bounds");
    Tensor y = Tensor::matrix(xv.rows(), count);
    as_matrix(y) = as_matrix(xv).block(0, static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(xv.rows()),
                                       static_cast<Eigen::Index>(count));
    const std::size_t ix = x.id;
    return x.graph->push(std::move(y), {x}, [ix, begin](Graph& g, const Tensor& dy) {
        as_matrix(g.grad_buffer(ix)).block(0, static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(dy.rows()),
                                           static_cast<Eigen::Index>(dy.cols())) += as_matrix(dy);
    });
}

/// Selects rows of x by index (repeats allowed).
inline Var gather_rows(Var x, std::vector<std::size_t> index) {
    const Tensor& xv = x.value();
    const std::size_t c = xv.cols();
    Tensor y = Tensor::matrix(index.size(), c);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= xv.rows()) throw ContractError("gather_rows: index out of range");
        std::copy_n(xv.data() + index[i] * c, c, y.data() + i * c);
    }
    const std::size_t ix = x.id;
    return x.graph->push(std::move(y), {x}, [ix, index = std::move(index), c](Graph& g, const Tensor& dy) {
        Tensor& dx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < index.size(); ++i)
            for (std::size_t j = 0; j < c; ++j) dx[index[i] * c + j] += dy[i * c + j];
    });
}

/// y[i] = x[i, index[i]] as an r x 1 column.
inline Var pick_cols(Var x, std::vector<std::size_t> index) {
    const Tensor& xv = x.value();
    if (index.size() != xv.rows()) throw ContractError("pick_cols: one index per row required");
    Tensor y = Tensor::matrix(xv.rows(), 1);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= xv.cols()) throw ContractError("pick_cols: index out of range");
        y[i] = xv(i, index[i]);
    }
    const std::size_t ix = x.id;
    return x.graph->push(std::move(y), {x}, [ix, index = std::move(index)](Graph& g, const Tensor& dy) {
        Tensor& dx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < index.size(); ++i) dx(i, index[i]) += dy[i];
    });
}

/// Row sums as an r x 1 column.
inline Var row_sum(Var x) {
    const Tensor& xv = x.value();
    const std::size_t r = xv.rows(), c = xv.cols();
    Tensor y = Tensor::matrix(r, 1);
    // left to right, so a VDN total is the plain sum of its terms
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += xv[i * c + j];
        y[i] = s;
    }
    const std::size_t ix = x.id;
    return x.graph->push(std::move(y), {x}, [ix](Graph& g, const Tensor& dy) {
        as_matrix(g.grad_buffer(ix)).colwise() += as_matrix(dy).col(0);
    });
}

inline Var sum_all(Var x) {
    double s = as_matrix(x.value()).sum();
    const std::size_t ix = x.id;
    return x.graph->push(Tensor::scalar(s), {x}, [ix](Graph& g, const Tensor& dy) {
        as_matrix(g.grad_buffer(ix)).array() += dy[0];
    });
}

/// For each row b: out[b, :] = q[b, :] * reshape(w[b, :], n x h). Batched row-vector
/// times matrix, used by the mixing network.
inline Var batched_vecmat(Var q, Var w, std::size_t h) {
    const Tensor& qv = q.value();
    const Tensor& wv = w.value();
    const std::size_t b = qv.rows(), n = qv.cols();
    if (wv.rows() != b || wv.cols() != n * h) throw ContractError("batched_vecmat: weight shape mismatch");
    Tensor y = Tensor::matrix(b, h);
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t i = 0; i < n; ++i) {
            const double qi = qv(r, i);
            const double* wrow = wv.data() + r * n * h + i * h;
            double* out = y.data() + r * h;
            for (std::size_t k = 0; k < h; ++k) out[k] += qi * wrow[k];
        }
    const std::size_t iq = q.id, iw = w.id;
    return q.graph->push(std::move(y), {q, w}, [iq, iw, b, n, h](Graph& g, const Tensor& dy) {
        const Tensor& qv = g.value(iq);
        const Tensor& wv = g.value(iw);
        const bool gq = g.needs_grad(iq), gw = g.needs_grad(iw);
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t i = 0; i < n; ++i) {
                const double* d = dy.data() + r * h;
                if (gq) {
                    const double* wrow = wv.data() + r * n * h + i * h;
                    double s = 0.0;
                    for (std::size_t k = 0; k < h; ++k) s += d[k] * wrow[k];
                    g.grad_buffer(iq)(r, i) += s;
                }
                if (gw) {
                    double* dw = g.grad_buffer(iw).data() + r * n * h + i * h;
                    const double qi = qv(r, i);
                    for (std::size_t k = 0; k < h; ++k) dw[k] += qi * d[k];
                }
            }
    });
}

/// Weighted mean squared error against a constant target:
/// sum(mask * (pred - target)^2) / sum(mask). An empty mask weighs every entry 1.
inline Var mse(Var pred, const Tensor& target, const std::vector<double>& mask = {}) {
    const Tensor& pv = pred.value();
    if (pv.size() != target.size()) throw ContractError("mse: prediction/target size mismatch");
    if (!mask.empty() && mask.size() != pv.size()) throw ContractError("mse: mask size mismatch");
    std::vector<double> w = mask.empty() ? std::vector<double>(pv.size(), 1.0) : mask;
    double norm = 0.0;
    for (double m : w) norm += m;
    if (norm <= 0.0) throw ContractError("mse: mask selects nothing");
    double loss = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) loss += w[i] * (pv[i] - target[i]) * (pv[i] - target[i]);
    loss /= norm;
    const std::size_t ip = pred.id;
    std::vector<double> tv(target.values().begin(), target.values().end());
    return pred.graph->push(Tensor::scalar(loss), {pred},
                            [ip, tv = std::move(tv), w = std::move(w), norm](Graph& g, const Tensor& dy) {
                                const Tensor& pv = g.value(ip);
                                Tensor& dp = g.grad_buffer(ip);
                                for (std::size_t i = 0; i < dp.size(); ++i)
                                    dp[i] += dy[0] * 2.0 * w[i] * (pv[i] - tv[i]) / norm;
                            });
}

/// Multi-head scaled dot-product attention evaluated independently on consecutive
/// blocks of `group` rows. Q, K, V are (blocks*group) x d with d split into `heads`
/// column slices; the result concatenates the heads back to d columns.
/// When `weights` is given it receives the softmax maps, one group x group matrix
/// per (block, head), stacked block-major into a (blocks*heads*group) x group tensor.
inline Var grouped_attention(Var q, Var k, Var v, std::size_t group, std::size_t heads, Tensor* weights = nullptr) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    const std::size_t rows = qv.rows(), d = qv.cols();
    if (!qv.same_shape(kv) || !qv.same_shape(vv)) throw ContractError("grouped_attention: Q, K, V shapes differ");
    if (group == 0 || rows % group != 0) throw ContractError("grouped_attention: rows not a multiple of group size");
    if (heads == 0 || d % heads != 0) throw ContractError("grouped_attention: width not divisible by head count");
    const std::size_t blocks = rows / group, dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    using Eigen::Index;
    const auto G = static_cast<Index>(group), DK = static_cast<Index>(dk);

    Tensor probs = Tensor::matrix(blocks * heads * group, group);
    Tensor out = Tensor::matrix(rows, d);
    auto Q = as_matrix(qv);
    auto K = as_matrix(kv);
    auto V = as_matrix(vv);
    auto P = as_matrix(probs);
    auto O = as_matrix(out);
    for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t h = 0; h < heads; ++h) {
            const auto r0 = static_cast<Index>(b * group), c0 = static_cast<Index>(h * dk);
            const auto p0 = static_cast<Index>((b * heads + h) * group);
            auto S = P.block(p0, 0, G, G);
            S.noalias() = Q.block(r0, c0, G, DK) * K.block(r0, c0, G, DK).transpose();
            S *= scale;
            for (Index i = 0; i < G; ++i) detail::softmax_rows_inplace(probs.data() + (p0 + i) * G, group);
            O.block(r0, c0, G, DK).noalias() = S * V.block(r0, c0, G, DK);
        }
    if (weights) *weights = probs;

    const std::size_t iq = q.id, ik = k.id, iv = v.id;
    return q.graph->push(std::move(out), {q, k, v},
                         [iq, ik, iv, group, heads, blocks, dk, scale, probs = std::move(probs)](Graph& g, const Tensor& dy) {
                             const auto G = static_cast<Index>(group), DK = static_cast<Index>(dk);
                             auto Q = as_matrix(g.value(iq));
                             auto K = as_matrix(g.value(ik));
                             auto V = as_matrix(g.value(iv));
                             auto P = as_matrix(probs);
                             auto dO = as_matrix(dy);
                             const bool gq = g.needs_grad(iq), gk = g.needs_grad(ik), gv = g.needs_grad(iv);
                             RowMatrix dP(G, G), dS(G, G);
                             for (std::size_t b = 0; b < blocks; ++b)
                                 for (std::size_t h = 0; h < heads; ++h) {
                                     const auto r0 = static_cast<Index>(b * group), c0 = static_cast<Index>(h * dk);
                                     const auto p0 = static_cast<Index>((b * heads + h) * group);
                                     auto Pb = P.block(p0, 0, G, G);
                                     auto dOb = dO.block(r0, c0, G, DK);
                                     if (gv) as_matrix(g.grad_buffer(iv)).block(r0, c0, G, DK).noalias() += Pb.transpose() * dOb;
                                     if (!gq && !gk) continue;
                                     dP.noalias() = dOb * V.block(r0, c0, G, DK).transpose();
                                     Eigen::VectorXd dot = dP.cwiseProduct(Pb).rowwise().sum();
                                     dS = Pb.cwiseProduct(dP.colwise() - dot) * scale;
                                     if (gq) as_matrix(g.grad_buffer(iq)).block(r0, c0, G, DK).noalias() += dS * K.block(r0, c0, G, DK);
                                     if (gk) as_matrix(g.grad_buffer(ik)).block(r0, c0, G, DK).noalias() += dS.transpose() * Q.block(r0, c0, G, DK);
                                 }
                         });
}

}  // namespace omvp::tensor
