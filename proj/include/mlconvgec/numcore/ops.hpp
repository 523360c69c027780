#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mlconvgec/common/rng.hpp"
#include "mlconvgec/numcore/tape.hpp"

namespace mlconvgec::nc {

namespace detail {

inline void require_same_shape(const Array& a, const Array& b, const char* op) {
    if (a.shape() != b.shape()) {
        fail(ErrorCategory::dimension,
             std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

inline void require_rank(const Array& a, std::size_t lo, std::size_t hi, const char* op) {
    if (a.rank() < lo || a.rank() > hi) {
        fail(ErrorCategory::dimension, std::string(op) + ": unsupported rank for shape " + shape_str(a.shape()));
    }
}

/// Output shape for a row-wise op that maps rows of width `in` to width `out`.
inline Shape rowwise_shape(const Array& x, std::size_t out) {
    if (x.rank() == 1) return {out};
    return {x.rows(), out};
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

inline Var add(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    detail::require_same_shape(av, bv, "add");
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
        for (Var in : {a, b}) {
            if (Array* ga = t.grad_target(in)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
            }
        }
    });
}

/// Element-wise product.
inline Var mul(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    detail::require_same_shape(av, bv, "mul");
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
        const Array& av = t.value(a);
        const Array& bv = t.value(b);
        if (Array* ga = t.grad_target(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
        }
        if (Array* gb = t.grad_target(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
        }
    });
}

inline Var scale(Var a, double c) {
    Array out = a.value();
    for (auto& v : out.data()) v *= c;
    return a.tape->record(std::move(out), {a}, [a, c](Tape& t, const Array& g) {
        if (Array* ga = t.grad_target(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += c * g[i];
        }
    });
}

/// Sum of all elements, as a one-element array.
inline Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return a.tape->record(Array({1}, std::vector<double>{s}), {a}, [a](Tape& t, const Array& g) {
        if (Array* ga = t.grad_target(a)) {
            for (auto& v : ga->data()) v += g[0];
        }
    });
}

/// Adds a bias vector to every row of x.
inline Var add_row(Var x, Var b) {
    const Array& xv = x.value();
    const Array& bv = b.value();
    detail::require_rank(xv, 1, 2, "add_row");
    if (bv.rank() != 1 || bv.size() != xv.cols()) {
        fail(ErrorCategory::dimension,
             "add_row: bias " + shape_str(bv.shape()) + " does not fit rows of " + shape_str(xv.shape()));
    }
    Array out = xv;
    const std::size_t n = xv.rows(), k = xv.cols();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < k; ++c) out[r * k + c] += bv[c];
    return x.tape->record(std::move(out), {x, b}, [x, b, n, k](Tape& t, const Array& g) {
        if (Array* gx = t.grad_target(x)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
        }
        if (Array* gb = t.grad_target(b)) {
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < k; ++c) (*gb)[c] += g[r * k + c];
        }
    });
}

/// W·x + b for a vector x, or row-wise x·Wᵀ + b for a matrix of row vectors.
/// W is [out × in].
inline Var linear(Var x, Var w, Var b) {
    const Array& xv = x.value();
    const Array& wv = w.value();
    const Array& bv = b.value();
    detail::require_rank(xv, 1, 2, "linear");
    if (wv.rank() != 2 || wv.dim(1) != xv.cols() || bv.rank() != 1 || bv.size() != wv.dim(0)) {
        fail(ErrorCategory::dimension, "linear: input " + shape_str(xv.shape()) + " with weight " +
                                           shape_str(wv.shape()) + " and bias " + shape_str(bv.shape()));
    }
    const std::size_t n = xv.rows(), in = xv.cols(), out_dim = wv.dim(0);
    Array out(detail::rowwise_shape(xv, out_dim));
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = xv.data().data() + r * in;
        for (std::size_t j = 0; j < out_dim; ++j) {
            const double* wr = wv.data().data() + j * in;
            double s = bv[j];
            for (std::size_t c = 0; c < in; ++c) s += wr[c] * xr[c];
            out[r * out_dim + j] = s;
        }
    }
    return x.tape->record(std::move(out), {x, w, b}, [x, w, b, n, in, out_dim](Tape& t, const Array& g) {
        const Array& xv = t.value(x);
        const Array& wv = t.value(w);
        if (Array* gx = t.grad_target(x)) {
            for (std::size_t r = 0; r < n; ++r) {
                double* gxr = gx->data().data() + r * in;
                for (std::size_t j = 0; j < out_dim; ++j) {
                    const double gj = g[r * out_dim + j];
                    if (gj == 0.0) continue;
                    const double* wr = wv.data().data() + j * in;
                    for (std::size_t c = 0; c < in; ++c) gxr[c] += gj * wr[c];
                }
            }
        }
        if (Array* gw = t.grad_target(w)) {
            for (std::size_t r = 0; r < n; ++r) {
                const double* xr = xv.data().data() + r * in;
                for (std::size_t j = 0; j < out_dim; ++j) {
                    const double gj = g[r * out_dim + j];
                    if (gj == 0.0) continue;
                    double* gwr = gw->data().data() + j * in;
                    for (std::size_t c = 0; c < in; ++c) gwr[c] += gj * xr[c];
                }
            }
        }
        if (Array* gb = t.grad_target(b)) {
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < out_dim; ++j) (*gb)[j] += g[r * out_dim + j];
        }
    });
}

/// A[n×k] · B[k×m].
inline Var matmul(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        fail(ErrorCategory::dimension, "matmul: " + shape_str(av.shape()) + " times " + shape_str(bv.shape()));
    }
    const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
    Array out({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aip * bv[p * m + j];
        }
    return a.tape->record(std::move(out), {a, b}, [a, b, n, k, m](Tape& t, const Array& g) {
        const Array& av = t.value(a);
        const Array& bv = t.value(b);
        if (Array* ga = t.grad_target(a)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * bv[p * m + j];
                    (*ga)[i * k + p] += s;
                }
        }
        if (Array* gb = t.grad_target(b)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = av[i * k + p];
                    for (std::size_t j = 0; j < m; ++j) (*gb)[p * m + j] += aip * g[i * m + j];
                }
        }
    });
}

/// A[n×k] · B[m×k]ᵀ, i.e. all pairwise row dot products.
inline Var matmul_nt(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1)) {
        fail(ErrorCategory::dimension,
             "matmul_nt: " + shape_str(av.shape()) + " against " + shape_str(bv.shape()));
    }
    const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(0);
    Array out({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += av[i * k + p] * bv[j * k + p];
            out[i * m + j] = s;
        }
    return a.tape->record(std::move(out), {a, b}, [a, b, n, k, m](Tape& t, const Array& g) {
        const Array& av = t.value(a);
        const Array& bv = t.value(b);
        if (Array* ga = t.grad_target(a)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    const double gij = g[i * m + j];
                    for (std::size_t p = 0; p < k; ++p) (*ga)[i * k + p] += gij * bv[j * k + p];
                }
        }
        if (Array* gb = t.grad_target(b)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    const double gij = g[i * m + j];
                    for (std::size_t p = 0; p < k; ++p) (*gb)[j * k + p] += gij * av[i * k + p];
                }
        }
    });
}

/// Inserts zero rows before and after a [n×c] matrix.
inline Var pad_rows(Var x, std::size_t left, std::size_t right) {
    const Array& xv = x.value();
    if (xv.rank() != 2) fail(ErrorCategory::dimension, "pad_rows: expected a matrix, got " + shape_str(xv.shape()));
    const std::size_t n = xv.rows(), c = xv.cols();
    Array out({n + left + right, c});
    std::copy(xv.data().begin(), xv.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(left * c));
    return x.tape->record(std::move(out), {x}, [x, left, n, c](Tape& t, const Array& g) {
        if (Array* gx = t.grad_target(x)) {
            for (std::size_t i = 0; i < n * c; ++i) (*gx)[i] += g[left * c + i];
        }
    });
}

inline Var slice_rows(Var x, std::size_t start, std::size_t count) {
    const Array& xv = x.value();
    if (xv.rank() != 2 || count == 0 || start + count > xv.rows()) {
        fail(ErrorCategory::dimension, "slice_rows: rows [" + std::to_string(start) + ", " +
                                           std::to_string(start + count) + ") of " + shape_str(xv.shape()));
    }
    const std::size_t c = xv.cols();
    Array out({count, c});
    std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(start * c), count * c, out.data().begin());
    return x.tape->record(std::move(out), {x}, [x, start, count, c](Tape& t, const Array& g) {
        if (Array* gx = t.grad_target(x)) {
            for (std::size_t i = 0; i < count * c; ++i) (*gx)[start * c + i] += g[i];
        }
    });
}

/// Width-3 convolution over an already padded sequence.
///
/// seq is [(T+2)×c]; filters is [o×3×c]. Output row i is
/// Σ_w filters[:, w, :] · seq[i + w], so it sees padded rows i, i+1, i+2.
/// How the caller pads decides centring (1 left + 1 right) or causality
/// (2 left).
inline Var conv1d(Var seq, Var filters) {
    const Array& sv = seq.value();
    const Array& fv = filters.value();
    if (sv.rank() != 2 || fv.rank() != 3 || fv.dim(1) != 3 || fv.dim(2) != sv.cols()) {
        fail(ErrorCategory::dimension,
             "conv1d: sequence " + shape_str(sv.shape()) + " with filters " + shape_str(fv.shape()));
    }
    if (sv.rows() < 3) {
        fail(ErrorCategory::length, "conv1d: empty input (padded sequence " + shape_str(sv.shape()) + ")");
    }
    const std::size_t steps = sv.rows() - 2, c = sv.cols(), o = fv.dim(0), win = 3 * c;
    Array out({steps, o});
    for (std::size_t i = 0; i < steps; ++i) {
        // Rows i..i+2 are contiguous in row-major storage, as is each filter.
        const double* window = sv.data().data() + i * c;
        for (std::size_t f = 0; f < o; ++f) {
            const double* fr = fv.data().data() + f * win;
            double s = 0.0;
            for (std::size_t p = 0; p < win; ++p) s += fr[p] * window[p];
            out[i * o + f] = s;
        }
    }
    return seq.tape->record(std::move(out), {seq, filters}, [seq, filters, steps, c, o, win](Tape& t, const Array& g) {
        const Array& sv = t.value(seq);
        const Array& fv = t.value(filters);
        if (Array* gs = t.grad_target(seq)) {
            for (std::size_t i = 0; i < steps; ++i) {
                double* gw = gs->data().data() + i * c;
                for (std::size_t f = 0; f < o; ++f) {
                    const double gf = g[i * o + f];
                    if (gf == 0.0) continue;
                    const double* fr = fv.data().data() + f * win;
                    for (std::size_t p = 0; p < win; ++p) gw[p] += gf * fr[p];
                }
            }
        }
        if (Array* gf_arr = t.grad_target(filters)) {
            for (std::size_t i = 0; i < steps; ++i) {
                const double* window = sv.data().data() + i * c;
                for (std::size_t f = 0; f < o; ++f) {
                    const double gf = g[i * o + f];
                    if (gf == 0.0) continue;
                    double* gfr = gf_arr->data().data() + f * win;
                    for (std::size_t p = 0; p < win; ++p) gfr[p] += gf * window[p];
                }
            }
        }
    });
}

/// Gated linear unit: first half ∘ σ(second half), per row.
inline Var glu(Var f) {
    const Array& fv = f.value();
    detail::require_rank(fv, 1, 2, "glu");
    if (fv.cols() % 2 != 0) {
        fail(ErrorCategory::dimension, "glu: odd feature width in shape " + shape_str(fv.shape()));
    }
    const std::size_t n = fv.rows(), two_h = fv.cols(), h = two_h / 2;
    Array out(detail::rowwise_shape(fv, h));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < h; ++j)
            out[r * h + j] = fv[r * two_h + j] * detail::sigmoid(fv[r * two_h + h + j]);
    return f.tape->record(std::move(out), {f}, [f, n, h, two_h](Tape& t, const Array& g) {
        Array* gf = t.grad_target(f);
        if (!gf) return;
        const Array& fv = t.value(f);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < h; ++j) {
                const double a = fv[r * two_h + j];
                const double s = detail::sigmoid(fv[r * two_h + h + j]);
                const double gj = g[r * h + j];
                (*gf)[r * two_h + j] += gj * s;
                (*gf)[r * two_h + h + j] += gj * a * s * (1.0 - s);
            }
    });
}

/// Row-wise softmax with max subtraction.
inline Var softmax(Var v) {
    const Array& x = v.value();
    detail::require_rank(x, 1, 2, "softmax");
    const std::size_t n = x.rows(), k = x.cols();
    Array out(x.shape());
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = x.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += (out[r * k + c] = std::exp(row[c] - mx));
        for (std::size_t c = 0; c < k; ++c) out[r * k + c] /= z;
    }
    Array copy = out;
    return v.tape->record(std::move(out), {v}, [v, n, k, y = std::move(copy)](Tape& t, const Array& g) {
        Array* gv = t.grad_target(v);
        for (std::size_t r = 0; r < n; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < k; ++c) dot += g[r * k + c] * y[r * k + c];
            for (std::size_t c = 0; c < k; ++c) (*gv)[r * k + c] += y[r * k + c] * (g[r * k + c] - dot);
        }
    });
}

/// Row-wise log-softmax (log-sum-exp with max subtraction).
inline Var log_softmax(Var v) {
    const Array& x = v.value();
    detail::require_rank(x, 1, 2, "log_softmax");
    const std::size_t n = x.rows(), k = x.cols();
    Array out(x.shape());
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = x.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += std::exp(row[c] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t c = 0; c < k; ++c) out[r * k + c] = row[c] - lse;
    }
    Array copy = out;
    return v.tape->record(std::move(out), {v}, [v, n, k, y = std::move(copy)](Tape& t, const Array& g) {
        Array* gv = t.grad_target(v);
        for (std::size_t r = 0; r < n; ++r) {
            double gs = 0.0;
            for (std::size_t c = 0; c < k; ++c) gs += g[r * k + c];
            for (std::size_t c = 0; c < k; ++c) (*gv)[r * k + c] += g[r * k + c] - std::exp(y[r * k + c]) * gs;
        }
    });
}

/// Inverted dropout: survivors are scaled by 1/(1-p) at training time, so
/// inference is the identity and returns x itself.
inline Var dropout(Var x, double p, bool training, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) {
        fail(ErrorCategory::config, "dropout probability must be in [0, 1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) return x;
    const Array& xv = x.value();
    Array mask(xv.shape());
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto& m : mask.data()) m = rng.uniform() < p ? 0.0 : keep_scale;
    Array out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return x.tape->record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& t, const Array& g) {
        if (Array* gx = t.grad_target(x)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
        }
    });
}

/// Embedding lookup: row i of the result is table[indices[i]]. Rows whose
/// index equals `frozen_index` never receive gradient.
inline Var gather_rows(Var table, std::span<const int> indices, std::optional<int> frozen_index = std::nullopt) {
    const Array& tv = table.value();
    if (tv.rank() != 2) fail(ErrorCategory::dimension, "gather_rows: table must be a matrix, got " + shape_str(tv.shape()));
    if (indices.empty()) fail(ErrorCategory::length, "gather_rows: empty index sequence");
    const std::size_t d = tv.cols();
    Array out({indices.size(), d});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || static_cast<std::size_t>(idx) >= tv.rows()) {
            fail(ErrorCategory::dimension, "gather_rows: index " + std::to_string(idx) + " outside table " +
                                               shape_str(tv.shape()));
        }
        std::copy_n(tv.row(static_cast<std::size_t>(idx)).begin(), d, out.row(i).begin());
    }
    std::vector<int> idx(indices.begin(), indices.end());
    return table.tape->record(std::move(out), {table}, [table, d, frozen_index, idx = std::move(idx)](Tape& t, const Array& g) {
        Array* gt = t.grad_target(table);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (frozen_index && idx[i] == *frozen_index) continue;
            double* dst = gt->data().data() + static_cast<std::size_t>(idx[i]) * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] += g[i * d + c];
        }
    });
}

/// Mean negative log-likelihood of the target column in each row of a
/// log-probability matrix: -(1/n) Σ_r logp[r, targets[r]].
inline Var nll_mean(Var logp, std::span<const int> targets) {
    const Array& lv = logp.value();
    if (lv.rank() != 2 || lv.rows() != targets.size()) {
        fail(ErrorCategory::dimension, "nll_mean: " + std::to_string(targets.size()) + " targets for log-probs " +
                                           shape_str(lv.shape()));
    }
    const std::size_t n = lv.rows(), k = lv.cols();
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const int tgt = targets[r];
        if (tgt < 0 || static_cast<std::size_t>(tgt) >= k) {
            fail(ErrorCategory::dimension, "nll_mean: target " + std::to_string(tgt) + " outside vocabulary of " +
                                               std::to_string(k));
        }
        s -= lv[r * k + static_cast<std::size_t>(tgt)];
    }
    std::vector<int> tg(targets.begin(), targets.end());
    return logp.tape->record(Array({1}, std::vector<double>{s / static_cast<double>(n)}), {logp},
                             [logp, n, k, tg = std::move(tg)](Tape& t, const Array& g) {
                                 Array* gl = t.grad_target(logp);
                                 const double w = -g[0] / static_cast<double>(n);
                                 for (std::size_t r = 0; r < n; ++r) (*gl)[r * k + static_cast<std::size_t>(tg[r])] += w;
                             });
}

}  // namespace mlconvgec::nc
