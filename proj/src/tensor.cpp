#include "cob/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "cob/rng.hpp"

namespace cob {

namespace {

void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v)
        if (!std::isfinite(x))
            throw NumericalFault(std::string(op) + ": non-finite value in output");
}

// c (m x n) = op(a) * op(b), accumulating when beta1 is set. Leading
// dimensions are the physical column counts of the row-major buffers.
void gemm(const double* a, int ar, int ac, bool ta, const double* b, int br, int bc, bool tb,
          double* c, bool accumulate) {
    const int m = ta ? ac : ar;
    const int k = ta ? ar : ac;
    const int kb = tb ? bc : br;
    const int n = tb ? br : bc;
    if (k != kb) throw ShapeError("gemm: inner dimensions disagree");
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, 1.0, a, ac, b, bc, accumulate ? 1.0 : 0.0, c, n);
}

bool has_grad(const std::shared_ptr<TensorData>& d) { return !d->grad.empty(); }

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
    if (rows < 0 || cols < 0) throw ShapeError("tensor: negative dimensions");
    Tensor t;
    t.d = std::make_shared<TensorData>();
    t.d->rows = rows;
    t.d->cols = cols;
    t.d->values.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    t.d->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::from_values(int rows, int cols, std::vector<double> values, bool requires_grad) {
    if (static_cast<std::int64_t>(values.size()) != static_cast<std::int64_t>(rows) * cols)
        throw ShapeError("tensor: value count " + std::to_string(values.size()) +
                         " does not fill " + std::to_string(rows) + "x" + std::to_string(cols));
    check_finite(values, "from_values");
    Tensor t;
    t.d = std::make_shared<TensorData>();
    t.d->rows = rows;
    t.d->cols = cols;
    t.d->values = std::move(values);
    t.d->requires_grad = requires_grad;
    return t;
}

double Tensor::item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item: tensor is not 1x1");
    return d->values[0];
}

void SparseMatrix::multiply(const double* x, int xcols, double* y) const {
    for (int r = 0; r < rows; ++r) {
        double* yr = y + static_cast<std::size_t>(r) * xcols;
        std::fill(yr, yr + xcols, 0.0);
        for (std::int64_t k = offsets[r]; k < offsets[r + 1]; ++k) {
            const double w = weights[k];
            const double* xr = x + static_cast<std::size_t>(col_index[k]) * xcols;
            for (int c = 0; c < xcols; ++c) yr[c] += w * xr[c];
        }
    }
}

void SparseMatrix::multiply_transpose_add(const double* dy, int xcols, double* dx) const {
    for (int r = 0; r < rows; ++r) {
        const double* dyr = dy + static_cast<std::size_t>(r) * xcols;
        for (std::int64_t k = offsets[r]; k < offsets[r + 1]; ++k) {
            const double w = weights[k];
            double* dxr = dx + static_cast<std::size_t>(col_index[k]) * xcols;
            for (int c = 0; c < xcols; ++c) dxr[c] += w * dyr[c];
        }
    }
}

Tensor Tape::make_output(int rows, int cols, bool requires_grad, const char* op) {
    Tensor t = Tensor::zeros(rows, cols, requires_grad);
    (void)op;
    return t;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    const int m = trans_a ? a.cols() : a.rows();
    const int k = trans_a ? a.rows() : a.cols();
    const int kb = trans_b ? b.cols() : b.rows();
    const int n = trans_b ? b.rows() : b.cols();
    if (k != kb)
        throw ShapeError("matmul: " + std::to_string(m) + "x" + std::to_string(k) + " vs " +
                         std::to_string(kb) + "x" + std::to_string(n));
    Tensor out = make_output(m, n, a.requires_grad() || b.requires_grad(), "matmul");
    gemm(a.values().data(), a.rows(), a.cols(), trans_a, b.values().data(), b.rows(), b.cols(),
         trans_b, out.values().data(), false);
    check_finite(out.values(), "matmul");
    if (out.requires_grad())
        record([ad = a.d, bd = b.d, od = out.d, trans_a, trans_b]() {
            if (!has_grad(od)) return;
            const double* dc = od->grad.data();
            const int m2 = od->rows, n2 = od->cols;
            if (ad->requires_grad) {
                ad->ensure_grad();
                if (!trans_a)
                    gemm(dc, m2, n2, false, bd->values.data(), bd->rows, bd->cols, !trans_b,
                         ad->grad.data(), true);
                else
                    gemm(bd->values.data(), bd->rows, bd->cols, trans_b, dc, m2, n2, true,
                         ad->grad.data(), true);
            }
            if (bd->requires_grad) {
                bd->ensure_grad();
                if (!trans_b)
                    gemm(ad->values.data(), ad->rows, ad->cols, !trans_a, dc, m2, n2, false,
                         bd->grad.data(), true);
                else
                    gemm(dc, m2, n2, true, ad->values.data(), ad->rows, ad->cols, trans_a,
                         bd->grad.data(), true);
            }
        });
    return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    const bool bias_row = b.rows() == 1 && a.rows() != 1;
    if (b.cols() != a.cols() || (!bias_row && b.rows() != a.rows()))
        throw ShapeError("add: shapes " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad() || b.requires_grad(), "add");
    const std::size_t n = a.values().size();
    const int cols = a.cols();
    for (std::size_t i = 0; i < n; ++i)
        out.values()[i] = a.values()[i] + b.values()[bias_row ? i % cols : i];
    check_finite(out.values(), "add");
    if (out.requires_grad())
        record([ad = a.d, bd = b.d, od = out.d, bias_row, cols]() {
            if (!has_grad(od)) return;
            const std::size_t sz = od->grad.size();
            if (ad->requires_grad) {
                ad->ensure_grad();
                for (std::size_t i = 0; i < sz; ++i) ad->grad[i] += od->grad[i];
            }
            if (bd->requires_grad) {
                bd->ensure_grad();
                for (std::size_t i = 0; i < sz; ++i)
                    bd->grad[bias_row ? i % cols : i] += od->grad[i];
            }
        });
    return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad(), "scale");
    for (std::size_t i = 0; i < a.values().size(); ++i) out.values()[i] = c * a.values()[i];
    check_finite(out.values(), "scale");
    if (out.requires_grad())
        record([ad = a.d, od = out.d, c]() {
            if (!has_grad(od)) return;
            ad->ensure_grad();
            for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += c * od->grad[i];
        });
    return out;
}

Tensor Tape::elementwise_mul(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("elementwise_mul: shape mismatch");
    Tensor out =
        make_output(a.rows(), a.cols(), a.requires_grad() || b.requires_grad(), "elementwise_mul");
    for (std::size_t i = 0; i < a.values().size(); ++i)
        out.values()[i] = a.values()[i] * b.values()[i];
    check_finite(out.values(), "elementwise_mul");
    if (out.requires_grad())
        record([ad = a.d, bd = b.d, od = out.d]() {
            if (!has_grad(od)) return;
            if (ad->requires_grad) {
                ad->ensure_grad();
                for (std::size_t i = 0; i < od->grad.size(); ++i)
                    ad->grad[i] += od->grad[i] * bd->values[i];
            }
            if (bd->requires_grad) {
                bd->ensure_grad();
                for (std::size_t i = 0; i < od->grad.size(); ++i)
                    bd->grad[i] += od->grad[i] * ad->values[i];
            }
        });
    return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
    const int rows = a.rows(), ca = a.cols(), cb = b.cols();
    Tensor out = make_output(rows, ca + cb, a.requires_grad() || b.requires_grad(), "concat_cols");
    for (int r = 0; r < rows; ++r) {
        std::copy_n(&a.values()[static_cast<std::size_t>(r) * ca], ca,
                    &out.values()[static_cast<std::size_t>(r) * (ca + cb)]);
        std::copy_n(&b.values()[static_cast<std::size_t>(r) * cb], cb,
                    &out.values()[static_cast<std::size_t>(r) * (ca + cb) + ca]);
    }
    if (out.requires_grad())
        record([ad = a.d, bd = b.d, od = out.d, rows, ca, cb]() {
            if (!has_grad(od)) return;
            for (int r = 0; r < rows; ++r) {
                const double* g = &od->grad[static_cast<std::size_t>(r) * (ca + cb)];
                if (ad->requires_grad) {
                    ad->ensure_grad();
                    for (int c = 0; c < ca; ++c)
                        ad->grad[static_cast<std::size_t>(r) * ca + c] += g[c];
                }
                if (bd->requires_grad) {
                    bd->ensure_grad();
                    for (int c = 0; c < cb; ++c)
                        bd->grad[static_cast<std::size_t>(r) * cb + c] += g[ca + c];
                }
            }
        });
    return out;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const int cols = parts[0].cols();
    int rows = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
        rows += p.rows();
        rg = rg || p.requires_grad();
    }
    Tensor out = make_output(rows, cols, rg, "concat_rows");
    std::size_t at = 0;
    for (const Tensor& p : parts) {
        std::copy(p.values().begin(), p.values().end(), out.values().begin() + at);
        at += p.values().size();
    }
    if (rg) {
        std::vector<std::shared_ptr<TensorData>> ds;
        ds.reserve(parts.size());
        for (const Tensor& p : parts) ds.push_back(p.d);
        record([ds = std::move(ds), od = out.d]() {
            if (!has_grad(od)) return;
            std::size_t at2 = 0;
            for (const auto& pd : ds) {
                const std::size_t n = pd->values.size();
                if (pd->requires_grad) {
                    pd->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) pd->grad[i] += od->grad[at2 + i];
                }
                at2 += n;
            }
        });
    }
    return out;
}

Tensor Tape::row_softmax(const Tensor& a) {
    const int rows = a.rows(), cols = a.cols();
    if (cols < 1) throw ShapeError("row_softmax: empty rows");
    Tensor out = make_output(rows, cols, a.requires_grad(), "row_softmax");
    for (int r = 0; r < rows; ++r) {
        const double* x = &a.values()[static_cast<std::size_t>(r) * cols];
        double* y = &out.values()[static_cast<std::size_t>(r) * cols];
        double mx = x[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            sum += y[c];
        }
        for (int c = 0; c < cols; ++c) y[c] /= sum;
    }
    check_finite(out.values(), "row_softmax");
    if (out.requires_grad())
        record([ad = a.d, od = out.d, rows, cols]() {
            if (!has_grad(od)) return;
            ad->ensure_grad();
            for (int r = 0; r < rows; ++r) {
                const double* y = &od->values[static_cast<std::size_t>(r) * cols];
                const double* dy = &od->grad[static_cast<std::size_t>(r) * cols];
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += dy[c] * y[c];
                double* dx = &ad->grad[static_cast<std::size_t>(r) * cols];
                for (int c = 0; c < cols; ++c) dx[c] += y[c] * (dy[c] - dot);
            }
        });
    return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int rows = x.rows(), cols = x.cols();
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be > 0");
    if (gamma.rows() != 1 || gamma.cols() != cols || beta.rows() != 1 || beta.cols() != cols)
        throw ShapeError("layer_norm: gamma/beta must be 1x" + std::to_string(cols));
    const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    Tensor out = make_output(rows, cols, rg, "layer_norm");
    auto xhat = std::make_shared<std::vector<double>>(x.values().size());
    auto inv_sigma = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        const double* xr = &x.values()[static_cast<std::size_t>(r) * cols];
        double mu = 0.0;
        for (int c = 0; c < cols; ++c) mu += xr[c];
        mu /= cols;
        double var = 0.0;
        for (int c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= cols;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[r] = is;
        for (int c = 0; c < cols; ++c) {
            const double xh = (xr[c] - mu) * is;
            (*xhat)[static_cast<std::size_t>(r) * cols + c] = xh;
            out.values()[static_cast<std::size_t>(r) * cols + c] =
                gamma.values()[c] * xh + beta.values()[c];
        }
    }
    check_finite(out.values(), "layer_norm");
    if (rg)
        record([xd = x.d, gd = gamma.d, bd = beta.d, od = out.d, xhat, inv_sigma, rows, cols]() {
            if (!has_grad(od)) return;
            for (int r = 0; r < rows; ++r) {
                const double* dy = &od->grad[static_cast<std::size_t>(r) * cols];
                const double* xh = &(*xhat)[static_cast<std::size_t>(r) * cols];
                if (gd->requires_grad) {
                    gd->ensure_grad();
                    for (int c = 0; c < cols; ++c) gd->grad[c] += dy[c] * xh[c];
                }
                if (bd->requires_grad) {
                    bd->ensure_grad();
                    for (int c = 0; c < cols; ++c) bd->grad[c] += dy[c];
                }
                if (xd->requires_grad) {
                    xd->ensure_grad();
                    double mean_g = 0.0, mean_gx = 0.0;
                    for (int c = 0; c < cols; ++c) {
                        const double g = dy[c] * gd->values[c];
                        mean_g += g;
                        mean_gx += g * xh[c];
                    }
                    mean_g /= cols;
                    mean_gx /= cols;
                    double* dx = &xd->grad[static_cast<std::size_t>(r) * cols];
                    const double is = (*inv_sigma)[r];
                    for (int c = 0; c < cols; ++c) {
                        const double g = dy[c] * gd->values[c];
                        dx[c] += (g - mean_g - xh[c] * mean_gx) * is;
                    }
                }
            }
        });
    return out;
}

Tensor Tape::relu(const Tensor& a) {
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad(), "relu");
    for (std::size_t i = 0; i < a.values().size(); ++i)
        out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    if (out.requires_grad())
        record([ad = a.d, od = out.d]() {
            if (!has_grad(od)) return;
            ad->ensure_grad();
            for (std::size_t i = 0; i < od->grad.size(); ++i)
                if (ad->values[i] > 0.0) ad->grad[i] += od->grad[i];
        });
    return out;
}

Tensor Tape::mean_rows(const Tensor& a, const std::vector<int>& groups, int num_groups) {
    if (static_cast<int>(groups.size()) != a.rows())
        throw ShapeError("mean_rows: group spec length != rows");
    if (num_groups < 1) throw ShapeError("mean_rows: need at least one group");
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_groups), 0);
    for (int g : groups) {
        if (g < 0 || g >= num_groups) throw BoundsError("mean_rows: group id out of range");
        ++counts[g];
    }
    for (int g = 0; g < num_groups; ++g)
        if (counts[g] == 0)
            throw ValidationError("mean_rows: group " + std::to_string(g) + " is empty");
    const int cols = a.cols();
    Tensor out = make_output(num_groups, cols, a.requires_grad(), "mean_rows");
    for (int r = 0; r < a.rows(); ++r) {
        const double* xr = &a.values()[static_cast<std::size_t>(r) * cols];
        double* yr = &out.values()[static_cast<std::size_t>(groups[r]) * cols];
        for (int c = 0; c < cols; ++c) yr[c] += xr[c];
    }
    for (int g = 0; g < num_groups; ++g) {
        double* yr = &out.values()[static_cast<std::size_t>(g) * cols];
        for (int c = 0; c < cols; ++c) yr[c] /= static_cast<double>(counts[g]);
    }
    check_finite(out.values(), "mean_rows");
    if (out.requires_grad())
        record([ad = a.d, od = out.d, groups, counts, cols]() {
            if (!has_grad(od)) return;
            ad->ensure_grad();
            for (int r = 0; r < ad->rows; ++r) {
                const int g = groups[r];
                const double inv = 1.0 / static_cast<double>(counts[g]);
                const double* gy = &od->grad[static_cast<std::size_t>(g) * cols];
                double* gx = &ad->grad[static_cast<std::size_t>(r) * cols];
                for (int c = 0; c < cols; ++c) gx[c] += gy[c] * inv;
            }
        });
    return out;
}

Tensor Tape::dropout(const Tensor& a, double p, bool train, std::uint64_t seed) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must lie in [0,1)");
    if (!train || p == 0.0) return a;
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad(), "dropout");
    auto mask = std::make_shared<std::vector<double>>(a.values().size());
    Rng rng(seed);
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        (*mask)[i] = rng.next_double() < p ? 0.0 : keep_scale;
        out.values()[i] = a.values()[i] * (*mask)[i];
    }
    check_finite(out.values(), "dropout");
    if (out.requires_grad())
        record([ad = a.d, od = out.d, mask]() {
            if (!has_grad(od)) return;
            ad->ensure_grad();
            for (std::size_t i = 0; i < od->grad.size(); ++i)
                ad->grad[i] += od->grad[i] * (*mask)[i];
        });
    return out;
}

Tensor Tape::log(const Tensor& a, double floor) {
    if (floor <= 0.0) throw ConfigError("log: floor must be > 0");
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad(), "log");
    for (std::size_t i = 0; i < a.values().size(); ++i)
        out.values()[i] = std::log(std::max(a.values()[i], floor));
    check_finite(out.values(), "log");
    if (out.requires_grad())
        record([ad = a.d, od = out.d, floor]() {
            if (!has_grad(od)) return;
            ad->ensure_grad();
            for (std::size_t i = 0; i < od->grad.size(); ++i)
                if (ad->values[i] > floor) ad->grad[i] += od->grad[i] / ad->values[i];
        });
    return out;
}

Tensor Tape::row_select(const Tensor& a, const std::vector<std::uint8_t>& mask) {
    if (static_cast<int>(mask.size()) != a.rows())
        throw ShapeError("row_select: mask length != rows");
    std::vector<int> rows;
    for (int r = 0; r < a.rows(); ++r)
        if (mask[r]) rows.push_back(r);
    if (rows.empty()) throw ValidationError("row_select: mask selects no rows");
    return row_gather(a, rows);
}

Tensor Tape::row_gather(const Tensor& a, const std::vector<int>& rows) {
    const int cols = a.cols();
    Tensor out = make_output(static_cast<int>(rows.size()), cols, a.requires_grad(), "row_gather");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        if (r < 0 || r >= a.rows()) throw BoundsError("row_gather: row index out of range");
        std::copy_n(&a.values()[static_cast<std::size_t>(r) * cols], cols,
                    &out.values()[i * cols]);
    }
    if (out.requires_grad())
        record([ad = a.d, od = out.d, rows, cols]() {
            if (!has_grad(od)) return;
            ad->ensure_grad();
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const double* g = &od->grad[i * cols];
                double* gx = &ad->grad[static_cast<std::size_t>(rows[i]) * cols];
                for (int c = 0; c < cols; ++c) gx[c] += g[c];
            }
        });
    return out;
}

Tensor Tape::spmm(const SparseMatrix& s, const Tensor& x) {
    if (s.cols != x.rows())
        throw ShapeError("spmm: sparse cols " + std::to_string(s.cols) + " vs dense rows " +
                         std::to_string(x.rows()));
    Tensor out = make_output(s.rows, x.cols(), x.requires_grad(), "spmm");
    s.multiply(x.values().data(), x.cols(), out.values().data());
    check_finite(out.values(), "spmm");
    if (out.requires_grad())
        record([s, xd = x.d, od = out.d]() {
            if (!has_grad(od)) return;
            xd->ensure_grad();
            s.multiply_transpose_add(od->grad.data(), od->cols, xd->grad.data());
        });
    return out;
}

Tensor Tape::sum_all(const Tensor& a) {
    Tensor out = make_output(1, 1, a.requires_grad(), "sum_all");
    double s = 0.0;
    for (double v : a.values()) s += v;
    out.values()[0] = s;
    check_finite(out.values(), "sum_all");
    if (out.requires_grad())
        record([ad = a.d, od = out.d]() {
            if (!has_grad(od)) return;
            ad->ensure_grad();
            const double g = od->grad[0];
            for (std::size_t i = 0; i < ad->grad.size(); ++i) ad->grad[i] += g;
        });
    return out;
}

Tensor Tape::detach(const Tensor& a) {
    return Tensor::from_values(a.rows(), a.cols(), a.values(), false);
}

void Tape::backward(const Tensor& scalar_loss) {
    if (scalar_loss.rows() != 1 || scalar_loss.cols() != 1)
        throw ContractError("backward: loss must be 1x1, got " +
                            std::to_string(scalar_loss.rows()) + "x" +
                            std::to_string(scalar_loss.cols()));
    if (consumed_) throw ContractError("backward: tape already consumed");
    if (nodes_.empty()) throw ContractError("backward: tape is empty");
    consumed_ = true;
    scalar_loss.d->ensure_grad();
    scalar_loss.d->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void zero_grad(const std::vector<Tensor>& params) {
    for (const Tensor& p : params) {
        p.d->ensure_grad();
        std::fill(p.d->grad.begin(), p.d->grad.end(), 0.0);
    }
}

GradCheckResult grad_check(const std::function<Tensor(Tape&)>& build_loss,
                           const std::vector<Tensor>& params, double h) {
    if (h <= 0.0) throw ConfigError("grad_check: step must be > 0");
    zero_grad(params);
    std::vector<std::vector<double>> autograd;
    {
        Tape tape;
        Tensor loss = build_loss(tape);
        tape.backward(loss);
    }
    autograd.reserve(params.size());
    for (const Tensor& p : params) {
        p.d->ensure_grad();
        autograd.push_back(p.d->grad);
    }

    const auto eval = [&]() {
        Tape tape;
        return build_loss(tape).item();
    };

    GradCheckResult res;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        std::vector<double>& v = params[pi].d->values;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double saved = v[i];
            v[i] = saved + h;
            const double fp = eval();
            v[i] = saved - h;
            const double fm = eval();
            v[i] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = autograd[pi][i];
            const double rel =
                std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-8});
            res.max_rel_error = std::max(res.max_rel_error, rel);
            ++res.coords_checked;
        }
    }
    zero_grad(params);
    return res;
}

}  // namespace cob
