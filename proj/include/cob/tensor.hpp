#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "cob/common.hpp"

namespace cob {

struct TensorData {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;
    std::vector<double> grad;  // empty until a backward pass touches it
    bool requires_grad = false;

    std::int64_t size() const { return static_cast<std::int64_t>(rows) * cols; }
    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};

// Shared handle onto a dense row-major matrix. Copies alias the same storage;
// parameters keep their identity across training steps while tapes come and go.
struct Tensor {
    std::shared_ptr<TensorData> d;

    Tensor() = default;
    static Tensor zeros(int rows, int cols, bool requires_grad = false);
    static Tensor from_values(int rows, int cols, std::vector<double> values,
                              bool requires_grad = false);

    bool defined() const { return static_cast<bool>(d); }
    int rows() const { return d->rows; }
    int cols() const { return d->cols; }
    bool requires_grad() const { return d->requires_grad; }
    std::vector<double>& values() { return d->values; }
    const std::vector<double>& values() const { return d->values; }
    std::vector<double>& grad() { return d->grad; }
    const std::vector<double>& grad() const { return d->grad; }
    double at(int r, int c) const { return d->values[static_cast<std::size_t>(r) * d->cols + c]; }
    double& at(int r, int c) { return d->values[static_cast<std::size_t>(r) * d->cols + c]; }
    double item() const;
};

// Symmetric-normalized adjacency and friends live here: CSR with double
// weights, used forward as y = S x and backward as the transpose product.
struct SparseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::int64_t> offsets;
    std::vector<int> col_index;
    std::vector<double> weights;

    void multiply(const double* x, int xcols, double* y) const;
    void multiply_transpose_add(const double* dy, int xcols, double* dx) const;
};

// Records one forward pass; backward replays it once in reverse and is then
// consumed. Every op validates shapes and rejects non-finite outputs.
class Tape {
  public:
    Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
    Tensor add(const Tensor& a, const Tensor& b);  // same shape, or b a 1 x n bias row
    Tensor scale(const Tensor& a, double c);
    Tensor elementwise_mul(const Tensor& a, const Tensor& b);
    Tensor concat_cols(const Tensor& a, const Tensor& b);
    Tensor concat_rows(const std::vector<Tensor>& parts);
    Tensor row_softmax(const Tensor& a);
    Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      double eps = 1e-5);
    Tensor relu(const Tensor& a);
    Tensor mean_rows(const Tensor& a, const std::vector<int>& groups, int num_groups);
    Tensor dropout(const Tensor& a, double p, bool train, std::uint64_t seed);
    Tensor log(const Tensor& a, double floor = 1e-12);
    Tensor row_select(const Tensor& a, const std::vector<std::uint8_t>& mask);
    Tensor row_gather(const Tensor& a, const std::vector<int>& rows);
    Tensor spmm(const SparseMatrix& s, const Tensor& x);
    Tensor sum_all(const Tensor& a);
    Tensor detach(const Tensor& a);

    void backward(const Tensor& scalar_loss);
    bool consumed() const { return consumed_; }
    std::size_t num_recorded() const { return nodes_.size(); }

  private:
    Tensor make_output(int rows, int cols, bool requires_grad, const char* op);
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

    std::vector<std::function<void()>> nodes_;
    bool consumed_ = false;
};

void zero_grad(const std::vector<Tensor>& params);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::int64_t coords_checked = 0;
};

// Central finite differences against a fresh autodiff pass. build_loss must
// construct the scalar loss from the given tape using the same captured
// parameter tensors each call.
GradCheckResult grad_check(const std::function<Tensor(Tape&)>& build_loss,
                           const std::vector<Tensor>& params, double h = 1e-5);

}  // namespace cob
