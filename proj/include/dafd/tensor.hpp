#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace dafd {

using Shape = std::vector<size_t>;

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until the first accumulation
    bool requires_grad = false;
    bool leaf = true;  // op outputs are non-leaf; backward() resets their grads
    std::string name;
};

}  // namespace detail

// Shared-ownership handle to an n-d array of doubles, row-major. Values are
// written once by the op that creates the tensor; only the grad buffer
// mutates afterwards. Copying a Tensor copies the handle, not the data.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor full(Shape shape, double v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    size_t rank() const { return node_->shape.size(); }
    size_t dim(size_t i) const { return node_->shape[i]; }
    size_t size() const { return node_->values.size(); }

    double* data() { return node_->values.data(); }
    const double* data() const { return node_->values.data(); }
    std::vector<double>& values() { return node_->values; }
    const std::vector<double>& values() const { return node_->values; }

    // Value of a rank-0/size-1 tensor.
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        node_->requires_grad = v;
        return *this;
    }

    bool is_leaf() const { return node_->leaf; }
    Tensor& mark_output() {
        node_->leaf = false;
        return *this;
    }

    const std::string& name() const { return node_->name; }
    Tensor& set_name(std::string n) {
        node_->name = std::move(n);
        return *this;
    }

    // Gradient buffer, lazily allocated. has_grad() distinguishes "no
    // gradient ever flowed here" from "gradient is zero", which is what
    // lets dead branches (e.g. a zero-weighted loss term) leave the rest
    // of the graph bit-for-bit untouched.
    bool has_grad() const { return !node_->grad.empty(); }
    double* grad_data();                      // allocates zeros if absent
    const std::vector<double>& grad() const;  // throws if absent
    void drop_grad() { node_->grad.clear(); }
    void zero_grad();  // keeps the buffer, zeroes it (no-op if absent)

    bool same_node(const Tensor& other) const { return node_ == other.node_; }
    detail::TensorNode* node() const { return node_.get(); }

private:
    std::shared_ptr<detail::TensorNode> node_;
};

// Append-only record of differentiable operations. Construction order is
// topological by definition: an op's inputs always exist before its output.
// backward() replays the records once, in reverse.
class Tape {
public:
    void record(Tensor out, std::function<void()> backward_fn);

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
    // requires_grad leaf reachable from `loss`. Non-leaf grads are reset
    // at the start of each call, so calling backward repeatedly (without
    // zeroing leaf grads) accumulates one full gradient per call.
    void backward(Tensor loss);

    void clear();
    size_t size() const { return records_.size(); }

private:
    struct Record {
        Tensor out;
        std::function<void()> fn;
    };
    std::vector<Record> records_;
};

// Finite-value guards. When the DAFD_CHECK_FINITE environment toggle is
// set, every op output is checked as it is produced.
bool all_finite(const double* p, size_t n);
bool all_finite(const Tensor& t);
bool finite_checks_enabled();
void check_finite(const Tensor& t, const char* what);

}  // namespace dafd
