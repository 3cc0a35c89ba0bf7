#include "dafd/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "dafd/errors.hpp"

namespace dafd {

namespace {

#ifdef __GLIBC__
// Training allocates and frees multi-megabyte activation buffers every
// step. With glibc's default thresholds those come from fresh mmap
// regions, so every step pays thousands of first-touch page faults.
// Raising the thresholds keeps the chunks on the heap for reuse.
const bool malloc_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
    return true;
}();
#endif

size_t shape_size(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

}  // namespace

Tensor::Tensor(Shape shape) : node_(std::make_shared<detail::TensorNode>()) {
    node_->shape = std::move(shape);
    node_->values.assign(shape_size(node_->shape), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : node_(std::make_shared<detail::TensorNode>()) {
    node_->shape = std::move(shape);
    if (values.size() != shape_size(node_->shape))
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape product " +
                         std::to_string(shape_size(node_->shape)));
    node_->values = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.values()) x = v;
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw UsageError("item() on tensor of size " + std::to_string(size()));
    return node_->values[0];
}

double* Tensor::grad_data() {
    if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
    return node_->grad.data();
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty())
        throw UsageError("gradient requested for tensor '" + node_->name +
                         "' but none has been accumulated");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->grad.size(), 0.0);
}

void Tape::record(Tensor out, std::function<void()> backward_fn) {
    records_.push_back(Record{std::move(out), std::move(backward_fn)});
}

void Tape::backward(Tensor loss) {
    if (!loss.defined() || loss.size() != 1)
        throw UsageError("backward() requires a scalar loss tensor");
    for (auto& r : records_) r.out.drop_grad();
    // The loss must itself be the output of a recorded op (or a leaf the
    // caller marked requires_grad); seed it after the reset above.
    loss.grad_data()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->fn();
}

void Tape::clear() { records_.clear(); }

bool all_finite(const double* p, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

bool all_finite(const Tensor& t) { return all_finite(t.data(), t.size()); }

bool finite_checks_enabled() {
    static const bool enabled = [] {
        const char* v = std::getenv("DAFD_CHECK_FINITE");
        return v != nullptr && v[0] != '\0' && v[0] != '0';
    }();
    return enabled;
}

void check_finite(const Tensor& t, const char* what) {
    if (!all_finite(t))
        throw TrainingError(std::string("non-finite values in ") + what);
}

}  // namespace dafd
