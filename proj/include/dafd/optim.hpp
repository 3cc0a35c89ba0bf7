#pragma once

#include <cstdint>
#include <vector>

#include "dafd/tensor.hpp"

namespace dafd {

struct AdamConfig {
    double lr = 0.0002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are shape-congruent with their
// parameter; the step counter advances by one per step() call.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});

    // Applies one update in place. Every parameter must carry a gradient
    // buffer (a zeroed buffer counts; a never-touched one does not).
    void step();

    // Drops all parameter gradient buffers.
    void zero_grad();

    int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

}  // namespace dafd
