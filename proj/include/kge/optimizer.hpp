#pragma once

#include <atomic>
#include <cstdint>
#include <string_view>
#include <vector>

#include "kge/model.hpp"

namespace kge {

enum class OptimizerKind : std::uint32_t { SGD = 0, Adagrad = 1, Adadelta = 2, Adam = 3 };

const char* to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(std::string_view s);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::SGD;
    double learning_rate = 0.01;
    double epsilon = 1e-8;  // Adagrad, Adam
    double rho = 0.95;      // Adadelta decay
    double adadelta_epsilon = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
};

// Sparse updates: only rows present in the gradient are touched. Adam is the
// lazy variant (moments of untouched rows are not decayed) with a global step
// counter for bias correction.
class Optimizer {
public:
    Optimizer(const OptimizerConfig& config, const ModelParams& params);

    // Parallel workers may call this concurrently on disjoint or overlapping
    // rows; overlapping writes race by design.
    void apply(ModelParams& params, const Gradient& grad);

    const OptimizerConfig& config() const { return config_; }
    std::size_t slots_per_tensor() const;
    std::uint64_t step() const { return step_.load(); }

    // state()[tensor][slot] holds one float per parameter of a trainable
    // tensor; non-trainable tensors have no slots.
    std::vector<std::vector<std::vector<float>>>& state() { return state_; }
    const std::vector<std::vector<std::vector<float>>>& state() const { return state_; }
    void set_step(std::uint64_t s) { step_.store(s); }

private:
    OptimizerConfig config_;
    // Atomic so parallel workers can share one optimizer.
    std::atomic<std::uint64_t> step_{0};
    std::vector<std::vector<std::vector<float>>> state_;
};

}  // namespace kge
