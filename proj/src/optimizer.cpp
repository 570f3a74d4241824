#include "kge/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kge {

const char* to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::SGD: return "sgd";
        case OptimizerKind::Adagrad: return "adagrad";
        case OptimizerKind::Adadelta: return "adadelta";
        case OptimizerKind::Adam: return "adam";
    }
    return "?";
}

OptimizerKind optimizer_kind_from_string(std::string_view s) {
    std::string v(s);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "sgd") return OptimizerKind::SGD;
    if (v == "adagrad") return OptimizerKind::Adagrad;
    if (v == "adadelta") return OptimizerKind::Adadelta;
    if (v == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

std::size_t Optimizer::slots_per_tensor() const {
    switch (config_.kind) {
        case OptimizerKind::SGD: return 0;
        case OptimizerKind::Adagrad: return 1;
        case OptimizerKind::Adadelta:
        case OptimizerKind::Adam: return 2;
    }
    return 0;
}

Optimizer::Optimizer(const OptimizerConfig& config, const ModelParams& params) : config_(config) {
    if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate))
        throw ConfigError("learning rate must be finite and >= 0");
    if (config.kind == OptimizerKind::Adadelta && !(config.rho > 0.0 && config.rho < 1.0))
        throw ConfigError("adadelta rho must lie in (0, 1)");
    if (config.kind == OptimizerKind::Adam &&
        !(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0))
        throw ConfigError("adam betas must lie in [0, 1)");
    const std::size_t slots = slots_per_tensor();
    state_.resize(params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        const auto& t = params.tensors[i];
        if (!t.trainable) continue;
        state_[i].assign(slots, std::vector<float>(t.data.size(), 0.0f));
    }
}

void Optimizer::apply(ModelParams& params, const Gradient& grad) {
    const auto step = static_cast<double>(++step_);
    const double lr = config_.learning_rate;
    const double bc1 = 1.0 - std::pow(config_.beta1, step);
    const double bc2 = 1.0 - std::pow(config_.beta2, step);
    for (const auto& entry : grad.entries()) {
        const std::size_t slot = static_cast<std::size_t>(params.slot[static_cast<std::size_t>(entry.block)]);
        auto& tensor = params.tensors[slot];
        if (!tensor.trainable) continue;
        auto g = grad.values(entry);
        const std::size_t base = std::size_t{entry.row} * tensor.cols;
        float* p = tensor.data.data() + base;
        switch (config_.kind) {
            case OptimizerKind::SGD:
                for (std::size_t j = 0; j < g.size(); ++j) p[j] = static_cast<float>(double(p[j]) - lr * g[j]);
                break;
            case OptimizerKind::Adagrad: {
                float* acc = state_[slot][0].data() + base;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    const double a = double(acc[j]) + g[j] * g[j];
                    acc[j] = static_cast<float>(a);
                    p[j] = static_cast<float>(double(p[j]) - lr * g[j] / (std::sqrt(a) + config_.epsilon));
                }
                break;
            }
            case OptimizerKind::Adadelta: {
                float* eg = state_[slot][0].data() + base;
                float* ex = state_[slot][1].data() + base;
                const double rho = config_.rho, eps = config_.adadelta_epsilon;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    const double g2 = rho * double(eg[j]) + (1.0 - rho) * g[j] * g[j];
                    const double dx = -std::sqrt(double(ex[j]) + eps) / std::sqrt(g2 + eps) * g[j];
                    eg[j] = static_cast<float>(g2);
                    ex[j] = static_cast<float>(rho * double(ex[j]) + (1.0 - rho) * dx * dx);
                    p[j] = static_cast<float>(double(p[j]) + lr * dx);
                }
                break;
            }
            case OptimizerKind::Adam: {
                float* m = state_[slot][0].data() + base;
                float* v = state_[slot][1].data() + base;
                const double b1 = config_.beta1, b2 = config_.beta2;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    const double mj = b1 * double(m[j]) + (1.0 - b1) * g[j];
                    const double vj = b2 * double(v[j]) + (1.0 - b2) * g[j] * g[j];
                    m[j] = static_cast<float>(mj);
                    v[j] = static_cast<float>(vj);
                    p[j] = static_cast<float>(double(p[j]) - lr * (mj / bc1) / (std::sqrt(vj / bc2) + config_.epsilon));
                }
                break;
            }
        }
    }
}

}  // namespace kge
