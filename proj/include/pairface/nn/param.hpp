#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "pairface/tensor.hpp"

namespace pairface {

// One learnable tensor plus its gradient accumulator. Layers hold these by
// shared_ptr so two networks can literally share storage (weight sharing).
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param(std::string n, std::vector<int> shape)
        : name(std::move(n)), value(shape), grad(std::move(shape)) {}
};

using ParamPtr = std::shared_ptr<Param>;

inline void dedup_params(std::vector<ParamPtr>& params) {
    std::unordered_set<const Param*> seen;
    std::vector<ParamPtr> unique;
    unique.reserve(params.size());
    for (auto& p : params)
        if (seen.insert(p.get()).second) unique.push_back(p);
    params.swap(unique);
}

inline void zero_grads(const std::vector<ParamPtr>& params) {
    for (const auto& p : params) p->grad.fill(0.0f);
}

inline std::int64_t count_scalars(const std::vector<ParamPtr>& params) {
    std::int64_t n = 0;
    for (const auto& p : params) n += static_cast<std::int64_t>(p->value.size());
    return n;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

class AdamOptimizer {
public:
    AdamOptimizer(std::vector<ParamPtr> params, double lr, double beta1 = 0.5,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        dedup_params(params_);
        for (const auto& p : params_)
            slots_.push_back({Tensor::zeros_like(p->value), Tensor::zeros_like(p->value)});
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t j = 0; j < params_.size(); ++j) {
            Param& p = *params_[j];
            Slot& s = slots_[j];
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double g = p.grad[i];
                const double m = beta1_ * s.m[i] + (1.0 - beta1_) * g;
                const double v = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
                s.m[i] = static_cast<float>(m);
                s.v[i] = static_cast<float>(v);
                p.value[i] -= static_cast<float>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
            }
        }
    }

    void zero_grad() { zero_grads(params_); }

    const std::vector<ParamPtr>& params() const { return params_; }
    long step_count() const { return t_; }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

    // Moment tensors exposed by param name for checkpoint/resume.
    std::vector<std::pair<std::string, Tensor*>> state_tensors() {
        std::vector<std::pair<std::string, Tensor*>> out;
        for (std::size_t j = 0; j < params_.size(); ++j) {
            out.emplace_back(params_[j]->name + ".m", &slots_[j].m);
            out.emplace_back(params_[j]->name + ".v", &slots_[j].v);
        }
        return out;
    }
    void set_step_count(long t) { t_ = t; }

private:
    struct Slot {
        Tensor m, v;
    };

    std::vector<ParamPtr> params_;
    std::vector<Slot> slots_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace pairface
