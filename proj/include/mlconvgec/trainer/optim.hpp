#pragma once

#include <cmath>
#include <string>

#include "mlconvgec/model/params.hpp"

namespace mlconvgec {

/// What counts as progress for annealing and patience: a better dev F0.5
/// only, or either a better dev F0.5 or a lower dev NLL than seen so far.
enum class AnnealTrigger { f05, f05_or_nll };

struct TrainConfig {
    double lr = 0.25;
    double anneal_factor = 0.1;
    double momentum = 0.99;
    std::size_t batch_size = 32;
    double clip = 0.1;  // global L2 norm; 0 disables
    std::size_t patience = 3;
    std::size_t max_epochs = 100;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    AnnealTrigger anneal_trigger = AnnealTrigger::f05;

    void validate() const {
        if (!(lr > 0.0)) fail(ErrorCategory::config, "learning rate must be positive");
        if (!(anneal_factor > 0.0 && anneal_factor < 1.0)) fail(ErrorCategory::config, "anneal_factor must be in (0, 1)");
        if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorCategory::config, "momentum must be in [0, 1)");
        if (batch_size < 1) fail(ErrorCategory::config, "batch size must be at least 1");
        if (!(clip >= 0.0)) fail(ErrorCategory::config, "clip threshold must be non-negative");
        if (max_epochs < 1) fail(ErrorCategory::config, "max_epochs must be at least 1");
        if (threads < 1) fail(ErrorCategory::config, "threads must be at least 1");
    }
};

/// Velocities mirror the parameter arrays.
struct OptimizerState {
    std::vector<nc::Array> velocity;
    double lr = 0.0;

    OptimizerState() = default;
    OptimizerState(const std::vector<nc::Array>& params, double lr0) : lr(lr0) {
        velocity.reserve(params.size());
        for (const auto& p : params) velocity.push_back(nc::Array::zeros_like(p));
    }

    /// Changes the rate and rescales the velocities by new/old, so velocity
    /// built at the old rate does not keep moving at that scale.
    void set_lr(double new_lr) {
        const double r = new_lr / lr;
        for (auto& v : velocity)
            for (auto& x : v.data()) x *= r;
        lr = new_lr;
    }
};

/// v ← μv − lr·g; θ ← θ + μv − lr·g, with the new v.
inline void nag_step(std::vector<nc::Array>& params, const std::vector<nc::Array>& grads, OptimizerState& st,
                     double momentum, const std::vector<std::string>* names = nullptr) {
    if (grads.size() != params.size() || st.velocity.size() != params.size()) {
        fail(ErrorCategory::dimension, "optimizer: parameter, gradient and velocity counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& g = grads[i];
        if (g.shape() != params[i].shape()) {
            fail(ErrorCategory::dimension, "optimizer: gradient shape " + nc::shape_str(g.shape()) +
                                               " does not match parameter " + nc::shape_str(params[i].shape()));
        }
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (!std::isfinite(g[k])) {
                const std::string name = names ? (*names)[i] : "#" + std::to_string(i);
                fail(ErrorCategory::training, "non-finite gradient in parameter " + name + " at index " + std::to_string(k));
            }
        }
    }
    const double lr = st.lr, mu = momentum;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& th = params[i];
        auto& v = st.velocity[i];
        const auto& g = grads[i];
        for (std::size_t k = 0; k < th.size(); ++k) {
            v[k] = mu * v[k] - lr * g[k];
            th[k] += mu * v[k] - lr * g[k];
        }
    }
}

inline double global_norm(const std::vector<nc::Array>& grads) {
    double s = 0.0;
    for (const auto& g : grads)
        for (double x : g.data()) s += x * x;
    return std::sqrt(s);
}

/// Scales all gradients by threshold/norm when the global L2 norm exceeds
/// the threshold. Returns the norm before clipping.
inline double clip_gradients(std::vector<nc::Array>& grads, double threshold) {
    if (!(threshold > 0.0)) fail(ErrorCategory::config, "clip threshold must be positive");
    const double norm = global_norm(grads);
    if (norm > threshold) {
        const double s = threshold / norm;
        for (auto& g : grads)
            for (auto& x : g.data()) x *= s;
    }
    return norm;
}

}  // namespace mlconvgec
