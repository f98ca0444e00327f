#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "baccae/rng.hpp"
#include "baccae/tensor.hpp"

namespace baccae::nn {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor first_moment;
    Tensor second_moment;

    bool operator==(const Parameter&) const = default;
};

// Named parameters in insertion order plus Adam state.
class ParamStore {
public:
    Tensor& add(std::string name, Tensor init);

    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::vector<Parameter>& params() noexcept { return params_; }
    const std::vector<Parameter>& params() const noexcept { return params_; }
    std::size_t size() const noexcept { return params_.size(); }
    std::size_t index_of(const std::string& name) const;

    std::int64_t step() const noexcept { return step_; }
    void set_step(std::int64_t step) { step_ = step; }

    // Zeroed gradient buffers aligned with params().
    std::vector<Tensor> zero_grads() const;

    bool operator==(const ParamStore&) const = default;

private:
    std::vector<Parameter> params_;
    std::int64_t step_ = 0;
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One bias-corrected Adam update; grads are aligned with store.params().
void adam_step(ParamStore& store, std::span<const Tensor> grads, const AdamConfig& cfg);

// Glorot/Xavier uniform in ±sqrt(6/(fan_in+fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Text container: "CCAE1" magic, parameter count and Adam step, one
// "name rank dims..." line per parameter, then all values row-major.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store);
ParamStore load_checkpoint(const std::filesystem::path& path);

struct GradProbe {
    std::string name;
    Tensor* value = nullptr;
    const Tensor* analytic = nullptr;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

// Compares analytic gradients with central differences of `objective`,
// perturbing each probed entry by ±eps in place and restoring it. Error per
// entry is |a - d| / max(|a|, |d|, 1e-12).
GradCheckResult gradient_check(const std::function<double()>& objective, std::span<const GradProbe> probes,
                               double eps = 1e-5);

}  // namespace baccae::nn
