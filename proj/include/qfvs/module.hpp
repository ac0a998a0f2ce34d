#pragma once

#include <deque>
#include <string>
#include <vector>

#include "qfvs/checkpoint.hpp"
#include "qfvs/rng.hpp"
#include "qfvs/tensor.hpp"

namespace qfvs {

struct NamedParameter {
    std::string name;
    Tensor tensor;
};

// Owns the named trainable tensors and non-trainable buffers of a model.
class ParameterStore {
   public:
    Tensor add(std::string name, Tensor t);
    BatchNormState& add_batchnorm(const std::string& name, std::size_t channels);

    const std::vector<NamedParameter>& parameters() const { return params_; }
    void zero_grad();

    // Parameters first, then running statistics as <name>.running_mean/var.
    std::vector<NamedArray> export_arrays() const;
    // Every array must be present with a matching shape.
    void import_arrays(const std::vector<NamedArray>& arrays);

   private:
    std::vector<NamedParameter> params_;
    std::vector<std::string> bn_names_;
    std::deque<BatchNormState> bn_states_;  // stable addresses
};

// U(-sqrt(6/fan_in), +sqrt(6/fan_in)), the He/Kaiming bound for ReLU stacks.
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace qfvs
