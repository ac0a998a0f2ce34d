#include "qfvs/module.hpp"

#include <cmath>
#include <map>

namespace qfvs {

Tensor ParameterStore::add(std::string name, Tensor t) {
    params_.push_back({std::move(name), t});
    return t;
}

BatchNormState& ParameterStore::add_batchnorm(const std::string& name, std::size_t channels) {
    bn_names_.push_back(name);
    return bn_states_.emplace_back(channels);
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<NamedArray> ParameterStore::export_arrays() const {
    std::vector<NamedArray> out;
    for (const auto& p : params_)
        out.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
    for (std::size_t i = 0; i < bn_names_.size(); ++i) {
        const auto& st = bn_states_[i];
        out.push_back({bn_names_[i] + ".running_mean", {st.running_mean.size()}, st.running_mean});
        out.push_back({bn_names_[i] + ".running_var", {st.running_var.size()}, st.running_var});
    }
    return out;
}

void ParameterStore::import_arrays(const std::vector<NamedArray>& arrays) {
    std::map<std::string, const NamedArray*> by_name;
    for (const auto& a : arrays) by_name[a.name] = &a;
    auto fetch = [&](const std::string& name, const Shape& shape) -> const NamedArray& {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("checkpoint lacks array " + name);
        if (it->second->shape != shape)
            throw FormatError("checkpoint array " + name + " has shape " + to_string(it->second->shape) +
                              ", model expects " + to_string(shape));
        return *it->second;
    };
    for (auto& p : params_) {
        const auto& a = fetch(p.name, p.tensor.shape());
        std::copy(a.values.begin(), a.values.end(), p.tensor.mutable_data().begin());
    }
    for (std::size_t i = 0; i < bn_names_.size(); ++i) {
        auto& st = bn_states_[i];
        st.running_mean = fetch(bn_names_[i] + ".running_mean", {st.running_mean.size()}).values;
        st.running_var = fetch(bn_names_[i] + ".running_var", {st.running_var.size()}).values;
    }
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    const real bound = std::sqrt(real{6} / static_cast<real>(fan_in));
    std::vector<real> values(numel(shape));
    for (auto& v : values) v = rng.uniform(-bound, bound);
    return Tensor::from_data(std::move(shape), std::move(values), true);
}

}  // namespace qfvs
