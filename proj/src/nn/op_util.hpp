#pragma once

#include <memory>
#include <string>

#include "qfvs/kernels/kernels.hpp"
#include "qfvs/tensor.hpp"

namespace qfvs::detail {

using NodePtr = std::shared_ptr<Node>;

inline bool wants(const NodePtr& n) { return n && n->requires_grad; }

inline std::size_t norm_axis(std::ptrdiff_t axis, std::size_t rank) {
    const auto r = static_cast<std::ptrdiff_t>(rank);
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    return static_cast<std::size_t>(axis);
}

inline std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
    std::size_t n = 1;
    for (std::size_t i = begin; i < end; ++i) n *= s[i];
    return n;
}

inline const kernels::KernelTable& kern() { return kernels::active(); }

}  // namespace qfvs::detail
