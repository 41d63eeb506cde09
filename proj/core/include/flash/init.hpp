#pragma once

#include "flash/tensor.hpp"

// Parameter initialisers. Every result is a gradient-tracking leaf.
namespace flash::init {

inline Tensor zeros(Shape shape) { return Tensor::parameter(shape, std::vector<double>(shape_numel(shape), 0.0)); }

inline Tensor constant(Shape shape, double value) {
    return Tensor::parameter(shape, std::vector<double>(shape_numel(shape), value));
}

inline Tensor normal(Shape shape, double stddev, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return Tensor::parameter(std::move(shape), std::move(v));
}

}  // namespace flash::init
