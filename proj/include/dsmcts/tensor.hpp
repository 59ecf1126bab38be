#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsmcts {

/** Dense row-major 64-bit float tensor. */
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<double> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        if (data.size() != numel(shape)) throw std::invalid_argument("tensor shape/data mismatch");
    }

    static size_t numel(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> shape) {
        size_t n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    size_t size() const { return data.size(); }

    double& at(std::initializer_list<int> idx) { return data[flat_index(idx)]; }
    double at(std::initializer_list<int> idx) const { return data[flat_index(idx)]; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    size_t flat_index(std::initializer_list<int> idx) const {
        if (idx.size() != shape.size()) throw std::out_of_range("tensor index rank mismatch");
        size_t flat = 0;
        size_t dim = 0;
        for (int i : idx) {
            if (i < 0 || i >= shape[dim]) throw std::out_of_range("tensor index out of range");
            flat = flat * static_cast<size_t>(shape[dim]) + static_cast<size_t>(i);
            ++dim;
        }
        return flat;
    }
};

}  // namespace dsmcts
