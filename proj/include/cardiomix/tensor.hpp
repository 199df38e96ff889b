#pragma once

#include <string>
#include <vector>

namespace cardiomix {

/// Dense row-major tensor of doubles. Training runs in 64-bit precision;
/// checkpoints quantize to 32-bit on disk.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape_) : shape(std::move(shape_)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
    }

    static long long numel_of(const std::vector<int>& shape) {
        long long n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    long long numel() const { return static_cast<long long>(data.size()); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

}  // namespace cardiomix
