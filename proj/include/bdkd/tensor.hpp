#ifndef BDKD_TENSOR_HPP
#define BDKD_TENSOR_HPP

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "bdkd/common.hpp"

namespace bdkd {

/// Dense row-major float tensor with an optional same-shape gradient buffer.
/// The gradient is present iff `grad` is non-empty; allocating it before a
/// backward pass requests accumulation into it.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad; // empty = absent

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(count(shape)), 0.0f);
    }

    Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        require(count(shape) == static_cast<std::int64_t>(data.size()),
                "Tensor: shape/data size mismatch");
    }

    static std::int64_t count(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            require(d >= 0, "Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    bool has_grad() const { return !grad.empty(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
    void zero_grad() {
        if (has_grad()) std::fill(grad.begin(), grad.end(), 0.0f);
    }
    void drop_grad() { grad.clear(); }

    // 4-d [N,C,H,W] accessors
    float& at(int n, int c, int h, int w) {
        return data[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w)];
    }
    float at(int n, int c, int h, int w) const {
        return data[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w)];
    }
    // 3-d [C,H,W] accessors
    float& at(int c, int h, int w) {
        return data[static_cast<std::size_t>((static_cast<std::int64_t>(c) * dim(1) + h) * dim(2) + w)];
    }
    float at(int c, int h, int w) const {
        return data[static_cast<std::size_t>((static_cast<std::int64_t>(c) * dim(1) + h) * dim(2) + w)];
    }
    // 2-d [N,F] accessors
    float& at(int n, int f) { return data[static_cast<std::size_t>(static_cast<std::int64_t>(n) * dim(1) + f)]; }
    float at(int n, int f) const { return data[static_cast<std::size_t>(static_cast<std::int64_t>(n) * dim(1) + f)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

/// Stacks per-sample CHW images into one NCHW batch.
inline Tensor stack(const std::vector<Tensor>& images) {
    require(!images.empty(), "stack: empty image list");
    const auto& s0 = images.front().shape;
    Tensor out(std::vector<int>{static_cast<int>(images.size()), s0[0], s0[1], s0[2]});
    std::size_t per = images.front().data.size();
    for (std::size_t i = 0; i < images.size(); ++i) {
        require(images[i].shape == s0, "stack: inconsistent image shapes");
        std::copy(images[i].data.begin(), images[i].data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return out;
}

} // namespace bdkd

#endif
