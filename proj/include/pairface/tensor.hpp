#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <random>
#include <vector>

#include "pairface/common.hpp"

namespace pairface {

// Dense row-major float tensor. Images are stored channel-first as
// {channels, height, width} with values in [-1, 1]; embeddings and logit
// grids use rank 2. Small and value-semantic on purpose: a copy is a copy.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, float fill = 0.0f) : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (int d : shape_) {
            if (d <= 0) throw ShapeMismatch("non-positive dimension in tensor shape");
            n *= static_cast<std::size_t>(d);
        }
        data_.assign(n, fill);
    }

    Tensor(std::initializer_list<int> shape, float fill = 0.0f)
        : Tensor(std::vector<int>(shape), fill) {}

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // rank-3 access (c, y, x)
    float& at(int c, int y, int x) { return data_[idx3(c, y, x)]; }
    float at(int c, int y, int x) const { return data_[idx3(c, y, x)]; }

    // rank-2 access (r, c)
    float& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    float at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

    // Image conventions: {C, H, W}.
    int channels() const { return dim(0); }
    int height() const { return dim(rank() - 2); }
    int width() const { return dim(rank() - 1); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

    void add_(const Tensor& other, float scale = 1.0f) {
        require_same_shape(other, "add_");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
    }

    void scale_(float s) {
        for (float& v : data_) v *= s;
    }

    float max_abs() const {
        float m = 0.0f;
        for (float v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    template <class Engine>
    void fill_normal(Engine& eng, float mean, float stddev) {
        std::normal_distribution<float> dist(mean, stddev);
        for (float& v : data_) v = dist(eng);
    }

    template <class Engine>
    void fill_uniform(Engine& eng, float lo, float hi) {
        std::uniform_real_distribution<float> dist(lo, hi);
        for (float& v : data_) v = dist(eng);
    }

    void require_same_shape(const Tensor& other, const char* who) const {
        if (!same_shape(other)) throw ShapeMismatch(std::string(who) + ": operand shapes differ");
    }

private:
    std::size_t idx3(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x;
    }

    std::vector<int> shape_;
    std::vector<float> data_;
};

using ImageTensor = Tensor;  // {C, H, W}, values in [-1, 1]

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.height() != b.height() || a.width() != b.width())
        throw ShapeMismatch("concat_channels: spatial dims differ");
    Tensor out({a.channels() + b.channels(), a.height(), a.width()});
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    return out;
}

}  // namespace pairface
