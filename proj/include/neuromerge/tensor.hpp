#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace neuromerge {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

// Dense row-major float tensor of rank 1..4 (last index fastest).
//
// Layout conventions used throughout the library:
//   vector           (n)
//   FC weight        (in, out)         -- column j is output neuron j
//   feature map      (channel, row, col)
//   conv weight      (out, in, kernel_row, kernel_col)
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor vector(std::initializer_list<float> values);
    // Rows given in order; all rows must have equal length.
    static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    std::vector<float>& storage() noexcept { return data_; }
    const std::vector<float>& storage() const noexcept { return data_; }

    float& operator[](std::size_t flat) { return data_[flat]; }
    float operator[](std::size_t flat) const { return data_[flat]; }

    float& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    float at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    float& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    float at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    float& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    float at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    // Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    // Bitwise equality of shape and data (distinguishes +0 and -0, NaN payloads).
    bool bitwise_equal(const Tensor& other) const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<float> data_;
};

// [X x_n U]: contracts mode `mode` (1-based) of x with the columns of the
// J x I_n matrix u, giving a tensor whose mode `mode` has size J.
Tensor n_mode_product(const Tensor& x, const Tensor& u, std::size_t mode);

// Mode-n matricization (1-based): rows index mode n, columns enumerate the
// remaining modes in row-major order. Inverse of fold().
Tensor unfold(const Tensor& x, std::size_t mode);
Tensor fold(const Tensor& matrix, std::size_t mode, const Shape& shape);

// Plain matrix product, 64-bit accumulation over the inner index in ascending order.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& matrix);

// Channel-stacked 3D convolution of every filter of `weight` (N x C x K x K)
// with `input` (C x H x W). Zero padding, floor output sizing.
Tensor tensor_conv(const Tensor& weight, const Tensor& input, std::size_t stride = 1,
                   std::size_t padding = 0);

Tensor relu(const Tensor& x);

double l2_norm(std::span<const float> a);
double l1_norm(std::span<const float> a);
double dot(std::span<const float> a, std::span<const float> b);
// Throws DegenerateError when either vector has zero norm.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

// max|actual - expected| / max|expected| (infinity-norm relative error).
// Zero when both are all-zero; shapes must match.
double relative_error(const Tensor& actual, const Tensor& expected);

// Element equality with +0 == -0.
bool values_equal(const Tensor& a, const Tensor& b);

} // namespace neuromerge
