#include "neuromerge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

#include "neuromerge/error.hpp"
#include "neuromerge/parallel.hpp"

namespace neuromerge {

std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 4)
        throw ShapeError("tensor rank must be 1..4, got shape " + to_string(shape));
    for (std::size_t d : shape)
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
}

} // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != element_count(shape_))
        throw ShapeError("tensor of shape " + to_string(shape_) + " needs " +
                         std::to_string(element_count(shape_)) + " values, got " +
                         std::to_string(data_.size()));
}

Tensor Tensor::vector(std::initializer_list<float> values) {
    return Tensor({values.size()}, std::vector<float>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<float>> rows) {
    if (rows.size() == 0) throw ShapeError("matrix needs at least one row");
    const std::size_t cols = rows.begin()->size();
    std::vector<float> data;
    data.reserve(rows.size() * cols);
    for (const auto& row : rows) {
        if (row.size() != cols) throw ShapeError("matrix rows have unequal length");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::bitwise_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() ||
            std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

namespace {

// Splits `shape` around a 0-based axis into (outer, axis, inner) extents.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

} // namespace

Tensor n_mode_product(const Tensor& x, const Tensor& u, std::size_t mode) {
    if (u.rank() != 2) throw ShapeError("n-mode product needs a matrix, got " + to_string(u.shape()));
    if (mode == 0 || mode > x.rank())
        throw ShapeError("mode " + std::to_string(mode) + " out of range for tensor " +
                         to_string(x.shape()));
    const std::size_t axis = mode - 1;
    if (u.dim(1) != x.dim(axis))
        throw ShapeError("n-mode product: matrix " + to_string(u.shape()) +
                         " does not match mode " + std::to_string(mode) + " of tensor " +
                         to_string(x.shape()));

    const AxisSplit s = split_axis(x.shape(), axis);
    const std::size_t rows = u.dim(0);
    Shape out_shape = x.shape();
    out_shape[axis] = rows;
    Tensor out(out_shape);

    std::vector<double> acc(s.inner);
    const float* xd = x.data().data();
    const float* ud = u.data().data();
    float* od = out.data().data();
    for (std::size_t a = 0; a < s.outer; ++a) {
        for (std::size_t j = 0; j < rows; ++j) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t i = 0; i < s.extent; ++i) {
                const double weight = ud[j * s.extent + i];
                const float* fiber = xd + (a * s.extent + i) * s.inner;
                for (std::size_t b = 0; b < s.inner; ++b) acc[b] += double(fiber[b]) * weight;
            }
            float* dst = od + (a * rows + j) * s.inner;
            for (std::size_t b = 0; b < s.inner; ++b) dst[b] = static_cast<float>(acc[b]);
        }
    }
    return out;
}

Tensor unfold(const Tensor& x, std::size_t mode) {
    if (mode == 0 || mode > x.rank())
        throw ShapeError("mode " + std::to_string(mode) + " out of range for tensor " +
                         to_string(x.shape()));
    const AxisSplit s = split_axis(x.shape(), mode - 1);
    Tensor out({s.extent, s.outer * s.inner});
    for (std::size_t a = 0; a < s.outer; ++a)
        for (std::size_t i = 0; i < s.extent; ++i)
            for (std::size_t b = 0; b < s.inner; ++b)
                out.at(i, a * s.inner + b) = x[(a * s.extent + i) * s.inner + b];
    return out;
}

Tensor fold(const Tensor& matrix, std::size_t mode, const Shape& shape) {
    if (mode == 0 || mode > shape.size())
        throw ShapeError("mode " + std::to_string(mode) + " out of range for shape " +
                         to_string(shape));
    const AxisSplit s = split_axis(shape, mode - 1);
    if (matrix.rank() != 2 || matrix.dim(0) != s.extent || matrix.dim(1) != s.outer * s.inner)
        throw ShapeError("cannot fold " + to_string(matrix.shape()) + " into " + to_string(shape));
    Tensor out(shape);
    for (std::size_t a = 0; a < s.outer; ++a)
        for (std::size_t i = 0; i < s.extent; ++i)
            for (std::size_t b = 0; b < s.inner; ++b)
                out[(a * s.extent + i) * s.inner + b] = matrix.at(i, a * s.inner + b);
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " +
                         to_string(b.shape()));
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Tensor out({n, m});
    std::vector<double> acc(m);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double weight = a.at(i, p);
            const float* row = b.data().data() + p * m;
            for (std::size_t j = 0; j < m; ++j) acc[j] += double(row[j]) * weight;
        }
        for (std::size_t j = 0; j < m; ++j) out.at(i, j) = static_cast<float>(acc[j]);
    }
    return out;
}

Tensor transpose(const Tensor& matrix) {
    if (matrix.rank() != 2) throw ShapeError("transpose needs a matrix, got " + to_string(matrix.shape()));
    Tensor out({matrix.dim(1), matrix.dim(0)});
    for (std::size_t i = 0; i < matrix.dim(0); ++i)
        for (std::size_t j = 0; j < matrix.dim(1); ++j) out.at(j, i) = matrix.at(i, j);
    return out;
}

Tensor tensor_conv(const Tensor& weight, const Tensor& input, std::size_t stride,
                   std::size_t padding) {
    if (weight.rank() != 4 || input.rank() != 3)
        throw ShapeError("tensor_conv needs a 4-way weight and 3-way input, got " +
                         to_string(weight.shape()) + " and " + to_string(input.shape()));
    if (stride == 0) throw ArgumentError("convolution stride must be positive");
    const std::size_t filters = weight.dim(0), channels = weight.dim(1);
    const std::size_t kh = weight.dim(2), kw = weight.dim(3);
    if (input.dim(0) != channels)
        throw ShapeError("tensor_conv: weight " + to_string(weight.shape()) + " expects " +
                         std::to_string(channels) + " channels, input is " +
                         to_string(input.shape()));
    const std::size_t height = input.dim(1), width = input.dim(2);
    if (height + 2 * padding < kh || width + 2 * padding < kw)
        throw ShapeError("tensor_conv: kernel " + to_string(weight.shape()) +
                         " larger than padded input " + to_string(input.shape()));
    const std::size_t out_h = (height + 2 * padding - kh) / stride + 1;
    const std::size_t out_w = (width + 2 * padding - kw) / stride + 1;

    Tensor out({filters, out_h, out_w});
    const float* xd = input.data().data();
    const float* wd = weight.data().data();
    float* od = out.data().data();

    parallel_for(0, filters, [&](std::size_t f) {
        std::vector<double> acc(out_h * out_w, 0.0);
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t u = 0; u < kh; ++u) {
                for (std::size_t v = 0; v < kw; ++v) {
                    const double w = wd[((f * channels + c) * kh + u) * kw + v];
                    for (std::size_t r = 0; r < out_h; ++r) {
                        const std::ptrdiff_t row =
                            std::ptrdiff_t(r * stride + u) - std::ptrdiff_t(padding);
                        if (row < 0 || row >= std::ptrdiff_t(height)) continue;
                        const float* src = xd + (c * height + std::size_t(row)) * width;
                        double* dst = acc.data() + r * out_w;
                        for (std::size_t q = 0; q < out_w; ++q) {
                            const std::ptrdiff_t col =
                                std::ptrdiff_t(q * stride + v) - std::ptrdiff_t(padding);
                            if (col < 0 || col >= std::ptrdiff_t(width)) continue;
                            dst[q] += double(src[col]) * w;
                        }
                    }
                }
            }
        }
        float* dst = od + f * out_h * out_w;
        for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i]);
    });
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
    return out;
}

double l2_norm(std::span<const float> a) {
    double sum = 0.0;
    for (float v : a) sum += double(v) * double(v);
    return std::sqrt(sum);
}

double l1_norm(std::span<const float> a) {
    double sum = 0.0;
    for (float v : a) sum += std::fabs(double(v));
    return sum;
}

double dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size())
        throw ShapeError("dot: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += double(a[i]) * double(b[i]);
    return sum;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw DegenerateError("cosine similarity of a zero-norm vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double relative_error(const Tensor& actual, const Tensor& expected) {
    if (actual.shape() != expected.shape())
        throw ShapeError("relative_error: shape " + to_string(actual.shape()) + " vs " +
                         to_string(expected.shape()));
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        diff = std::max(diff, std::fabs(double(actual[i]) - double(expected[i])));
        scale = std::max(scale, std::fabs(double(expected[i])));
    }
    if (diff == 0.0) return 0.0;
    if (scale == 0.0) return diff;
    return diff / scale;
}

bool values_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i] == b[i])) return false;
    return true;
}

} // namespace neuromerge
