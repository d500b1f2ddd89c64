#pragma once

// Deliberately naive reference implementations, written straight from the
// elementwise definitions. They share no code with the library beyond the
// Tensor container and are only used to check it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "neuromerge/model.hpp"
#include "neuromerge/tensor.hpp"

namespace oracle {

using neuromerge::Shape;
using neuromerge::Tensor;

inline std::size_t flat_index(const Shape& shape, const std::vector<std::size_t>& idx) {
    std::size_t f = 0;
    for (std::size_t a = 0; a < shape.size(); ++a) f = f * shape[a] + idx[a];
    return f;
}

inline bool next_index(const Shape& shape, std::vector<std::size_t>& idx) {
    for (std::size_t a = shape.size(); a-- > 0;) {
        if (++idx[a] < shape[a]) return true;
        idx[a] = 0;
    }
    return false;
}

// out[.., j, ..] = sum_i x[.., i, ..] * u[j, i] along 1-based mode n.
inline Tensor n_mode(const Tensor& x, const Tensor& u, std::size_t n) {
    Shape out_shape = x.shape();
    out_shape[n - 1] = u.dim(0);
    std::vector<double> acc(neuromerge::element_count(out_shape), 0.0);
    std::vector<std::size_t> idx(x.rank(), 0);
    do {
        const double v = x[flat_index(x.shape(), idx)];
        for (std::size_t j = 0; j < u.dim(0); ++j) {
            auto o = idx;
            o[n - 1] = j;
            acc[flat_index(out_shape, o)] += v * u.at(j, idx[n - 1]);
        }
    } while (next_index(x.shape(), idx));
    Tensor out(out_shape);
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
    return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor out({a.dim(0), b.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < b.dim(1); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.dim(1); ++k) s += double(a.at(i, k)) * b.at(k, j);
            out.at(i, j) = static_cast<float>(s);
        }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    Tensor out({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

// Six nested loops over (filter, row, col, channel, u, v) with zero padding.
inline Tensor conv(const Tensor& w, const Tensor& x, std::size_t stride = 1, std::size_t pad = 0) {
    const std::size_t n = w.dim(0), c = w.dim(1), k = w.dim(2);
    const std::size_t h = x.dim(1), wd = x.dim(2);
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
    Tensor out({n, oh, ow});
    for (std::size_t f = 0; f < n; ++f)
        for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t q = 0; q < ow; ++q) {
                double s = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t u = 0; u < k; ++u)
                        for (std::size_t v = 0; v < k; ++v) {
                            const long long row = (long long)(r * stride + u) - (long long)pad;
                            const long long col = (long long)(q * stride + v) - (long long)pad;
                            if (row < 0 || col < 0 || row >= (long long)h || col >= (long long)wd) continue;
                            s += double(w.at(f, ch, u, v)) * x.at(ch, std::size_t(row), std::size_t(col));
                        }
                out.at(f, r, q) = static_cast<float>(s);
            }
    return out;
}

inline Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.storage()) v = v > 0.0f ? v : 0.0f;
    return out;
}

inline double l1(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += std::fabs(x);
    return s;
}

inline double l2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Sum of Euclidean distances from neuron i to every other neuron.
inline std::vector<double> l2gm(const std::vector<std::vector<double>>& neurons) {
    std::vector<double> out(neurons.size(), 0.0);
    for (std::size_t i = 0; i < neurons.size(); ++i)
        for (std::size_t j = 0; j < neurons.size(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < neurons[i].size(); ++k) {
                const double d = neurons[i][k] - neurons[j][k];
                s += d * d;
            }
            out[i] += std::sqrt(s);
        }
    return out;
}

inline double bn(double x, double gamma, double beta, double mean, double sigma) {
    return gamma * (x - mean) / sigma + beta;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(double(a[i]) - b[i]));
    return m;
}

inline double max_abs(const Tensor& a) {
    double m = 0.0;
    for (float v : a.storage()) m = std::max(m, std::fabs(double(v)));
    return m;
}

inline double rel_error(const Tensor& actual, const Tensor& expected) {
    const double scale = max_abs(expected);
    const double diff = max_abs_diff(actual, expected);
    return scale > 0.0 ? diff / scale : diff;
}

// Straight-line inference for chain networks with residual blocks; used to
// cross-check the library's forward pass.
inline Tensor apply_layer(const neuromerge::Layer& layer, const Tensor& x) {
    using namespace neuromerge;
    if (const auto* fc = std::get_if<FullyConnected>(&layer.op)) {
        Tensor out({fc->outputs()});
        for (std::size_t j = 0; j < fc->outputs(); ++j) {
            double s = fc->bias ? double((*fc->bias)[j]) : 0.0;
            for (std::size_t i = 0; i < fc->inputs(); ++i) s += double(x[i]) * fc->weight.at(i, j);
            out[j] = static_cast<float>(s);
        }
        return out;
    }
    if (const auto* c = std::get_if<Conv2d>(&layer.op)) return oracle::conv(c->weight, x, c->stride, c->padding);
    if (const auto* b = std::get_if<BatchNorm>(&layer.op)) {
        Tensor out = x;
        const std::size_t per = x.size() / b->channels();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const std::size_t ch = i / per;
            out[i] = static_cast<float>(oracle::bn(x[i], b->gamma[ch], b->beta[ch], b->mean[ch], b->sigma[ch]));
        }
        return out;
    }
    if (layer.is<ReLU>()) return oracle::relu(x);
    auto pool = [&](std::size_t k, std::size_t st, bool is_max) {
        const std::size_t oh = (x.dim(1) - k) / st + 1, ow = (x.dim(2) - k) / st + 1;
        Tensor out({x.dim(0), oh, ow});
        for (std::size_t c = 0; c < x.dim(0); ++c)
            for (std::size_t r = 0; r < oh; ++r)
                for (std::size_t q = 0; q < ow; ++q) {
                    double acc = is_max ? -1e300 : 0.0;
                    for (std::size_t u = 0; u < k; ++u)
                        for (std::size_t v = 0; v < k; ++v) {
                            const double e = x.at(c, r * st + u, q * st + v);
                            acc = is_max ? std::max(acc, e) : acc + e;
                        }
                    out.at(c, r, q) = static_cast<float>(is_max ? acc : acc / double(k * k));
                }
        return out;
    };
    if (const auto* p = std::get_if<MaxPool2d>(&layer.op)) return pool(p->kernel, p->stride, true);
    if (const auto* p = std::get_if<AvgPool2d>(&layer.op)) return pool(p->kernel, p->stride, false);
    if (layer.is<Flatten>()) return x.reshaped({x.size()});
    return x;
}

inline Tensor forward(const neuromerge::Network& net, const Tensor& input) {
    Tensor x = input;
    for (const auto& node : net.nodes) {
        if (const auto* layer = std::get_if<neuromerge::Layer>(&node)) {
            x = apply_layer(*layer, x);
            continue;
        }
        const auto& block = std::get<neuromerge::ResidualBlock>(node);
        Tensor body = x, shortcut = x;
        for (const auto& l : block.body) body = apply_layer(l, body);
        for (const auto& l : block.shortcut) shortcut = apply_layer(l, shortcut);
        for (std::size_t i = 0; i < body.size(); ++i) body[i] += shortcut[i];
        x = body;
    }
    return x;
}

} // namespace oracle
