#include "neuromerge/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "neuromerge/error.hpp"
#include "neuromerge/parallel.hpp"

namespace neuromerge {

bool commutes_with_relu(const Tensor& z) {
    if (z.rank() != 2) return false;
    for (std::size_t n = 0; n < z.dim(1); ++n) {
        std::size_t positive = 0;
        for (std::size_t p = 0; p < z.dim(0); ++p) {
            const float v = z.at(p, n);
            if (v < 0.0f || std::isnan(v)) return false;
            if (v > 0.0f) ++positive;
        }
        if (positive > 1) return false;
    }
    return true;
}

ScalingMatrix::ScalingMatrix(std::vector<std::size_t> retained, std::size_t cols)
    : retained_(std::move(retained)), cols_(cols), position_(cols, kNone),
      values_(retained_.size() * cols, 0.0f) {
    if (retained_.empty() || retained_.size() > cols)
        throw ArgumentError("scaling matrix needs 1.." + std::to_string(cols) + " retained rows");
    for (std::size_t p = 0; p < retained_.size(); ++p) {
        const std::size_t col = retained_[p];
        if (col >= cols) throw ArgumentError("retained index " + std::to_string(col) + " out of range");
        if (p > 0 && col <= retained_[p - 1])
            throw ArgumentError("retained indices must be strictly ascending");
        position_[col] = p;
        values_[p * cols + col] = 1.0f;
    }
}

ScalingMatrix ScalingMatrix::from_tensor(const Tensor& z, std::vector<std::size_t> retained) {
    if (z.rank() != 2 || z.dim(0) != retained.size())
        throw ArgumentError("scaling tensor " + to_string(z.shape()) + " does not match " +
                            std::to_string(retained.size()) + " retained rows");
    ScalingMatrix m(std::move(retained), z.dim(1));
    for (std::size_t n = 0; n < m.cols_; ++n) {
        for (std::size_t p = 0; p < m.rows(); ++p) {
            const float v = z.at(p, n);
            if (m.is_retained(n)) {
                if (v != (m.position_[n] == p ? 1.0f : 0.0f))
                    throw ArgumentError("retained column " + std::to_string(n) + " is not a unit vector");
            } else if (v != 0.0f) {
                m.compensate(n, p, v);
            }
        }
    }
    return m;
}

void ScalingMatrix::compensate(std::size_t col, std::size_t row, float scale) {
    if (col >= cols_ || row >= rows()) throw ArgumentError("scaling matrix index out of range");
    if (is_retained(col)) throw ArgumentError("cannot compensate retained column " + std::to_string(col));
    if (!(scale > 0.0f) || !std::isfinite(scale))
        throw ArgumentError("compensation scale must be positive and finite");
    for (std::size_t p = 0; p < rows(); ++p)
        if (values_[p * cols_ + col] != 0.0f)
            throw ArgumentError("column " + std::to_string(col) + " already compensated");
    values_[row * cols_ + col] = scale;
}

std::size_t ScalingMatrix::compensated_count() const {
    std::size_t count = 0;
    for (std::size_t n = 0; n < cols_; ++n) {
        if (is_retained(n)) continue;
        for (std::size_t p = 0; p < rows(); ++p)
            if (values_[p * cols_ + n] > 0.0f) {
                ++count;
                break;
            }
    }
    return count;
}

ScalingMatrix ScalingMatrix::selection_only() const { return ScalingMatrix(retained_, cols_); }

Tensor ScalingMatrix::to_tensor() const { return Tensor({rows(), cols_}, values_); }

void ScalingMatrix::check() const {
    if (!commutes_with_relu(to_tensor()))
        throw std::logic_error("scaling matrix violates the relu commutation condition");
    for (std::size_t p = 0; p < rows(); ++p)
        for (std::size_t q = 0; q < rows(); ++q)
            if (at(q, retained_[p]) != (p == q ? 1.0f : 0.0f))
                throw std::logic_error("retained column is not a unit vector");
}

BnChannel bn_channel(const BatchNorm& bn, std::size_t channel) {
    if (channel >= bn.channels())
        throw ArgumentError("batch-norm channel " + std::to_string(channel) + " out of range");
    return {bn.gamma[channel], bn.beta[channel], bn.mean[channel], bn.sigma[channel]};
}

BnRelation bn_relation(double s, const BnChannel& first, const BnChannel& second) {
    BnRelation r;
    r.scale = s * (second.gamma / first.gamma) * (first.sigma / second.sigma);
    r.bias = (second.gamma / second.sigma) *
                 (s * (-first.sigma * first.beta / first.gamma + first.mean) - second.mean) +
             second.beta;
    return r;
}

SimilarityResult most_similar(std::span<const float> w, const NeuronView& retained) {
    if (retained.count() == 0) throw DegenerateError("no retained neurons to compare against");
    if (w.size() != retained.length())
        throw ShapeError("neuron length " + std::to_string(w.size()) + " vs retained length " +
                         std::to_string(retained.length()));
    const double norm = l2_norm(w);
    if (norm == 0.0) throw DegenerateError("zero-norm neuron has no direction");

    std::optional<SimilarityResult> best;
    double best_norm = 0.0;
    for (std::size_t p = 0; p < retained.count(); ++p) {
        const auto candidate = retained.neuron(p);
        const double cn = l2_norm(candidate);
        if (cn == 0.0) continue;
        const double sim = std::clamp(dot(w, candidate) / (norm * cn), -1.0, 1.0);
        if (!best || sim > best->sim) {
            best = SimilarityResult{p, sim, 0.0f};
            best_norm = cn;
        }
    }
    if (!best) throw DegenerateError("every retained neuron has zero norm");
    best->scale = static_cast<float>(norm / best_norm);
    if (!(best->scale > 0.0f) || !std::isfinite(best->scale))
        throw DegenerateError("norm ratio is not representable as a positive float");
    return *best;
}

SimilarityResult most_similar_bn(std::span<const float> filter, const NeuronView& retained,
                                 std::span<const std::size_t> retained_indices,
                                 const BnContext& ctx, std::size_t n) {
    if (retained.count() == 0) throw DegenerateError("no retained neurons to compare against");
    if (retained_indices.size() != retained.count())
        throw ArgumentError("retained index list does not match the retained view");
    if (filter.size() != retained.length())
        throw ShapeError("filter length " + std::to_string(filter.size()) + " vs retained length " +
                         std::to_string(retained.length()));
    const double norm = l2_norm(filter);
    if (norm == 0.0) throw DegenerateError("zero-norm filter has no direction");
    const BnChannel self = bn_channel(ctx.bn, n);

    struct Candidate {
        std::size_t index;
        double cos_dist;
        double bias_dist;
        double sim;
        double scale;
    };
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < retained.count(); ++p) {
        const auto other = retained.neuron(p);
        const double cn = l2_norm(other);
        if (cn == 0.0) continue;
        const double sim = std::clamp(dot(filter, other) / (norm * cn), -1.0, 1.0);
        // The pruned filter is the scaled one (x2 = s * x1 with x1 the donor).
        const BnRelation rel = bn_relation(norm / cn, bn_channel(ctx.bn, retained_indices[p]), self);
        if (!(rel.scale > 0.0) || !std::isfinite(rel.scale) || !std::isfinite(rel.bias)) continue;
        if (!(static_cast<float>(rel.scale) > 0.0f) || !std::isfinite(static_cast<float>(rel.scale)))
            continue;
        candidates.push_back({p, 1.0 - sim, std::fabs(rel.bias) / rel.scale, sim, rel.scale});
    }
    if (candidates.empty())
        throw DegenerateError("no retained filter gives a positive batch-norm scale");

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
        lo = std::min(lo, c.bias_dist);
        hi = std::max(hi, c.bias_dist);
    }
    const Candidate* best = nullptr;
    double best_dist = 0.0;
    for (const auto& c : candidates) {
        const double bias = hi > lo ? (c.bias_dist - lo) / (hi - lo) : 0.0;
        const double dist = ctx.lambda * c.cos_dist + (1.0 - ctx.lambda) * bias;
        if (!best || dist < best_dist) {
            best = &c;
            best_dist = dist;
        }
    }
    return {best->index, best->sim, static_cast<float>(best->scale)};
}

namespace {

Decomposition retained_weights(const Layer& layer, const std::vector<std::size_t>& keep,
                               std::size_t neurons) {
    Decomposition d{Tensor{}, std::nullopt, ScalingMatrix(keep, neurons), {}};
    if (const auto* fc = std::get_if<FullyConnected>(&layer.op)) {
        Tensor w({fc->inputs(), keep.size()});
        for (std::size_t i = 0; i < fc->inputs(); ++i)
            for (std::size_t p = 0; p < keep.size(); ++p) w.at(i, p) = fc->weight.at(i, keep[p]);
        d.weight = std::move(w);
        if (fc->bias) {
            Tensor b({keep.size()});
            for (std::size_t p = 0; p < keep.size(); ++p) b[p] = (*fc->bias)[keep[p]];
            d.bias = std::move(b);
        }
    } else {
        const auto& conv = layer.as<Conv2d>();
        Shape shape = conv.weight.shape();
        const std::size_t per_filter = conv.weight.size() / shape[0];
        shape[0] = keep.size();
        std::vector<float> data;
        data.reserve(keep.size() * per_filter);
        for (std::size_t k : keep) {
            const auto* src = conv.weight.data().data() + k * per_filter;
            data.insert(data.end(), src, src + per_filter);
        }
        d.weight = Tensor(std::move(shape), std::move(data));
    }
    return d;
}

} // namespace

Decomposition decompose_layer(const Layer& layer, std::span<const std::size_t> retained_indices,
                              double threshold, const BnContext* bn) {
    if (!layer.has_weights())
        throw ArgumentError("layer '" + layer.name + "' is neither fully-connected nor conv");
    const NeuronView view = NeuronView::of(layer);
    if (bn && bn->bn.channels() != view.count())
        throw ShapeError("layer '" + layer.name + "' has " + std::to_string(view.count()) +
                         " neurons but its batch norm has " + std::to_string(bn->bn.channels()));

    std::vector<std::size_t> keep(retained_indices.begin(), retained_indices.end());
    Decomposition d = retained_weights(layer, keep, view.count());
    // sim never exceeds 1, so nothing can be compensated: plain pruning.
    if (threshold > 1.0) return d;
    const NeuronView donors = view.subset(keep);

    std::vector<std::size_t> pruned;
    for (std::size_t n = 0; n < view.count(); ++n)
        if (!d.z.is_retained(n)) pruned.push_back(n);

    struct Outcome {
        std::optional<SimilarityResult> match;
        std::string warning;
    };
    std::vector<Outcome> outcomes(pruned.size());
    parallel_for(0, pruned.size(), [&](std::size_t k) {
        const std::size_t n = pruned[k];
        const auto w = view.neuron(n);
        // A zero neuron contributes nothing downstream; it is dropped without a donor.
        if (l2_norm(w) == 0.0) return;
        try {
            outcomes[k].match = bn ? most_similar_bn(w, donors, keep, *bn, n) : most_similar(w, donors);
        } catch (const DegenerateError& e) {
            outcomes[k].warning = "layer '" + layer.name + "' neuron " + std::to_string(n) +
                                  " dropped uncompensated: " + e.what();
        }
    });

    for (std::size_t k = 0; k < pruned.size(); ++k) {
        if (!outcomes[k].warning.empty()) d.warnings.push_back(outcomes[k].warning);
        const auto& match = outcomes[k].match;
        if (match && match->sim >= threshold) d.z.compensate(pruned[k], match->index, match->scale);
    }
    d.z.check();
    return d;
}

} // namespace neuromerge
