#include "neuromerge/criteria.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neuromerge/error.hpp"
#include "neuromerge/parallel.hpp"

namespace neuromerge {

std::string_view criterion_name(Criterion c) {
    switch (c) {
    case Criterion::L1Norm: return "l1";
    case Criterion::L2Norm: return "l2";
    case Criterion::L2GM: return "l2-gm";
    }
    return "?";
}

Criterion parse_criterion(std::string_view name) {
    if (name == "l1") return Criterion::L1Norm;
    if (name == "l2") return Criterion::L2Norm;
    if (name == "l2-gm") return Criterion::L2GM;
    throw ArgumentError("unknown criterion '" + std::string(name) + "' (expected l1, l2, l2-gm)");
}

NeuronView::NeuronView(std::size_t count, std::size_t length, std::vector<float> data)
    : count_(count), length_(length), data_(std::move(data)) {
    if (data_.size() != count_ * length_)
        throw ShapeError("neuron view of " + std::to_string(count_) + " x " + std::to_string(length_) +
                         " needs " + std::to_string(count_ * length_) + " values");
}

NeuronView NeuronView::of(const FullyConnected& fc) {
    const std::size_t in = fc.inputs(), out = fc.outputs();
    const std::size_t length = in + (fc.bias ? 1 : 0);
    std::vector<float> data(out * length);
    for (std::size_t j = 0; j < out; ++j) {
        for (std::size_t i = 0; i < in; ++i) data[j * length + i] = fc.weight.at(i, j);
        if (fc.bias) data[j * length + in] = (*fc.bias)[j];
    }
    return {out, length, std::move(data)};
}

NeuronView NeuronView::of(const Conv2d& conv) {
    const std::size_t out = conv.out_channels();
    return {out, conv.weight.size() / out, conv.weight.storage()};
}

NeuronView NeuronView::of(const Layer& layer) {
    if (const auto* fc = std::get_if<FullyConnected>(&layer.op)) return of(*fc);
    if (const auto* conv = std::get_if<Conv2d>(&layer.op)) return of(*conv);
    throw ArgumentError("layer '" + layer.name + "' has no neurons to score");
}

NeuronView NeuronView::subset(std::span<const std::size_t> indices) const {
    std::vector<float> data;
    data.reserve(indices.size() * length_);
    for (std::size_t i : indices) {
        if (i >= count_) throw ArgumentError("neuron index " + std::to_string(i) + " out of range");
        const auto n = neuron(i);
        data.insert(data.end(), n.begin(), n.end());
    }
    return {indices.size(), length_, std::move(data)};
}

std::vector<double> score_neurons(const NeuronView& view, Criterion criterion) {
    if (view.count() == 0) throw ArgumentError("cannot score an empty layer");
    std::vector<double> scores(view.count());
    switch (criterion) {
    case Criterion::L1Norm:
        for (std::size_t i = 0; i < view.count(); ++i) scores[i] = l1_norm(view.neuron(i));
        break;
    case Criterion::L2Norm:
        for (std::size_t i = 0; i < view.count(); ++i) scores[i] = l2_norm(view.neuron(i));
        break;
    case Criterion::L2GM:
        // Geometric-median proxy: neurons close to all others are the most replaceable.
        parallel_for(0, view.count(), [&](std::size_t i) {
            const auto a = view.neuron(i);
            double total = 0.0;
            for (std::size_t j = 0; j < view.count(); ++j) {
                if (j == i) continue;
                const auto b = view.neuron(j);
                double sq = 0.0;
                for (std::size_t k = 0; k < a.size(); ++k) {
                    const double d = double(a[k]) - double(b[k]);
                    sq += d * d;
                }
                total += std::sqrt(sq);
            }
            scores[i] = total;
        });
        break;
    }
    return scores;
}

std::vector<std::size_t> select_retained(std::span<const double> scores, std::size_t keep) {
    if (keep == 0 || keep > scores.size())
        throw ArgumentError("keep count " + std::to_string(keep) + " outside 1.." +
                            std::to_string(scores.size()));
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    return order;
}

std::size_t keep_count(std::size_t count, double ratio) {
    if (!(ratio >= 0.0 && ratio < 1.0))
        throw ArgumentError("pruning ratio must lie in [0, 1), got " + std::to_string(ratio));
    if (count == 0) throw ArgumentError("cannot prune an empty layer");
    // Relative nudge so ratios like 0.7 * 10 that land a hair below an integer still floor to it.
    const double pruned = std::floor(ratio * double(count) * (1.0 + 1e-12));
    const auto removed = std::min<std::size_t>(static_cast<std::size_t>(pruned), count - 1);
    return count - removed;
}

} // namespace neuromerge
