#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neuromerge/model.hpp"

namespace neuromerge {

enum class Criterion { L1Norm, L2Norm, L2GM };

// CLI spelling: "l1", "l2", "l2-gm".
std::string_view criterion_name(Criterion c);
Criterion parse_criterion(std::string_view name);

// One flattened weight vector per output neuron of a layer.
//   FC:   column j of the weight, followed by bias[j] when the layer has a bias
//   conv: filter j flattened in (in, k, k) order
class NeuronView {
public:
    NeuronView() = default;
    NeuronView(std::size_t count, std::size_t length, std::vector<float> data);

    static NeuronView of(const FullyConnected& fc);
    static NeuronView of(const Conv2d& conv);
    static NeuronView of(const Layer& layer);

    std::size_t count() const noexcept { return count_; }
    std::size_t length() const noexcept { return length_; }
    std::span<const float> neuron(std::size_t i) const {
        return {data_.data() + i * length_, length_};
    }

    // View restricted to the given neuron indices, in the given order.
    NeuronView subset(std::span<const std::size_t> indices) const;

private:
    std::size_t count_ = 0;
    std::size_t length_ = 0;
    std::vector<float> data_;
};

// Importance per neuron, higher is more important.
//   L1Norm: ||w||_1    L2Norm: ||w||_2    L2GM: sum_j ||w - w_j||_2
std::vector<double> score_neurons(const NeuronView& view, Criterion criterion);

// Indices of the `keep` highest scores in ascending index order; equal scores
// prefer the lower index.
std::vector<std::size_t> select_retained(std::span<const double> scores, std::size_t keep);

// Neurons kept for a pruning ratio: count - floor(ratio * count).
std::size_t keep_count(std::size_t count, double ratio);

} // namespace neuromerge
