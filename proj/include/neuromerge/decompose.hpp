#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neuromerge/criteria.hpp"
#include "neuromerge/model.hpp"
#include "neuromerge/tensor.hpp"

namespace neuromerge {

// True when every entry is >= 0 and every column holds at most one strictly
// positive entry: exactly the matrices Z for which relu(Z^T v) == Z^T relu(v).
bool commutes_with_relu(const Tensor& z);

// P x N scaling matrix mapping N original neurons onto P retained ones.
// Column retained[p] is the unit vector e_p; every other column is either zero
// (neuron dropped) or holds one positive scale in the row of its donor.
class ScalingMatrix {
public:
    ScalingMatrix(std::vector<std::size_t> retained, std::size_t cols);

    // Rebuilds from a dense P x N tensor; throws ArgumentError if it breaks the invariants.
    static ScalingMatrix from_tensor(const Tensor& z, std::vector<std::size_t> retained);

    std::size_t rows() const noexcept { return retained_.size(); }
    std::size_t cols() const noexcept { return cols_; }
    const std::vector<std::size_t>& retained() const noexcept { return retained_; }
    float at(std::size_t row, std::size_t col) const { return values_[row * cols_ + col]; }

    // Routes pruned neuron `col` onto retained row `row` with a positive scale.
    void compensate(std::size_t col, std::size_t row, float scale);
    bool is_retained(std::size_t col) const { return position_[col] != kNone; }
    std::size_t compensated_count() const;

    // Same selection with every compensation scale zeroed: plain pruning.
    ScalingMatrix selection_only() const;
    Tensor to_tensor() const;

    // Throws std::logic_error if an invariant is broken.
    void check() const;

private:
    static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

    std::vector<std::size_t> retained_;
    std::size_t cols_;
    std::vector<std::size_t> position_; // original index -> row, kNone if pruned
    std::vector<float> values_;
};

struct SimilarityResult {
    std::size_t index = 0; // position within the retained set
    double sim = 0.0;      // cosine similarity to the chosen donor
    float scale = 0.0f;    // > 0
};

// Affine relation between the batch-normalised responses of two channels whose
// pre-norm responses satisfy x2 = s * x1:  x2_bn = scale * x1_bn + bias.
struct BnRelation {
    double scale = 0.0;
    double bias = 0.0;
};

struct BnChannel {
    double gamma, beta, mean, sigma;
};

BnRelation bn_relation(double s, const BnChannel& first, const BnChannel& second);
BnChannel bn_channel(const BatchNorm& bn, std::size_t channel);

struct BnContext {
    BatchNorm bn;         // parameters for the layer's original channels
    double lambda = 0.85; // weight of cosine distance vs. normalised bias distance
};

// Donor with largest cosine similarity; zero-norm candidates are skipped.
// Throws DegenerateError if w is zero or no candidate has positive norm.
SimilarityResult most_similar(std::span<const float> w, const NeuronView& retained);

// BN-aware donor search for the neuron at original index `n`.
// `retained_indices[p]` is the original channel of retained candidate p.
// Throws DegenerateError when no candidate yields a positive scale.
SimilarityResult most_similar_bn(std::span<const float> filter, const NeuronView& retained,
                                 std::span<const std::size_t> retained_indices,
                                 const BnContext& bn, std::size_t n);

struct Decomposition {
    // Retained weights: (in, P) for FC, (P, in, k, k) for conv.
    Tensor weight;
    std::optional<Tensor> bias; // FC bias restricted to retained neurons
    ScalingMatrix z;
    std::vector<std::string> warnings;
};

// Splits a FC or conv layer into retained weights and a scaling matrix.
// A pruned neuron is routed to its donor only when sim >= threshold.
Decomposition decompose_layer(const Layer& layer, std::span<const std::size_t> retained_indices,
                              double threshold, const BnContext* bn = nullptr);

} // namespace neuromerge
