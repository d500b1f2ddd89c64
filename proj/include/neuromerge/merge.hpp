#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "neuromerge/criteria.hpp"
#include "neuromerge/decompose.hpp"
#include "neuromerge/model.hpp"

namespace neuromerge {

enum class MergeMode { Merge, Prune };

std::string_view mode_name(MergeMode mode);
MergeMode parse_mode(std::string_view name);

inline constexpr double kDefaultThreshold = 0.1;
inline constexpr double kDefaultLambda = 0.85;

struct MergeConfig {
    Criterion criterion = Criterion::L1Norm;
    std::map<std::string, double> plan; // layer name -> pruning ratio in [0, 1)
    double threshold = kDefaultThreshold;
    double lambda = kDefaultLambda;
    MergeMode mode = MergeMode::Merge;
};

struct LayerMergeReport {
    std::string name;
    std::string absorbed_into;
    std::size_t original = 0;
    std::size_t retained = 0;
    std::size_t compensated = 0;
    bool bn_aware = false;
    std::vector<std::size_t> retained_indices;
};

struct MergeReport {
    MergeConfig config;
    std::vector<LayerMergeReport> layers;
    std::vector<std::string> warnings;
    std::size_t params_before = 0;
    std::size_t params_after = 0;
};

// W' = Z * W_next for a FC next layer, W_next of shape (N, M).
Tensor merge_fc_pair(const ScalingMatrix& z, const Tensor& next_weight);

// W' = W_next x_2 Z for a conv next layer, W_next of shape (M, N, k, k).
Tensor merge_conv_pair(const ScalingMatrix& z, const Tensor& next_weight);

// Conv layer feeding a FC layer through Flatten: (Z kron I_{h*w}) * W_next,
// with W_next of shape (N*h*w, M) and channel-major flatten order.
Tensor merge_conv_fc_boundary(const ScalingMatrix& z, std::size_t height, std::size_t width,
                              const Tensor& next_fc);

BatchNorm slice_bn(const BatchNorm& bn, std::span<const std::size_t> retained);

// Weight layers whose neurons can be merged into a following weight layer:
// not the classifier, not in a shortcut, not feeding a residual sum.
std::vector<std::string> prunable_layers(const Network& net);

// Plan assigning `ratio` to every prunable layer.
std::map<std::string, double> uniform_plan(const Network& net, double ratio);

// Throws ConfigError describing the first problem with cfg for this network.
void check_config(const Network& net, const MergeConfig& cfg);

// Runs criterion scoring, decomposition and absorption for every planned
// layer, front to back. The input network is not modified.
std::pair<Network, MergeReport> apply(const Network& net, const MergeConfig& cfg);

} // namespace neuromerge
