#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "neuromerge/io.hpp"
#include "neuromerge/model.hpp"

namespace neuromerge {

using Rng = std::mt19937_64;

// Random-weight reference architectures. Weights are He-normal, BN statistics
// are drawn around the identity so activations stay in a sane range.
Network lenet300(Rng& rng);
Network vgg16_cifar(Rng& rng, std::size_t classes = 10);
// CIFAR ResNet of basic blocks (conv-BN-ReLU-conv-BN + shortcut, ReLU after
// the sum), 3 stages of (depth - 2) / 6 blocks, base width 16 * widen.
Network resnet_cifar(std::size_t depth, std::size_t widen, Rng& rng, std::size_t classes = 10);

// Halves conv1 and the last six convolutions of vgg16_cifar.
std::map<std::string, double> vgg16_plan();

// Small random chain nets (FC-only or conv/BN/pool/flatten/FC) for property tests.
Network random_network(Rng& rng);

// A network where every pruned neuron of a planned layer is a positive multiple
// of one retained donor (plus optional relative noise), so that merging with
// the l1 criterion at the plan's ratios is lossless when noise is zero.
struct PlantedFixture {
    Network net;
    std::map<std::string, double> plan;
    // Planned layer -> original indices of the donors (the intended retained set).
    std::map<std::string, std::vector<std::size_t>> donors;
};

// FC 16 -> 32 -> 24 -> 10, both hidden layers planned at 0.5.
PlantedFixture planted_fc(std::uint64_t seed, double noise = 0.0);
// 3x8x8 input, four conv-BN-ReLU stages (16, 16, pool, 32, 32) into a FC
// classifier, all convs planned at 0.5. BN offsets are chosen so that the
// BN relation between a copy and its donor has zero bias.
PlantedFixture planted_conv(std::uint64_t seed, double noise = 0.0);

// Standard-normal inputs of the network's shape labelled by its own argmax.
Dataset self_labelled_dataset(const Network& net, std::size_t samples, Rng& rng);

Tensor random_tensor(const Shape& shape, Rng& rng, double stddev = 1.0);

} // namespace neuromerge
