#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "neuromerge/tensor.hpp"

namespace neuromerge {

// Weight is (in, out); bias, when present, has length out.
struct FullyConnected {
    Tensor weight;
    std::optional<Tensor> bias;

    std::size_t inputs() const { return weight.dim(0); }
    std::size_t outputs() const { return weight.dim(1); }
    bool operator==(const FullyConnected&) const = default;
};

// Weight is (out, in, k, k). Bias-free: fold conv biases into a following BN.
struct Conv2d {
    Tensor weight;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t out_channels() const { return weight.dim(0); }
    std::size_t in_channels() const { return weight.dim(1); }
    bool operator==(const Conv2d&) const = default;
};

// Inference-mode batch norm: gamma * (x - mean) / sigma + beta per channel.
// sigma is the standard deviation itself (eps already folded in).
struct BatchNorm {
    Tensor gamma;
    Tensor beta;
    Tensor mean;
    Tensor sigma;

    std::size_t channels() const { return gamma.size(); }
    bool operator==(const BatchNorm&) const = default;
};

struct ReLU {
    bool operator==(const ReLU&) const = default;
};

struct MaxPool2d {
    std::size_t kernel = 2;
    std::size_t stride = 2;
    bool operator==(const MaxPool2d&) const = default;
};

struct AvgPool2d {
    std::size_t kernel = 2;
    std::size_t stride = 2;
    bool operator==(const AvgPool2d&) const = default;
};

// (channel, row, col) -> flat vector, channel slowest.
struct Flatten {
    bool operator==(const Flatten&) const = default;
};

// Terminal marker. The layer right before it is the classifier.
struct Output {
    bool operator==(const Output&) const = default;
};

using LayerOp =
    std::variant<FullyConnected, Conv2d, BatchNorm, ReLU, MaxPool2d, AvgPool2d, Flatten, Output>;

struct Layer {
    std::string name;
    LayerOp op;

    template <class T>
    bool is() const {
        return std::holds_alternative<T>(op);
    }
    template <class T>
    const T& as() const {
        return std::get<T>(op);
    }
    template <class T>
    T& as() {
        return std::get<T>(op);
    }
    bool has_weights() const { return is<FullyConnected>() || is<Conv2d>(); }
    bool operator==(const Layer&) const = default;
};

// out = body(x) + shortcut(x). An empty shortcut is the identity.
struct ResidualBlock {
    std::string name;
    std::vector<Layer> body;
    std::vector<Layer> shortcut;

    bool operator==(const ResidualBlock&) const = default;
};

using Node = std::variant<Layer, ResidualBlock>;

struct Network {
    Shape input_shape;
    std::vector<Node> nodes;

    bool operator==(const Network&) const = default;
};

std::string_view kind_name(const LayerOp& op);

// Output shape of one layer, or ShapeError naming the layer.
Shape layer_output_shape(const Layer& layer, const Shape& input);

// All structural problems found in the network; empty means valid.
std::vector<std::string> validate(const Network& net);
// Throws ValidationError carrying validate()'s diagnostics when non-empty.
void require_valid(const Network& net);

// Learnable parameter count: FC weights and biases, conv weights, BN gamma and
// beta. BN running statistics (mean, sigma) are not counted.
std::size_t count_parameters(const Layer& layer);
std::size_t count_parameters(const Network& net);

// Name of the weight layer feeding Output.
std::string classifier_name(const Network& net);

// Input shape seen by every named layer and block, from the declared input
// shape. Requires a network whose shapes chain (throws ShapeError otherwise).
std::map<std::string, Shape> layer_input_shapes(const Network& net);
std::map<std::string, Shape> layer_output_shapes(const Network& net);

const Layer* find_layer(const Network& net, std::string_view name);
Layer* find_layer(Network& net, std::string_view name);

// Bitwise equality of structure and every tensor (distinguishes -0 from +0).
bool bitwise_equal(const Network& a, const Network& b);

} // namespace neuromerge
