#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neuromerge/io.hpp"
#include "neuromerge/model.hpp"
#include "neuromerge/tensor.hpp"

namespace neuromerge {

struct ForwardResult {
    Tensor logits;
    std::map<std::string, Tensor> taps; // output of each requested layer or block
};

// Inference pass. BN is gamma * (x - mean) / sigma + beta; a residual block
// yields body(x) + shortcut(x). Throws ArgumentError for an unknown tap name.
ForwardResult forward(const Network& net, const Tensor& input,
                      std::span<const std::string> taps = {});

// Index of the largest logit; ties resolve to the lower index.
std::size_t argmax(const Tensor& logits);

double accuracy(const Network& net, const Dataset& data);

// Name of the node feeding the classifier (the final response layer).
std::string final_response_layer(const Network& net);

// Which weight layer's neurons index the elements of a tapped activation.
// `spatial` > 1 when a flatten sits in between (element = channel * spatial + s).
struct TapSource {
    std::string layer;
    std::size_t spatial = 1;
};
std::optional<TapSource> tap_source(const Network& net, const std::string& tap);

// Expands retained channel indices of the source layer to tap element indices.
std::vector<std::size_t> tap_indices(const TapSource& source,
                                     std::span<const std::size_t> retained_channels);

// Original-model indices of the responses that survive at `tap`, given the
// retained neurons of every planned layer. Empty when the tap's source layer
// was not reduced (identity mapping).
std::vector<std::size_t> tap_retained_indices(
    const Network& original, const std::string& tap,
    const std::map<std::string, std::vector<std::size_t>>& retained);

// Mean relative change of the tapped responses, unit importance scores:
//   (1/M) sum_m (1/N_m) sum_i |yhat - y| / |y|
// y is the original response at original index retained[i] (identity when
// `retained` is empty), yhat the compressed response at i. Terms with
// |y| <= 1e-6 are skipped and N_m counts the rest; samples with no terms left
// are left out of M. Throws DegenerateError if nothing remains.
double ware(const Network& original, const Network& compressed, const Dataset& data,
            const std::string& tap, std::span<const std::size_t> retained = {});

inline constexpr double kWareSkipThreshold = 1e-6;

struct EvalReport {
    std::string model;
    double accuracy = 0.0;
    std::optional<double> ware;
    std::size_t parameters = 0;
    std::size_t samples = 0;
};

// Writes the tapped 3-way feature map as a blob plus `<path>.json` sidecar.
void dump_feature_maps(const Network& net, const Tensor& input, const std::string& layer,
                       const std::filesystem::path& path);

} // namespace neuromerge
