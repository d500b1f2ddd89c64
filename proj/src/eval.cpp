#include "neuromerge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "neuromerge/error.hpp"
#include "neuromerge/parallel.hpp"

namespace neuromerge {

namespace {

Tensor fully_connected(const FullyConnected& fc, const Tensor& x) {
    const std::size_t in = fc.inputs(), out = fc.outputs();
    std::vector<double> acc(out, 0.0);
    for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        const float* row = fc.weight.data().data() + i * out;
        for (std::size_t j = 0; j < out; ++j) acc[j] += double(row[j]) * xi;
    }
    Tensor y({out});
    for (std::size_t j = 0; j < out; ++j)
        y[j] = static_cast<float>(acc[j] + (fc.bias ? double((*fc.bias)[j]) : 0.0));
    return y;
}

Tensor batch_norm(const BatchNorm& bn, const Tensor& x) {
    Tensor y = x;
    const std::size_t per_channel = x.size() / bn.channels();
    for (std::size_t c = 0; c < bn.channels(); ++c) {
        const double g = bn.gamma[c], b = bn.beta[c], m = bn.mean[c], s = bn.sigma[c];
        float* v = y.data().data() + c * per_channel;
        for (std::size_t i = 0; i < per_channel; ++i)
            v[i] = static_cast<float>(g * (double(v[i]) - m) / s + b);
    }
    return y;
}

template <bool Max>
Tensor pool(const Tensor& x, std::size_t kernel, std::size_t stride) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = (h - kernel) / stride + 1, ow = (w - kernel) / stride + 1;
    Tensor y({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t q = 0; q < ow; ++q) {
                double acc = Max ? -std::numeric_limits<double>::infinity() : 0.0;
                for (std::size_t u = 0; u < kernel; ++u)
                    for (std::size_t v = 0; v < kernel; ++v) {
                        const double e = x.at(ch, r * stride + u, q * stride + v);
                        acc = Max ? std::max(acc, e) : acc + e;
                    }
                y.at(ch, r, q) = static_cast<float>(Max ? acc : acc / double(kernel * kernel));
            }
    return y;
}

Tensor run_layer(const Layer& layer, const Tensor& x) {
    if (layer.op.index() != std::variant_npos && !layer.is<ReLU>() && !layer.is<Output>() &&
        !layer.is<Flatten>()) {
        // Shape check so mismatches surface as ShapeError naming the layer.
        layer_output_shape(layer, x.shape());
    }
    if (const auto* fc = std::get_if<FullyConnected>(&layer.op)) return fully_connected(*fc, x);
    if (const auto* conv = std::get_if<Conv2d>(&layer.op))
        return tensor_conv(conv->weight, x, conv->stride, conv->padding);
    if (const auto* bn = std::get_if<BatchNorm>(&layer.op)) return batch_norm(*bn, x);
    if (layer.is<ReLU>()) return relu(x);
    if (const auto* p = std::get_if<MaxPool2d>(&layer.op)) return pool<true>(x, p->kernel, p->stride);
    if (const auto* p = std::get_if<AvgPool2d>(&layer.op)) return pool<false>(x, p->kernel, p->stride);
    if (layer.is<Flatten>()) return x.reshaped({x.size()});
    return x; // Output
}

class Tapper {
public:
    Tapper(std::span<const std::string> names, std::map<std::string, Tensor>& out)
        : wanted_(names.begin(), names.end()), out_(out) {}

    void offer(const std::string& name, const Tensor& t) {
        if (wanted_.count(name)) out_[name] = t;
    }
    void check_all_found() const {
        for (const auto& name : wanted_)
            if (!out_.count(name)) throw ArgumentError("no layer named '" + name + "' to tap");
    }

private:
    std::set<std::string> wanted_;
    std::map<std::string, Tensor>& out_;
};

Tensor run_chain(const std::vector<Layer>& layers, Tensor x, Tapper& tapper) {
    for (const Layer& layer : layers) {
        x = run_layer(layer, x);
        tapper.offer(layer.name, x);
    }
    return x;
}

} // namespace

ForwardResult forward(const Network& net, const Tensor& input, std::span<const std::string> taps) {
    if (input.shape() != net.input_shape)
        throw ShapeError("input shape " + to_string(input.shape()) + " does not match network input " +
                         to_string(net.input_shape));
    ForwardResult result;
    Tapper tapper(taps, result.taps);
    Tensor x = input;
    for (const Node& node : net.nodes) {
        if (const auto* layer = std::get_if<Layer>(&node)) {
            x = run_layer(*layer, x);
            tapper.offer(layer->name, x);
            continue;
        }
        const auto& block = std::get<ResidualBlock>(node);
        Tensor body = run_chain(block.body, x, tapper);
        const Tensor shortcut = run_chain(block.shortcut, x, tapper);
        if (body.shape() != shortcut.shape())
            throw ShapeError("residual block '" + block.name + "': body " + to_string(body.shape()) +
                             " vs shortcut " + to_string(shortcut.shape()));
        for (std::size_t i = 0; i < body.size(); ++i) body[i] += shortcut[i];
        x = std::move(body);
        tapper.offer(block.name, x);
    }
    tapper.check_all_found();
    result.logits = std::move(x);
    return result;
}

std::size_t argmax(const Tensor& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

double accuracy(const Network& net, const Dataset& data) {
    if (data.size() == 0) throw ArgumentError("accuracy needs a non-empty dataset");
    std::vector<char> correct(data.size(), 0);
    parallel_for(0, data.size(), [&](std::size_t m) {
        correct[m] = argmax(forward(net, data.inputs[m]).logits) == data.labels[m];
    });
    std::size_t hits = 0;
    for (char c : correct) hits += c ? 1 : 0;
    return double(hits) / double(data.size());
}

std::string final_response_layer(const Network& net) {
    const std::string classifier = classifier_name(net);
    for (std::size_t i = 1; i < net.nodes.size(); ++i) {
        const auto* layer = std::get_if<Layer>(&net.nodes[i]);
        if (!layer || layer->name != classifier) continue;
        const Node& prev = net.nodes[i - 1];
        if (const auto* p = std::get_if<Layer>(&prev)) return p->name;
        return std::get<ResidualBlock>(prev).name;
    }
    throw ArgumentError("classifier '" + classifier + "' has no preceding layer to tap");
}

std::optional<TapSource> tap_source(const Network& net, const std::string& tap) {
    const auto shapes = layer_input_shapes(net);
    auto walk = [&](auto get, std::size_t start) -> std::optional<TapSource> {
        TapSource source;
        for (std::size_t k = start + 1; k-- > 0;) {
            const Layer* layer = get(k);
            if (!layer) return std::nullopt;
            if (layer->has_weights()) {
                source.layer = layer->name;
                return source;
            }
            if (layer->is<Flatten>()) {
                if (source.spatial != 1) return std::nullopt;
                const Shape& in = shapes.at(layer->name);
                if (in.size() != 3) return std::nullopt;
                source.spatial = in[1] * in[2];
            }
        }
        return std::nullopt;
    };
    for (std::size_t i = 0; i < net.nodes.size(); ++i) {
        if (const auto* layer = std::get_if<Layer>(&net.nodes[i])) {
            if (layer->name == tap)
                return walk([&](std::size_t k) { return std::get_if<Layer>(&net.nodes[k]); }, i);
            continue;
        }
        const auto& block = std::get<ResidualBlock>(net.nodes[i]);
        for (std::size_t j = 0; j < block.body.size(); ++j)
            if (block.body[j].name == tap)
                return walk([&](std::size_t k) { return &block.body[k]; }, j);
    }
    return std::nullopt;
}

std::vector<std::size_t> tap_indices(const TapSource& source,
                                     std::span<const std::size_t> retained_channels) {
    std::vector<std::size_t> out;
    out.reserve(retained_channels.size() * source.spatial);
    for (std::size_t c : retained_channels)
        for (std::size_t s = 0; s < source.spatial; ++s) out.push_back(c * source.spatial + s);
    return out;
}

std::vector<std::size_t> tap_retained_indices(
    const Network& original, const std::string& tap,
    const std::map<std::string, std::vector<std::size_t>>& retained) {
    const auto source = tap_source(original, tap);
    if (!source) return {};
    const auto it = retained.find(source->layer);
    if (it == retained.end()) return {};
    return tap_indices(*source, it->second);
}

double ware(const Network& original, const Network& compressed, const Dataset& data,
            const std::string& tap, std::span<const std::size_t> retained) {
    if (data.size() == 0) throw ArgumentError("WARE needs at least one sample");
    const std::vector<std::string> taps{tap};

    std::vector<double> per_sample(data.size(), std::numeric_limits<double>::quiet_NaN());
    parallel_for(0, data.size(), [&](std::size_t m) {
        const Tensor y = forward(original, data.inputs[m], taps).taps.at(tap);
        const Tensor yhat = forward(compressed, data.inputs[m], taps).taps.at(tap);
        const std::size_t count = retained.empty() ? y.size() : retained.size();
        if (yhat.size() != count)
            throw ShapeError("tap '" + tap + "' has " + std::to_string(yhat.size()) +
                             " responses in the compressed model but " + std::to_string(count) +
                             " retained responses in the original");
        double sum = 0.0;
        std::size_t terms = 0;
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t src = retained.empty() ? i : retained[i];
            if (src >= y.size()) throw ArgumentError("retained index out of range for tap '" + tap + "'");
            const double ref = y[src];
            if (std::fabs(ref) <= kWareSkipThreshold) continue;
            sum += std::fabs(double(yhat[i]) - ref) / std::fabs(ref);
            ++terms;
        }
        if (terms) per_sample[m] = sum / double(terms);
    });

    double total = 0.0;
    std::size_t samples = 0;
    for (double v : per_sample) {
        if (std::isnan(v)) continue;
        total += v;
        ++samples;
    }
    if (samples == 0)
        throw DegenerateError("every response at tap '" + tap + "' is zero; WARE is undefined");
    return total / double(samples);
}

void dump_feature_maps(const Network& net, const Tensor& input, const std::string& layer,
                       const std::filesystem::path& path) {
    const std::vector<std::string> taps{layer};
    const Tensor t = forward(net, input, taps).taps.at(layer);
    if (t.rank() != 3)
        throw ShapeError("layer '" + layer + "' produces " + to_string(t.shape()) +
                         ", not a 3-way feature map");
    write_tensor_file(t, path, layer);
}

} // namespace neuromerge
