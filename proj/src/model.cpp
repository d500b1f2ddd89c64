#include "neuromerge/model.hpp"

#include <cmath>
#include <set>
#include <span>

#include "neuromerge/error.hpp"

namespace neuromerge {

ValidationError::ValidationError(std::vector<std::string> diagnostics)
    : Error([&] {
          std::string msg = "network failed validation";
          for (const auto& d : diagnostics) msg += "\n  " + d;
          return msg;
      }()),
      diagnostics_(std::move(diagnostics)) {}

std::string_view kind_name(const LayerOp& op) {
    struct Visitor {
        std::string_view operator()(const FullyConnected&) const { return "fully_connected"; }
        std::string_view operator()(const Conv2d&) const { return "conv2d"; }
        std::string_view operator()(const BatchNorm&) const { return "batch_norm"; }
        std::string_view operator()(const ReLU&) const { return "relu"; }
        std::string_view operator()(const MaxPool2d&) const { return "max_pool2d"; }
        std::string_view operator()(const AvgPool2d&) const { return "avg_pool2d"; }
        std::string_view operator()(const Flatten&) const { return "flatten"; }
        std::string_view operator()(const Output&) const { return "output"; }
    };
    return std::visit(Visitor{}, op);
}

namespace {

[[noreturn]] void shape_fail(const Layer& layer, const std::string& what) {
    throw ShapeError("layer '" + layer.name + "' (" + std::string(kind_name(layer.op)) + "): " + what);
}

Shape pool_shape(const Layer& layer, const Shape& in, std::size_t kernel, std::size_t stride) {
    if (in.size() != 3) shape_fail(layer, "expects a 3-way feature map, got " + to_string(in));
    if (kernel == 0 || stride == 0) shape_fail(layer, "kernel and stride must be positive");
    if (kernel > in[1] || kernel > in[2])
        shape_fail(layer, "kernel " + std::to_string(kernel) + " larger than input " + to_string(in));
    return {in[0], (in[1] - kernel) / stride + 1, (in[2] - kernel) / stride + 1};
}

} // namespace

Shape layer_output_shape(const Layer& layer, const Shape& in) {
    if (const auto* fc = std::get_if<FullyConnected>(&layer.op)) {
        if (fc->weight.rank() != 2) shape_fail(layer, "weight must be a matrix");
        if (in.size() != 1) shape_fail(layer, "expects a vector input, got " + to_string(in));
        if (in[0] != fc->inputs())
            shape_fail(layer, "expects input of length " + std::to_string(fc->inputs()) + ", got " +
                                  std::to_string(in[0]));
        if (fc->bias && (fc->bias->rank() != 1 || fc->bias->size() != fc->outputs()))
            shape_fail(layer, "bias length " + std::to_string(fc->bias->size()) +
                                  " does not match weight columns " + std::to_string(fc->outputs()));
        return {fc->outputs()};
    }
    if (const auto* conv = std::get_if<Conv2d>(&layer.op)) {
        const Tensor& w = conv->weight;
        if (w.rank() != 4) shape_fail(layer, "weight must be 4-way");
        if (in.size() != 3) shape_fail(layer, "expects a 3-way feature map, got " + to_string(in));
        if (in[0] != w.dim(1))
            shape_fail(layer, "expects " + std::to_string(w.dim(1)) + " input channels, got " +
                                  std::to_string(in[0]));
        if (conv->stride == 0) shape_fail(layer, "stride must be positive");
        if (in[1] + 2 * conv->padding < w.dim(2) || in[2] + 2 * conv->padding < w.dim(3))
            shape_fail(layer, "kernel larger than padded input " + to_string(in));
        return {w.dim(0), (in[1] + 2 * conv->padding - w.dim(2)) / conv->stride + 1,
                (in[2] + 2 * conv->padding - w.dim(3)) / conv->stride + 1};
    }
    if (const auto* bn = std::get_if<BatchNorm>(&layer.op)) {
        const std::size_t c = bn->channels();
        for (const Tensor* t : {&bn->gamma, &bn->beta, &bn->mean, &bn->sigma})
            if (t->rank() != 1 || t->size() != c) shape_fail(layer, "parameter vectors differ in length");
        if (in.empty()) shape_fail(layer, "empty input shape");
        if (in[0] != c)
            shape_fail(layer, "has " + std::to_string(c) + " channels, input has " +
                                  std::to_string(in[0]));
        return in;
    }
    if (const auto* pool = std::get_if<MaxPool2d>(&layer.op))
        return pool_shape(layer, in, pool->kernel, pool->stride);
    if (const auto* pool = std::get_if<AvgPool2d>(&layer.op))
        return pool_shape(layer, in, pool->kernel, pool->stride);
    if (layer.is<Flatten>()) return {element_count(in)};
    return in; // ReLU, Output
}

namespace {

bool safe_name(const std::string& name) {
    if (name.empty() || name == "." || name == "..") return false;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '_' || c == '-' || c == '.';
        if (!ok) return false;
    }
    return true;
}

class Validator {
public:
    std::vector<std::string> diagnostics;

    void name(const std::string& n) {
        if (!safe_name(n))
            diagnostics.push_back("name '" + n + "' must be non-empty and use only [A-Za-z0-9_.-]");
        if (!names_.insert(n).second) diagnostics.push_back("duplicate layer name '" + n + "'");
    }

    void bn_values(const Layer& layer) {
        const auto& bn = layer.as<BatchNorm>();
        for (float s : bn.sigma.data())
            if (!(s > 0.0f) || !std::isfinite(s)) {
                diagnostics.push_back("layer '" + layer.name + "' (batch_norm): sigma entries must be > 0");
                break;
            }
    }

    // Propagates shape through a chain; nullopt once the chain is broken.
    std::optional<Shape> chain(std::span<const Layer> layers, std::optional<Shape> shape,
                               bool allow_output) {
        for (const Layer& layer : layers) {
            name(layer.name);
            if (layer.is<Output>() && !allow_output)
                diagnostics.push_back("layer '" + layer.name + "': output marker inside a residual block");
            if (layer.is<BatchNorm>()) bn_values(layer);
            if (!shape) continue;
            try {
                shape = layer_output_shape(layer, *shape);
            } catch (const ShapeError& e) {
                diagnostics.push_back(e.what());
                shape.reset();
            }
        }
        return shape;
    }

private:
    std::set<std::string> names_;
};

} // namespace

std::vector<std::string> validate(const Network& net) {
    Validator v;
    std::optional<Shape> shape = net.input_shape;
    if (net.input_shape.empty() || net.input_shape.size() > 3 ||
        element_count(net.input_shape) == 0) {
        v.diagnostics.push_back("input shape " + to_string(net.input_shape) +
                                " must have rank 1..3 with positive dimensions");
        shape.reset();
    }

    std::size_t outputs = 0;
    for (std::size_t i = 0; i < net.nodes.size(); ++i) {
        if (const auto* layer = std::get_if<Layer>(&net.nodes[i])) {
            if (layer->is<Output>()) {
                ++outputs;
                if (i + 1 != net.nodes.size())
                    v.diagnostics.push_back("output marker '" + layer->name + "' must be the last node");
                const Layer* prev = i > 0 ? std::get_if<Layer>(&net.nodes[i - 1]) : nullptr;
                if (!prev || !prev->has_weights())
                    v.diagnostics.push_back("output marker '" + layer->name +
                                            "' must follow a fully-connected or conv classifier layer");
            }
            shape = v.chain(std::span<const Layer>(layer, 1), shape, true);
            continue;
        }
        const auto& block = std::get<ResidualBlock>(net.nodes[i]);
        v.name(block.name);
        if (block.body.empty())
            v.diagnostics.push_back("residual block '" + block.name + "' has an empty body");
        for (const Layer& s : block.shortcut)
            if (!s.is<Conv2d>() && !s.is<BatchNorm>())
                v.diagnostics.push_back("residual block '" + block.name + "': shortcut layer '" + s.name +
                                        "' must be conv2d or batch_norm");
        auto body = v.chain(block.body, shape, false);
        auto shortcut = v.chain(block.shortcut, shape, false);
        if (body && shortcut && *body != *shortcut) {
            v.diagnostics.push_back("residual block '" + block.name + "': body output " +
                                    to_string(*body) + " does not match shortcut output " +
                                    to_string(*shortcut));
            shape.reset();
        } else {
            shape = (body && shortcut) ? body : std::nullopt;
        }
    }
    if (outputs != 1)
        v.diagnostics.push_back("network must contain exactly one output marker, found " +
                                std::to_string(outputs));
    return v.diagnostics;
}

void require_valid(const Network& net) {
    auto diagnostics = validate(net);
    if (!diagnostics.empty()) throw ValidationError(std::move(diagnostics));
}

std::size_t count_parameters(const Layer& layer) {
    if (const auto* fc = std::get_if<FullyConnected>(&layer.op))
        return fc->weight.size() + (fc->bias ? fc->bias->size() : 0);
    if (const auto* conv = std::get_if<Conv2d>(&layer.op)) return conv->weight.size();
    if (const auto* bn = std::get_if<BatchNorm>(&layer.op)) return 2 * bn->channels();
    return 0;
}

std::size_t count_parameters(const Network& net) {
    std::size_t total = 0;
    for (const Node& node : net.nodes) {
        if (const auto* layer = std::get_if<Layer>(&node)) {
            total += count_parameters(*layer);
            continue;
        }
        const auto& block = std::get<ResidualBlock>(node);
        for (const Layer& l : block.body) total += count_parameters(l);
        for (const Layer& l : block.shortcut) total += count_parameters(l);
    }
    return total;
}

std::string classifier_name(const Network& net) {
    for (std::size_t i = 1; i < net.nodes.size(); ++i) {
        const auto* layer = std::get_if<Layer>(&net.nodes[i]);
        if (layer && layer->is<Output>()) {
            const auto* prev = std::get_if<Layer>(&net.nodes[i - 1]);
            if (prev && prev->has_weights()) return prev->name;
        }
    }
    throw ValidationError({"network has no classifier layer feeding an output marker"});
}

namespace {

template <class Fn>
void trace_shapes(const Network& net, Fn&& record) {
    Shape shape = net.input_shape;
    auto run = [&](std::span<const Layer> layers, Shape s) {
        for (const Layer& layer : layers) {
            Shape out = layer_output_shape(layer, s);
            record(layer.name, s, out);
            s = std::move(out);
        }
        return s;
    };
    for (const Node& node : net.nodes) {
        if (const auto* layer = std::get_if<Layer>(&node)) {
            shape = run(std::span<const Layer>(layer, 1), shape);
            continue;
        }
        const auto& block = std::get<ResidualBlock>(node);
        Shape body = run(block.body, shape);
        Shape shortcut = run(block.shortcut, shape);
        if (body != shortcut)
            throw ShapeError("residual block '" + block.name + "': body output " + to_string(body) +
                             " does not match shortcut output " + to_string(shortcut));
        record(block.name, shape, body);
        shape = body;
    }
}

} // namespace

std::map<std::string, Shape> layer_input_shapes(const Network& net) {
    std::map<std::string, Shape> shapes;
    trace_shapes(net, [&](const std::string& n, const Shape& in, const Shape&) { shapes[n] = in; });
    return shapes;
}

std::map<std::string, Shape> layer_output_shapes(const Network& net) {
    std::map<std::string, Shape> shapes;
    trace_shapes(net, [&](const std::string& n, const Shape&, const Shape& out) { shapes[n] = out; });
    return shapes;
}

const Layer* find_layer(const Network& net, std::string_view name) {
    for (const Node& node : net.nodes) {
        if (const auto* layer = std::get_if<Layer>(&node)) {
            if (layer->name == name) return layer;
            continue;
        }
        const auto& block = std::get<ResidualBlock>(node);
        for (const Layer& l : block.body)
            if (l.name == name) return &l;
        for (const Layer& l : block.shortcut)
            if (l.name == name) return &l;
    }
    return nullptr;
}

Layer* find_layer(Network& net, std::string_view name) {
    return const_cast<Layer*>(find_layer(static_cast<const Network&>(net), name));
}

namespace {

bool bitwise_equal(const std::optional<Tensor>& a, const std::optional<Tensor>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || a->bitwise_equal(*b);
}

bool bitwise_equal(const Layer& a, const Layer& b) {
    if (a.name != b.name || a.op.index() != b.op.index()) return false;
    if (const auto* fa = std::get_if<FullyConnected>(&a.op)) {
        const auto& fb = b.as<FullyConnected>();
        return fa->weight.bitwise_equal(fb.weight) && bitwise_equal(fa->bias, fb.bias);
    }
    if (const auto* ca = std::get_if<Conv2d>(&a.op)) {
        const auto& cb = b.as<Conv2d>();
        return ca->stride == cb.stride && ca->padding == cb.padding &&
               ca->weight.bitwise_equal(cb.weight);
    }
    if (const auto* ba = std::get_if<BatchNorm>(&a.op)) {
        const auto& bb = b.as<BatchNorm>();
        return ba->gamma.bitwise_equal(bb.gamma) && ba->beta.bitwise_equal(bb.beta) &&
               ba->mean.bitwise_equal(bb.mean) && ba->sigma.bitwise_equal(bb.sigma);
    }
    return a.op == b.op;
}

bool bitwise_equal(const std::vector<Layer>& a, const std::vector<Layer>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!bitwise_equal(a[i], b[i])) return false;
    return true;
}

} // namespace

bool bitwise_equal(const Network& a, const Network& b) {
    if (a.input_shape != b.input_shape || a.nodes.size() != b.nodes.size()) return false;
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        if (a.nodes[i].index() != b.nodes[i].index()) return false;
        if (const auto* la = std::get_if<Layer>(&a.nodes[i])) {
            if (!bitwise_equal(*la, std::get<Layer>(b.nodes[i]))) return false;
            continue;
        }
        const auto& ra = std::get<ResidualBlock>(a.nodes[i]);
        const auto& rb = std::get<ResidualBlock>(b.nodes[i]);
        if (ra.name != rb.name || !bitwise_equal(ra.body, rb.body) ||
            !bitwise_equal(ra.shortcut, rb.shortcut))
            return false;
    }
    return true;
}

} // namespace neuromerge
