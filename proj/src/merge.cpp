#include "neuromerge/merge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "neuromerge/error.hpp"

namespace neuromerge {

std::string_view mode_name(MergeMode mode) { return mode == MergeMode::Merge ? "merge" : "prune"; }

MergeMode parse_mode(std::string_view name) {
    if (name == "merge") return MergeMode::Merge;
    if (name == "prune") return MergeMode::Prune;
    throw ArgumentError("unknown mode '" + std::string(name) + "' (expected merge or prune)");
}

namespace {

// Nonzero entries of each row of Z in ascending column order. Summing only
// these gives the same bits as the dense product for finite weights, since the
// accumulator starts at +0 and skipped terms are all +-0.
std::vector<std::vector<std::pair<std::size_t, double>>> sparse_rows(const ScalingMatrix& z) {
    std::vector<std::vector<std::pair<std::size_t, double>>> rows(z.rows());
    for (std::size_t p = 0; p < z.rows(); ++p)
        for (std::size_t n = 0; n < z.cols(); ++n)
            if (z.at(p, n) != 0.0f) rows[p].emplace_back(n, z.at(p, n));
    return rows;
}

// out block p = sum_n Z[p, n] * in block n, for `outer` groups of z.cols()
// contiguous input blocks of `block` floats each.
Tensor combine_blocks(const ScalingMatrix& z, const Tensor& in, Shape out_shape, std::size_t outer,
                      std::size_t block) {
    const auto rows = sparse_rows(z);
    Tensor out(std::move(out_shape));
    std::vector<double> acc(block);
    const float* src = in.data().data();
    float* dst = out.data().data();
    for (std::size_t a = 0; a < outer; ++a) {
        for (std::size_t p = 0; p < rows.size(); ++p) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (const auto& [n, coef] : rows[p]) {
                const float* blk = src + (a * z.cols() + n) * block;
                for (std::size_t b = 0; b < block; ++b) acc[b] += double(blk[b]) * coef;
            }
            float* o = dst + (a * rows.size() + p) * block;
            for (std::size_t b = 0; b < block; ++b) o[b] = static_cast<float>(acc[b]);
        }
    }
    return out;
}

} // namespace

Tensor merge_fc_pair(const ScalingMatrix& z, const Tensor& next_weight) {
    if (next_weight.rank() != 2 || next_weight.dim(0) != z.cols())
        throw ShapeError("merge_fc_pair: scaling matrix has " + std::to_string(z.cols()) +
                         " columns, next weight is " + to_string(next_weight.shape()));
    return combine_blocks(z, next_weight, {z.rows(), next_weight.dim(1)}, 1, next_weight.dim(1));
}

Tensor merge_conv_pair(const ScalingMatrix& z, const Tensor& next_weight) {
    if (next_weight.rank() != 4 || next_weight.dim(1) != z.cols())
        throw ShapeError("merge_conv_pair: scaling matrix has " + std::to_string(z.cols()) +
                         " columns, next weight is " + to_string(next_weight.shape()));
    Shape shape = next_weight.shape();
    shape[1] = z.rows();
    return combine_blocks(z, next_weight, shape, shape[0], shape[2] * shape[3]);
}

Tensor merge_conv_fc_boundary(const ScalingMatrix& z, std::size_t height, std::size_t width,
                              const Tensor& next_fc) {
    const std::size_t spatial = height * width;
    if (next_fc.rank() != 2 || spatial == 0 || next_fc.dim(0) != z.cols() * spatial)
        throw ShapeError("merge_conv_fc_boundary: expected " + std::to_string(z.cols()) + "x" +
                         std::to_string(spatial) + " rows, next weight is " +
                         to_string(next_fc.shape()));
    return combine_blocks(z, next_fc, {z.rows() * spatial, next_fc.dim(1)}, 1,
                          spatial * next_fc.dim(1));
}

BatchNorm slice_bn(const BatchNorm& bn, std::span<const std::size_t> retained) {
    auto slice = [&](const Tensor& t) {
        std::vector<float> v;
        v.reserve(retained.size());
        for (std::size_t i : retained) {
            if (i >= t.size())
                throw ArgumentError("batch-norm channel " + std::to_string(i) + " out of range");
            v.push_back(t[i]);
        }
        const std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    };
    if (retained.empty()) throw ArgumentError("cannot slice a batch norm down to zero channels");
    return {slice(bn.gamma), slice(bn.beta), slice(bn.mean), slice(bn.sigma)};
}

namespace {

struct Site {
    std::size_t node = 0;
    std::optional<std::size_t> body; // set when inside a residual block body
};

enum class Absorb { FcPair, ConvPair, Boundary };

struct Route {
    Site layer;
    std::optional<Site> bn;
    Site target;
    Absorb kind = Absorb::FcPair;
    std::size_t height = 1;
    std::size_t width = 1;
};

std::size_t sequence_length(const Network& net, const Site& s) {
    if (!s.body) return net.nodes.size();
    return std::get<ResidualBlock>(net.nodes[s.node]).body.size();
}

// Layer at position k of the sequence containing s; nullptr for a residual block node.
const Layer* layer_at(const Network& net, const Site& s, std::size_t k) {
    if (!s.body) return std::get_if<Layer>(&net.nodes[k]);
    return &std::get<ResidualBlock>(net.nodes[s.node]).body[k];
}

Site with_index(const Site& s, std::size_t k) {
    return s.body ? Site{s.node, k} : Site{k, std::nullopt};
}

std::size_t index_of(const Site& s) { return s.body ? *s.body : s.node; }

Layer& mutable_layer(Network& net, const Site& s) {
    if (!s.body) return std::get<Layer>(net.nodes[s.node]);
    return std::get<ResidualBlock>(net.nodes[s.node]).body[*s.body];
}

enum class Placement { Missing, Shortcut, Found };

Placement locate(const Network& net, const std::string& name, Site& out) {
    for (std::size_t i = 0; i < net.nodes.size(); ++i) {
        if (const auto* layer = std::get_if<Layer>(&net.nodes[i])) {
            if (layer->name == name) {
                out = {i, std::nullopt};
                return Placement::Found;
            }
            continue;
        }
        const auto& block = std::get<ResidualBlock>(net.nodes[i]);
        for (std::size_t j = 0; j < block.body.size(); ++j)
            if (block.body[j].name == name) {
                out = {i, j};
                return Placement::Found;
            }
        for (const Layer& l : block.shortcut)
            if (l.name == name) return Placement::Shortcut;
    }
    return Placement::Missing;
}

Route resolve_route(const Network& net, const Site& site,
                    const std::map<std::string, Shape>& input_shapes) {
    const Layer& layer = *layer_at(net, site, index_of(site));
    auto fail = [&](const std::string& why) -> Route {
        throw ConfigError("layer '" + layer.name + "' cannot be merged: " + why);
    };
    if (!layer.has_weights()) return fail("only fully-connected and conv layers carry neurons");

    Route route;
    route.layer = site;
    const bool conv = layer.is<Conv2d>();
    bool flattened = false;
    const std::size_t length = sequence_length(net, site);
    for (std::size_t k = index_of(site) + 1;; ++k) {
        if (k >= length) {
            if (site.body)
                return fail("its output joins the shortcut of residual block '" +
                            std::get<ResidualBlock>(net.nodes[site.node]).name + "'");
            return fail("no weight layer follows it");
        }
        const Layer* next = layer_at(net, site, k);
        if (!next) return fail("a residual sum lies between it and the next weight layer");
        if (next->is<BatchNorm>()) {
            if (k != index_of(site) + 1 || flattened)
                return fail("batch norm '" + next->name + "' does not directly follow it");
            route.bn = with_index(site, k);
            continue;
        }
        if (next->is<ReLU>()) continue;
        if (next->is<MaxPool2d>() || next->is<AvgPool2d>()) {
            if (flattened) return fail("pooling after flatten is not supported");
            continue;
        }
        if (next->is<Flatten>()) {
            if (!conv || flattened) return fail("unexpected flatten '" + next->name + "'");
            const Shape& shape = input_shapes.at(next->name);
            if (shape.size() != 3) return fail("flatten '" + next->name + "' input is not a feature map");
            flattened = true;
            route.height = shape[1];
            route.width = shape[2];
            continue;
        }
        if (next->is<Output>()) return fail("it is the classifier");
        route.target = with_index(site, k);
        if (next->is<FullyConnected>()) {
            if (conv && !flattened) return fail("conv output reaches '" + next->name + "' without flatten");
            route.kind = flattened ? Absorb::Boundary : Absorb::FcPair;
        } else {
            if (!conv || flattened)
                return fail("cannot absorb into conv '" + next->name + "' from a vector layer");
            route.kind = Absorb::ConvPair;
        }
        return route;
    }
}

std::vector<Route> plan_routes(const Network& net, const MergeConfig& cfg) {
    require_valid(net);
    if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0))
        throw ConfigError("lambda must lie in [0, 1], got " + std::to_string(cfg.lambda));
    if (std::isnan(cfg.threshold)) throw ConfigError("threshold must be a number");
    const std::string classifier = classifier_name(net);
    const auto shapes = layer_input_shapes(net);

    std::vector<Route> routes;
    for (const auto& [name, ratio] : cfg.plan) {
        if (!(ratio >= 0.0 && ratio < 1.0))
            throw ConfigError("layer '" + name + "': pruning ratio must lie in [0, 1), got " +
                              std::to_string(ratio));
        if (name == classifier) throw ConfigError("layer '" + name + "' is the classifier and cannot be pruned");
        Site site;
        switch (locate(net, name, site)) {
        case Placement::Missing: throw ConfigError("plan names unknown layer '" + name + "'");
        case Placement::Shortcut:
            throw ConfigError("layer '" + name + "' lies on a residual shortcut and cannot be pruned");
        case Placement::Found: break;
        }
        routes.push_back(resolve_route(net, site, shapes));
    }
    // Network order: top-level node, then position inside a block body.
    std::sort(routes.begin(), routes.end(), [](const Route& a, const Route& b) {
        if (a.layer.node != b.layer.node) return a.layer.node < b.layer.node;
        return a.layer.body.value_or(0) < b.layer.body.value_or(0);
    });
    return routes;
}

} // namespace

std::vector<std::string> prunable_layers(const Network& net) {
    require_valid(net);
    const std::string classifier = classifier_name(net);
    const auto shapes = layer_input_shapes(net);
    std::vector<std::string> names;
    auto consider = [&](const Site& site) {
        const Layer* layer = layer_at(net, site, index_of(site));
        if (!layer || !layer->has_weights() || layer->name == classifier) return;
        try {
            resolve_route(net, site, shapes);
            names.push_back(layer->name);
        } catch (const ConfigError&) {
        }
    };
    for (std::size_t i = 0; i < net.nodes.size(); ++i) {
        if (std::holds_alternative<Layer>(net.nodes[i])) {
            consider({i, std::nullopt});
            continue;
        }
        const auto& block = std::get<ResidualBlock>(net.nodes[i]);
        for (std::size_t j = 0; j < block.body.size(); ++j) consider({i, j});
    }
    return names;
}

std::map<std::string, double> uniform_plan(const Network& net, double ratio) {
    std::map<std::string, double> plan;
    for (const auto& name : prunable_layers(net)) plan[name] = ratio;
    return plan;
}

void check_config(const Network& net, const MergeConfig& cfg) { plan_routes(net, cfg); }

std::pair<Network, MergeReport> apply(const Network& net, const MergeConfig& cfg) {
    const auto routes = plan_routes(net, cfg);
    Network out = net;
    MergeReport report;
    report.config = cfg;
    report.params_before = count_parameters(net);

    for (const Route& route : routes) {
        Layer& layer = mutable_layer(out, route.layer);
        const NeuronView view = NeuronView::of(layer);
        const double ratio = cfg.plan.at(layer.name);
        const auto keep =
            select_retained(score_neurons(view, cfg.criterion), keep_count(view.count(), ratio));

        std::optional<BnContext> bn;
        if (route.bn) bn = BnContext{mutable_layer(out, *route.bn).as<BatchNorm>(), cfg.lambda};
        const double threshold =
            cfg.mode == MergeMode::Prune ? std::numeric_limits<double>::infinity() : cfg.threshold;
        Decomposition d = decompose_layer(layer, keep, threshold, bn ? &*bn : nullptr);

        if (auto* fc = std::get_if<FullyConnected>(&layer.op)) {
            fc->weight = std::move(d.weight);
            fc->bias = std::move(d.bias);
        } else {
            layer.as<Conv2d>().weight = std::move(d.weight);
        }
        if (route.bn) {
            Layer& bn_layer = mutable_layer(out, *route.bn);
            bn_layer.as<BatchNorm>() = slice_bn(bn_layer.as<BatchNorm>(), keep);
        }

        Layer& target = mutable_layer(out, route.target);
        switch (route.kind) {
        case Absorb::FcPair: {
            auto& w = target.as<FullyConnected>().weight;
            w = merge_fc_pair(d.z, w);
            break;
        }
        case Absorb::ConvPair: {
            auto& w = target.as<Conv2d>().weight;
            w = merge_conv_pair(d.z, w);
            break;
        }
        case Absorb::Boundary: {
            auto& w = target.as<FullyConnected>().weight;
            w = merge_conv_fc_boundary(d.z, route.height, route.width, w);
            break;
        }
        }

        LayerMergeReport entry;
        entry.name = layer.name;
        entry.absorbed_into = target.name;
        entry.original = view.count();
        entry.retained = keep.size();
        entry.compensated = d.z.compensated_count();
        entry.bn_aware = bn.has_value();
        entry.retained_indices = keep;
        report.layers.push_back(std::move(entry));
        report.warnings.insert(report.warnings.end(), d.warnings.begin(), d.warnings.end());
    }

    require_valid(out);
    report.params_after = count_parameters(out);
    return {std::move(out), std::move(report)};
}

} // namespace neuromerge
