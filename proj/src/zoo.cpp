#include "neuromerge/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neuromerge/error.hpp"
#include "neuromerge/criteria.hpp"
#include "neuromerge/eval.hpp"

namespace neuromerge {

Tensor random_tensor(const Shape& shape, Rng& rng, double stddev) {
    std::normal_distribution<double> normal(0.0, stddev);
    Tensor t(shape);
    for (auto& v : t.storage()) v = static_cast<float>(normal(rng));
    return t;
}

namespace {

double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Layer fc_layer(const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng) {
    FullyConnected fc{random_tensor({in, out}, rng, std::sqrt(2.0 / double(in))), std::nullopt};
    if (bias) fc.bias = random_tensor({out}, rng, 0.05);
    return {name, fc};
}

Layer conv_layer(const std::string& name, std::size_t in, std::size_t out, std::size_t k,
                 std::size_t stride, std::size_t padding, Rng& rng) {
    return {name, Conv2d{random_tensor({out, in, k, k}, rng, std::sqrt(2.0 / double(in * k * k))),
                         stride, padding}};
}

Layer bn_layer(const std::string& name, std::size_t channels, Rng& rng) {
    BatchNorm bn{Tensor({channels}), Tensor({channels}), Tensor({channels}), Tensor({channels})};
    for (std::size_t c = 0; c < channels; ++c) {
        bn.gamma[c] = static_cast<float>(uniform(rng, 0.5, 1.5));
        bn.beta[c] = static_cast<float>(uniform(rng, -0.1, 0.1));
        bn.mean[c] = static_cast<float>(uniform(rng, -0.1, 0.1));
        bn.sigma[c] = static_cast<float>(uniform(rng, 0.5, 1.5));
    }
    return {name, bn};
}

Layer relu_layer(const std::string& name) { return {name, ReLU{}}; }

} // namespace

Network lenet300(Rng& rng) {
    Network net{{784}, {}};
    net.nodes.push_back(fc_layer("fc1", 784, 300, true, rng));
    net.nodes.push_back(relu_layer("relu1"));
    net.nodes.push_back(fc_layer("fc2", 300, 100, true, rng));
    net.nodes.push_back(relu_layer("relu2"));
    net.nodes.push_back(fc_layer("fc3", 100, 10, true, rng));
    net.nodes.push_back(Layer{"output", Output{}});
    return net;
}

Network vgg16_cifar(Rng& rng, std::size_t classes) {
    static constexpr int cfg[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0,
                                  512, 512, 512, 0, 512, 512, 512, 0};
    Network net{{3, 32, 32}, {}};
    std::size_t in = 3, conv = 0, pool = 0;
    for (int c : cfg) {
        if (c == 0) {
            net.nodes.push_back(Layer{"pool" + std::to_string(++pool), MaxPool2d{2, 2}});
            continue;
        }
        const std::string id = std::to_string(++conv);
        net.nodes.push_back(conv_layer("conv" + id, in, std::size_t(c), 3, 1, 1, rng));
        net.nodes.push_back(bn_layer("bn" + id, std::size_t(c), rng));
        net.nodes.push_back(relu_layer("relu" + id));
        in = std::size_t(c);
    }
    net.nodes.push_back(Layer{"flatten", Flatten{}});
    net.nodes.push_back(fc_layer("fc1", 512, 512, true, rng));
    net.nodes.push_back(relu_layer("relu_fc1"));
    net.nodes.push_back(fc_layer("fc2", 512, classes, true, rng));
    net.nodes.push_back(Layer{"output", Output{}});
    return net;
}

std::map<std::string, double> vgg16_plan() {
    std::map<std::string, double> plan{{"conv1", 0.5}};
    for (int i = 8; i <= 13; ++i) plan["conv" + std::to_string(i)] = 0.5;
    return plan;
}

Network resnet_cifar(std::size_t depth, std::size_t widen, Rng& rng, std::size_t classes) {
    if (depth < 8 || (depth - 2) % 6 != 0)
        throw ArgumentError("resnet depth must be 6n + 2, got " + std::to_string(depth));
    if (widen == 0) throw ArgumentError("widen factor must be positive");
    const std::size_t blocks = (depth - 2) / 6;
    Network net{{3, 32, 32}, {}};
    net.nodes.push_back(conv_layer("stem_conv", 3, 16, 3, 1, 1, rng));
    net.nodes.push_back(bn_layer("stem_bn", 16, rng));
    net.nodes.push_back(relu_layer("stem_relu"));
    std::size_t in = 16;
    for (std::size_t stage = 0; stage < 3; ++stage) {
        const std::size_t width = (16u << stage) * widen;
        for (std::size_t b = 0; b < blocks; ++b) {
            const std::size_t stride = (stage > 0 && b == 0) ? 2 : 1;
            const std::string id = "s" + std::to_string(stage + 1) + "b" + std::to_string(b + 1);
            ResidualBlock block{id, {}, {}};
            block.body.push_back(conv_layer(id + ".conv1", in, width, 3, stride, 1, rng));
            block.body.push_back(bn_layer(id + ".bn1", width, rng));
            block.body.push_back(relu_layer(id + ".relu1"));
            block.body.push_back(conv_layer(id + ".conv2", width, width, 3, 1, 1, rng));
            block.body.push_back(bn_layer(id + ".bn2", width, rng));
            if (stride != 1 || in != width) {
                block.shortcut.push_back(conv_layer(id + ".proj", in, width, 1, stride, 0, rng));
                block.shortcut.push_back(bn_layer(id + ".proj_bn", width, rng));
            }
            net.nodes.push_back(std::move(block));
            net.nodes.push_back(relu_layer(id + ".relu"));
            in = width;
        }
    }
    net.nodes.push_back(Layer{"pool", AvgPool2d{8, 8}});
    net.nodes.push_back(Layer{"flatten", Flatten{}});
    net.nodes.push_back(fc_layer("fc", in, classes, true, rng));
    net.nodes.push_back(Layer{"output", Output{}});
    return net;
}

Network random_network(Rng& rng) {
    Network net;
    std::size_t layer_id = 0;
    auto name = [&](const char* kind) { return std::string(kind) + std::to_string(++layer_id); };
    std::size_t features;
    if (pick(rng, 0, 1) == 0) {
        features = pick(rng, 4, 12);
        net.input_shape = {features};
    } else {
        std::size_t channels = pick(rng, 1, 3);
        std::size_t size = pick(rng, 6, 10);
        net.input_shape = {channels, size, size};
        const std::size_t convs = pick(rng, 1, 3);
        bool pooled = false;
        for (std::size_t i = 0; i < convs; ++i) {
            const std::size_t out = pick(rng, 2, 8);
            const std::size_t k = pick(rng, 0, 1) ? 3 : 1;
            net.nodes.push_back(conv_layer(name("conv"), channels, out, k, 1, k / 2, rng));
            if (pick(rng, 0, 3) != 0) net.nodes.push_back(bn_layer(name("bn"), out, rng));
            net.nodes.push_back(relu_layer(name("relu")));
            if (!pooled && size >= 4 && pick(rng, 0, 1)) {
                net.nodes.push_back(Layer{name("pool"), MaxPool2d{2, 2}});
                size /= 2;
                pooled = true;
            }
            channels = out;
        }
        net.nodes.push_back(Layer{name("flatten"), Flatten{}});
        features = channels * size * size;
    }
    const std::size_t hidden = pick(rng, 1, 2);
    for (std::size_t i = 0; i < hidden; ++i) {
        const std::size_t out = pick(rng, 4, 16);
        net.nodes.push_back(fc_layer(name("fc"), features, out, pick(rng, 0, 1) == 1, rng));
        if (pick(rng, 0, 3) == 0) net.nodes.push_back(bn_layer(name("bn"), out, rng));
        net.nodes.push_back(relu_layer(name("relu")));
        features = out;
    }
    net.nodes.push_back(fc_layer(name("fc"), features, pick(rng, 2, 5), true, rng));
    net.nodes.push_back(Layer{"output", Output{}});
    require_valid(net);
    return net;
}

namespace {

// Compensation entries of the scaling matrix the planted layer is expected to
// produce: copy `col` folded onto donor row `row` with `scale`.
struct PlantedZ {
    std::size_t rows = 0;
    std::vector<std::ptrdiff_t> row_of; // original neuron -> retained row
    std::vector<double> scale;          // original neuron -> scale (1 for donors)
};

struct PlantedLayer {
    std::vector<float> vectors; // count x length
    std::vector<std::size_t> donors;
    std::vector<std::size_t> donor_of; // original neuron -> its donor
    std::vector<double> ratio;         // copy = ratio * donor (+ noise)
};

// L1 norm of a neuron vector after the previous planted layer's Z has been
// absorbed into it. The vector is `block` entries per previous neuron followed
// by `tail` extra entries (a bias).
double merged_l1(std::span<const float> v, const PlantedZ* prev, std::size_t block, std::size_t tail) {
    double total = 0.0;
    const std::size_t body = v.size() - tail;
    if (!prev) {
        for (float x : v) total += std::fabs(double(x));
        return total;
    }
    std::vector<double> merged(prev->rows * block, 0.0);
    for (std::size_t n = 0; n < body / block; ++n) {
        if (prev->row_of[n] < 0) continue;
        for (std::size_t b = 0; b < block; ++b)
            merged[std::size_t(prev->row_of[n]) * block + b] += prev->scale[n] * v[n * block + b];
    }
    for (double x : merged) total += std::fabs(x);
    for (std::size_t i = body; i < v.size(); ++i) total += std::fabs(double(v[i]));
    return total;
}

PlantedLayer plant(std::size_t count, std::size_t length, double donor_lo, double donor_hi,
                   double ratio_lo, double ratio_hi, double noise, Rng& rng, const PlantedZ* prev,
                   std::size_t block, std::size_t tail) {
    PlantedLayer out;
    out.vectors.assign(count * length, 0.0f);
    out.donor_of.assign(count, 0);
    out.ratio.assign(count, 1.0);

    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t keep = keep_count(count, 0.5);
    out.donors.assign(order.begin(), order.begin() + std::ptrdiff_t(keep));
    std::sort(out.donors.begin(), out.donors.end());

    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t d : out.donors) {
        std::span<float> v(out.vectors.data() + d * length, length);
        for (auto& x : v) x = static_cast<float>(normal(rng));
        const double factor = uniform(rng, donor_lo, donor_hi) / merged_l1(v, prev, block, tail);
        for (auto& x : v) x = static_cast<float>(x * factor);
        out.donor_of[d] = d;
    }
    for (std::size_t k = keep; k < count; ++k) {
        const std::size_t n = order[k];
        const std::size_t d = out.donors[pick(rng, 0, keep - 1)];
        const double c = uniform(rng, ratio_lo, ratio_hi);
        out.donor_of[n] = d;
        out.ratio[n] = c;
        std::span<const float> src(out.vectors.data() + d * length, length);
        std::vector<double> jitter(length, 0.0);
        if (noise > 0.0) {
            double norm2 = 0.0;
            for (auto& j : jitter) {
                j = normal(rng);
                norm2 += j * j;
            }
            const double amount = noise * c * l2_norm(src) / std::sqrt(norm2);
            for (auto& j : jitter) j *= amount;
        }
        for (std::size_t i = 0; i < length; ++i)
            out.vectors[n * length + i] = static_cast<float>(c * double(src[i]) + jitter[i]);
    }
    return out;
}

PlantedZ expected_z(const PlantedLayer& layer, const BatchNorm* bn) {
    PlantedZ z;
    z.rows = layer.donors.size();
    z.row_of.assign(layer.donor_of.size(), -1);
    z.scale.assign(layer.donor_of.size(), 1.0);
    for (std::size_t n = 0; n < layer.donor_of.size(); ++n) {
        const std::size_t d = layer.donor_of[n];
        const auto row = std::lower_bound(layer.donors.begin(), layer.donors.end(), d) - layer.donors.begin();
        z.row_of[n] = row;
        double s = layer.ratio[n];
        if (bn && n != d)
            s *= (double(bn->gamma[n]) / bn->gamma[d]) * (double(bn->sigma[d]) / bn->sigma[n]);
        z.scale[n] = s;
    }
    return z;
}

// BN whose copy channels satisfy a zero offset in the BN relation to their donor.
BatchNorm planted_bn(const PlantedLayer& layer, Rng& rng) {
    const std::size_t channels = layer.donor_of.size();
    BatchNorm bn{Tensor({channels}), Tensor({channels}), Tensor({channels}), Tensor({channels})};
    for (std::size_t c = 0; c < channels; ++c) {
        bn.gamma[c] = static_cast<float>(uniform(rng, 0.5, 1.5));
        bn.sigma[c] = static_cast<float>(uniform(rng, 0.5, 1.5));
        bn.mean[c] = static_cast<float>(uniform(rng, -0.2, 0.2));
        bn.beta[c] = static_cast<float>(uniform(rng, -0.2, 0.2));
    }
    for (std::size_t n = 0; n < channels; ++n) {
        const std::size_t d = layer.donor_of[n];
        if (d == n) continue;
        const double g1 = bn.gamma[d], b1 = bn.beta[d], m1 = bn.mean[d], s1 = bn.sigma[d];
        const double g2 = bn.gamma[n], m2 = bn.mean[n], s2 = bn.sigma[n];
        bn.beta[n] = static_cast<float>(-(g2 / s2) * (layer.ratio[n] * (m1 - s1 * b1 / g1) - m2));
    }
    return bn;
}

} // namespace

PlantedFixture planted_fc(std::uint64_t seed, double noise) {
    Rng rng(seed);
    PlantedFixture fx;
    fx.net.input_shape = {16};

    const PlantedLayer l1 = plant(32, 17, 2.0, 3.0, 0.3, 0.6, noise, rng, nullptr, 1, 1);
    const PlantedZ z1 = expected_z(l1, nullptr);
    const PlantedLayer l2 = plant(24, 33, 2.0, 3.0, 0.3, 0.6, noise, rng, &z1, 1, 1);

    auto to_fc = [](const PlantedLayer& p, std::size_t in, std::size_t out) {
        FullyConnected fc{Tensor({in, out}), Tensor({out})};
        for (std::size_t j = 0; j < out; ++j) {
            for (std::size_t i = 0; i < in; ++i) fc.weight.at(i, j) = p.vectors[j * (in + 1) + i];
            (*fc.bias)[j] = p.vectors[j * (in + 1) + in];
        }
        return fc;
    };
    fx.net.nodes.push_back(Layer{"fc1", to_fc(l1, 16, 32)});
    fx.net.nodes.push_back(relu_layer("relu1"));
    fx.net.nodes.push_back(Layer{"fc2", to_fc(l2, 32, 24)});
    fx.net.nodes.push_back(relu_layer("relu2"));
    fx.net.nodes.push_back(fc_layer("fc3", 24, 10, true, rng));
    fx.net.nodes.push_back(Layer{"output", Output{}});
    fx.plan = {{"fc1", 0.5}, {"fc2", 0.5}};
    fx.donors = {{"fc1", l1.donors}, {"fc2", l2.donors}};
    require_valid(fx.net);
    return fx;
}

PlantedFixture planted_conv(std::uint64_t seed, double noise) {
    Rng rng(seed);
    PlantedFixture fx;
    fx.net.input_shape = {3, 8, 8};

    struct Stage {
        std::size_t in, out;
        bool pool_after;
    };
    const Stage stages[] = {{3, 16, false}, {16, 16, true}, {16, 32, false}, {32, 32, false}};
    std::optional<PlantedZ> prev;
    int id = 0;
    for (const Stage& st : stages) {
        ++id;
        const std::string conv = "conv" + std::to_string(id);
        const PlantedLayer p = plant(st.out, st.in * 9, 4.0, 5.0, 0.25, 0.5, noise, rng,
                                     prev ? &*prev : nullptr, 9, 0);
        const BatchNorm bn = planted_bn(p, rng);
        fx.net.nodes.push_back(Layer{conv, Conv2d{Tensor({st.out, st.in, 3, 3}, p.vectors), 1, 1}});
        fx.net.nodes.push_back(Layer{"bn" + std::to_string(id), bn});
        fx.net.nodes.push_back(relu_layer("relu" + std::to_string(id)));
        if (st.pool_after) fx.net.nodes.push_back(Layer{"pool" + std::to_string(id), MaxPool2d{2, 2}});
        fx.plan[conv] = 0.5;
        fx.donors[conv] = p.donors;
        prev = expected_z(p, &bn);
    }
    fx.net.nodes.push_back(Layer{"flatten", Flatten{}});
    fx.net.nodes.push_back(fc_layer("fc", 32 * 4 * 4, 10, true, rng));
    fx.net.nodes.push_back(Layer{"output", Output{}});
    require_valid(fx.net);
    return fx;
}

Dataset self_labelled_dataset(const Network& net, std::size_t samples, Rng& rng) {
    Dataset data;
    data.input_shape = net.input_shape;
    data.inputs.reserve(samples);
    for (std::size_t m = 0; m < samples; ++m) data.inputs.push_back(random_tensor(net.input_shape, rng));
    data.labels.assign(samples, 0);
    for (std::size_t m = 0; m < samples; ++m) {
        const Tensor logits = forward(net, data.inputs[m]).logits;
        data.class_count = logits.size();
        data.labels[m] = static_cast<std::uint32_t>(argmax(logits));
    }
    return data;
}

} // namespace neuromerge
