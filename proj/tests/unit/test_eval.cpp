#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "neuromerge/error.hpp"
#include "neuromerge/eval.hpp"
#include "neuromerge/io.hpp"
#include "neuromerge/merge.hpp"
#include "neuromerge/parallel.hpp"
#include "neuromerge/zoo.hpp"
#include "../support/helpers.hpp"
#include "../support/oracles.hpp"

using namespace neuromerge;

namespace {

Network single_fc(Tensor weight) {
    const std::size_t in = weight.dim(0);
    return Network{{in}, {Layer{"a", FullyConnected{std::move(weight), std::nullopt}}, Layer{"output", Output{}}}};
}

Dataset scalar_data(std::vector<float> values, std::size_t classes = 2) {
    Dataset d{{1}, classes, {}, {}};
    for (float v : values) {
        d.inputs.push_back(Tensor::vector({v}));
        d.labels.push_back(0);
    }
    return d;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

TEST_CASE("forward examples") {
    const Network id = single_fc(Tensor::matrix({{1, 0}, {0, 1}}));
    CHECK(forward(id, Tensor::vector({3, -2})).logits == Tensor::vector({3, -2}));

    BatchNorm bn{Tensor({2}, 1.0f), Tensor({2}), Tensor({2}), Tensor({2}, 1.0f)};
    Tensor w({2, 2, 1, 1});
    w.at(0, 0, 0, 0) = 1;
    w.at(1, 1, 0, 0) = 1;
    Tensor eye({8, 8});
    for (std::size_t i = 0; i < 8; ++i) eye.at(i, i) = 1;
    Network conv{{2, 2, 2},
                 {Layer{"c", Conv2d{w, 1, 0}}, Layer{"bn", bn}, Layer{"r", ReLU{}}, Layer{"flatten", Flatten{}},
                  Layer{"fc", FullyConnected{eye, std::nullopt}}, Layer{"output", Output{}}}};
    const Tensor x({2, 2, 2}, {1, -1, 2, -2, 3, -3, 4, -4});
    CHECK(forward(conv, x).logits == Tensor::vector({1, 0, 2, 0, 3, 0, 4, 0}));
    const std::vector<std::string> taps{"c", "r"};
    const auto r = forward(conv, x, taps);
    CHECK(r.taps.at("c") == x);
    CHECK(r.taps.at("r").shape() == Shape{2, 2, 2});

    Rng rng(0);
    const Network lenet = lenet300(rng);
    CHECK(forward(lenet, random_tensor({784}, rng)).logits.shape() == Shape{10});
    CHECK_THROWS_AS(forward(lenet, Tensor({783})), ShapeError);
    const std::vector<std::string> unknown{"nope"};
    CHECK_THROWS_AS(forward(lenet, Tensor({784}), unknown), ArgumentError);
}

TEST_CASE("forward agrees with the naive pass") {
    Rng rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        const Network net = random_network(rng);
        const Tensor x = random_tensor(net.input_shape, rng);
        CHECK(oracle::rel_error(forward(net, x).logits, oracle::forward(net, x)) < 1e-5);
    }
    for (std::size_t depth : {8, 20}) {
        const Network res = resnet_cifar(depth, 1, rng);
        const Tensor x = random_tensor(res.input_shape, rng);
        CHECK(oracle::rel_error(forward(res, x).logits, oracle::forward(res, x)) < 1e-5);
    }
}

TEST_CASE("forward is deterministic across thread counts") {
    Rng rng(2);
    const Network res = resnet_cifar(8, 1, rng);
    const Tensor x = random_tensor(res.input_shape, rng);
    set_thread_limit(1);
    const Tensor a = forward(res, x).logits;
    set_thread_limit(4);
    const Tensor b = forward(res, x).logits;
    set_thread_limit(0);
    CHECK(a.bitwise_equal(b));
    CHECK(a.bitwise_equal(forward(res, x).logits));
}

TEST_CASE("argmax and accuracy") {
    CHECK(argmax(Tensor::vector({1, 3, 3, 2})) == 1);
    CHECK(argmax(Tensor::vector({-1})) == 0);

    // One-hot inputs through an identity classifier predict their own index.
    Network id = single_fc(Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
    Dataset data{{3}, 3, {}, {}};
    for (std::uint32_t c = 0; c < 3; ++c) {
        Tensor x({3});
        x[c] = 1;
        data.inputs.push_back(x);
        data.labels.push_back(c);
    }
    set_thread_limit(2);
    CHECK(accuracy(id, data) == 1.0);
    for (auto& l : data.labels) l = (l + 1) % 3;
    CHECK(accuracy(id, data) == 0.0);
    set_thread_limit(0);
    data.labels[0] = 0;
    CHECK(accuracy(id, data) == doctest::Approx(1.0 / 3));
    CHECK_THROWS_AS(accuracy(id, Dataset{{3}, 3, {}, {}}), ArgumentError);
}

TEST_CASE("self-labelled data scores full accuracy on its own network") {
    Rng rng(3);
    const Network net = random_network(rng);
    const Dataset data = self_labelled_dataset(net, 40, rng);
    CHECK(accuracy(net, data) == 1.0);
}

TEST_CASE("ware examples") {
    const Network orig = single_fc(Tensor::matrix({{2}}));
    const Network comp = single_fc(Tensor::matrix({{1}}));
    const Dataset one = scalar_data({1});
    CHECK(ware(orig, comp, one, "a") == doctest::Approx(0.5));
    CHECK(ware(orig, orig, one, "a") == 0.0);

    // The zero original response is skipped; the other term is |2 - 1| / 1.
    const Network skip_orig = single_fc(Tensor::matrix({{0, 1}}));
    const Network skip_comp = single_fc(Tensor::matrix({{5, 2}}));
    CHECK(ware(skip_orig, skip_comp, one, "a") == doctest::Approx(1.0));

    // A sample whose responses are all zero drops out of the mean.
    CHECK(ware(orig, comp, scalar_data({0, 1}), "a") == doctest::Approx(0.5));
    CHECK_THROWS_AS(ware(orig, comp, scalar_data({0, 0}), "a"), DegenerateError);
    CHECK_THROWS_AS(ware(orig, comp, Dataset{{1}, 2, {}, {}}, "a"), ArgumentError);
    CHECK_THROWS_AS(ware(skip_orig, comp, one, "a"), ShapeError);

    // Retained indices map compressed response i to original response retained[i].
    const std::vector<std::size_t> keep{1};
    const Network narrowed = single_fc(Tensor::matrix({{1}}));
    CHECK(ware(skip_orig, narrowed, one, "a", keep) == 0.0);
}

TEST_CASE("tap sources and retained indices") {
    Rng rng(4);
    const Network vgg = vgg16_cifar(rng);
    CHECK(final_response_layer(vgg) == "relu_fc1");
    const auto src = tap_source(vgg, "relu_fc1");
    REQUIRE(src);
    CHECK(src->layer == "fc1");
    CHECK(src->spatial == 1);
    const auto flat = tap_source(vgg, "flatten");
    REQUIRE(flat);
    CHECK(flat->layer == "conv13");
    CHECK(flat->spatial == 1);

    const PlantedFixture fx = planted_conv(0);
    const auto boundary = tap_source(fx.net, "flatten");
    REQUIRE(boundary);
    CHECK(boundary->layer == "conv4");
    CHECK(boundary->spatial == 16);
    CHECK(tap_indices(*boundary, std::vector<std::size_t>{0, 2}) ==
          std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15,
                                   32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47});

    const std::map<std::string, std::vector<std::size_t>> retained{{"conv4", {1, 3}}};
    CHECK(tap_retained_indices(fx.net, "flatten", retained).size() == 32);
    CHECK(tap_retained_indices(fx.net, "fc", retained).empty());
    CHECK(tap_retained_indices(fx.net, "bn1", retained).empty());
    CHECK_FALSE(tap_source(fx.net, "missing"));
}

TEST_CASE("merged models track the original more closely than pruned ones") {
    std::vector<double> merged_ware, pruned_ware, merged_acc, pruned_acc;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const PlantedFixture fx = planted_fc(seed, 0.05);
        Rng rng(seed + 100);
        const Dataset data = self_labelled_dataset(fx.net, 100, rng);
        MergeConfig cfg{Criterion::L1Norm, fx.plan};
        const auto [merged, mr] = apply(fx.net, cfg);
        cfg.mode = MergeMode::Prune;
        const auto [pruned, pr] = apply(fx.net, cfg);
        const std::string tap = final_response_layer(fx.net);
        std::map<std::string, std::vector<std::size_t>> retained;
        for (const auto& l : mr.layers) retained[l.name] = l.retained_indices;
        const auto idx = tap_retained_indices(fx.net, tap, retained);
        CHECK_FALSE(idx.empty());
        merged_ware.push_back(ware(fx.net, merged, data, tap, idx));
        pruned_ware.push_back(ware(fx.net, pruned, data, tap, idx));
        merged_acc.push_back(accuracy(merged, data));
        pruned_acc.push_back(accuracy(pruned, data));
    }
    CHECK(median(merged_ware) < median(pruned_ware));
    CHECK(median(merged_acc) >= median(pruned_acc));
}

TEST_CASE("feature map dumps") {
    Rng rng(5);
    const PlantedFixture fx = planted_conv(1);
    const Tensor x = random_tensor(fx.net.input_shape, rng);
    testing::TempDir dir("dump");
    dump_feature_maps(fx.net, x, "relu2", dir / "a.bin");
    dump_feature_maps(fx.net, x, "relu2", dir / "b.bin");
    const std::vector<std::string> taps{"relu2"};
    const Tensor a = read_tensor_file(dir / "a.bin");
    CHECK(a.bitwise_equal(forward(fx.net, x, taps).taps.at("relu2")));
    CHECK(a.bitwise_equal(read_tensor_file(dir / "b.bin")));
    CHECK_THROWS_AS(dump_feature_maps(fx.net, x, "fc", dir / "c.bin"), ShapeError);
    CHECK_THROWS_AS(dump_feature_maps(fx.net, x, "nope", dir / "d.bin"), ArgumentError);
}
