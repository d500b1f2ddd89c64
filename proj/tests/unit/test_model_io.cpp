#include <doctest.h>

#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "neuromerge/error.hpp"
#include "neuromerge/io.hpp"
#include "neuromerge/model.hpp"
#include "neuromerge/zoo.hpp"
#include "../support/helpers.hpp"

using namespace neuromerge;
namespace fs = std::filesystem;

namespace {

Layer fc(const std::string& name, std::size_t in, std::size_t out) {
    return {name, FullyConnected{Tensor({in, out}, 0.5f), Tensor({out}, 0.1f)}};
}

Layer output() { return {"output", Output{}}; }

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

BatchNorm identity_bn(std::size_t c) {
    return {Tensor({c}, 1.0f), Tensor({c}, 0.0f), Tensor({c}, 0.0f), Tensor({c}, 1.0f)};
}

} // namespace

TEST_CASE("validate: chaining examples") {
    CHECK(validate(Network{{10}, {fc("a", 10, 5), fc("b", 5, 2), output()}}).empty());
    const auto bad = validate(Network{{10}, {fc("a", 10, 5), fc("b", 6, 2), output()}});
    REQUIRE(bad.size() == 1);
    CHECK(bad[0].find("'b'") != std::string::npos);
}

TEST_CASE("validate: residual body changing channels with identity shortcut") {
    ResidualBlock block{"block", {}, {}};
    block.body.push_back({"conv", Conv2d{Tensor({4, 2, 3, 3}), 1, 1}});
    Network net{{2, 5, 5},
                {Node{block}, Node{Layer{"flatten", Flatten{}}}, Node{fc("head", 100, 3)}, Node{output()}}};
    const auto diags = validate(net);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].find("block") != std::string::npos);
}

TEST_CASE("validate: structural rules") {
    SUBCASE("batch-norm sigma must be positive") {
        BatchNorm bn = identity_bn(5);
        bn.sigma[2] = 0.0f;
        CHECK(validate(Network{{10}, {fc("a", 10, 5), Layer{"bn", bn}, fc("b", 5, 2), output()}}).size() == 1);
    }
    SUBCASE("batch-norm channel count") {
        CHECK(validate(Network{{10}, {fc("a", 10, 5), Layer{"bn", identity_bn(4)}, fc("b", 5, 2), output()}})
                  .size() == 1);
    }
    SUBCASE("missing output marker") {
        CHECK(validate(Network{{10}, {fc("a", 10, 5)}}).size() == 1);
    }
    SUBCASE("output must follow a weight layer") {
        CHECK_FALSE(validate(Network{{10}, {fc("a", 10, 5), Layer{"r", ReLU{}}, output()}}).empty());
    }
    SUBCASE("duplicate names") {
        CHECK(validate(Network{{10}, {fc("a", 10, 5), fc("a", 5, 2), output()}}).size() == 1);
    }
    SUBCASE("unsafe names") {
        CHECK(validate(Network{{10}, {fc("a/b", 10, 2), output()}}).size() == 1);
    }
    SUBCASE("fc bias length") {
        Layer l = fc("a", 10, 2);
        l.as<FullyConnected>().bias = Tensor({3});
        CHECK(validate(Network{{10}, {l, output()}}).size() == 1);
    }
    SUBCASE("conv channel mismatch") {
        Network net{{3, 4, 4},
                    {Layer{"c", Conv2d{Tensor({2, 2, 3, 3}), 1, 0}}, Layer{"f", Flatten{}}, fc("h", 8, 2), output()}};
        CHECK(validate(net).size() == 1);
    }
    SUBCASE("shortcut layers are conv or batch norm") {
        ResidualBlock block{"blk", {Layer{"r", ReLU{}}}, {Layer{"s", ReLU{}}}};
        Network net{{4}, {Node{block}, Node{fc("h", 4, 2)}, Node{output()}}};
        CHECK(validate(net).size() == 1);
    }
}

TEST_CASE("require_valid throws with every diagnostic") {
    try {
        require_valid(Network{{10}, {fc("a", 10, 5), fc("a", 6, 2)}});
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.diagnostics().size() == 3);
    }
}

TEST_CASE("parameter counts") {
    Rng rng(0);
    const Network lenet = lenet300(rng);
    CHECK(count_parameters(lenet) == 784 * 300 + 300 + 300 * 100 + 100 + 100 * 10 + 10);
    CHECK(classifier_name(lenet) == "fc3");
    Layer bn{"bn", identity_bn(7)};
    CHECK(count_parameters(bn) == 14);
}

TEST_CASE("round trip keeps networks bitwise equal") {
    Rng rng(42);
    testing::TempDir dir("roundtrip");
    for (int trial = 0; trial < 25; ++trial) {
        const Network net = random_network(rng);
        const fs::path path = dir / ("net" + std::to_string(trial));
        save_model(net, path);
        const Network back = load_model(path);
        CHECK(bitwise_equal(net, back));
        CHECK(net == back);
    }
    const Network res = resnet_cifar(8, 1, rng);
    save_model(res, dir / "resnet");
    CHECK(bitwise_equal(res, load_model(dir / "resnet")));
}

TEST_CASE("round trip preserves signed zeros and odd floats") {
    Network net{{3}, {Layer{"a", FullyConnected{Tensor({3, 2}, {-0.0f, 1e-40f, 3.4e38f, -1.5f, 0.0f, 2.0f}),
                                               std::nullopt}},
                      output()}};
    testing::TempDir dir("zeros");
    save_model(net, dir.path());
    CHECK(bitwise_equal(net, load_model(dir.path())));
}

TEST_CASE("saving twice gives byte-identical directories") {
    Rng rng(7);
    const Network net = random_network(rng);
    testing::TempDir dir("determinism");
    save_model(net, dir / "a");
    save_model(net, dir / "b");
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        ++files;
        CHECK(slurp(entry.path()) == slurp(dir / "b" / entry.path().filename()));
    }
    CHECK(files == static_cast<std::size_t>(std::distance(fs::directory_iterator(dir / "b"), {})));
    const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(manifest["format_version"] == "neuromerge-v1");
}

TEST_CASE("load errors name the offending layer") {
    Network net{{4}, {fc("first", 4, 3), Layer{"act", ReLU{}}, fc("second", 3, 2), output()}};
    testing::TempDir dir("errors");

    SUBCASE("wrong blob byte length") {
        save_model(net, dir.path());
        fs::resize_file(dir / "second.weight.bin", 8);
        try {
            load_model(dir.path());
            FAIL("expected ShapeError");
        } catch (const ShapeError& e) {
            CHECK(std::string(e.what()).find("second") != std::string::npos);
        }
    }
    SUBCASE("missing blob") {
        save_model(net, dir.path());
        fs::remove(dir / "first.bias.bin");
        try {
            load_model(dir.path());
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("first") != std::string::npos);
        }
    }
    SUBCASE("unknown layer kind") {
        save_model(net, dir.path());
        auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
        manifest["layers"][1]["kind"] = "gelu";
        std::ofstream(dir / "manifest.json") << manifest.dump();
        try {
            load_model(dir.path());
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("act") != std::string::npos);
        }
    }
    SUBCASE("broken shape chain") {
        save_model(net, dir.path());
        auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
        manifest["input_shape"] = {5};
        std::ofstream(dir / "manifest.json") << manifest.dump();
        CHECK_THROWS_AS(load_model(dir.path()), ValidationError);
    }
    SUBCASE("zero sigma") {
        Network with_bn{{4}, {fc("first", 4, 3), Layer{"bn", identity_bn(3)}, fc("second", 3, 2), output()}};
        save_model(with_bn, dir.path());
        std::ofstream(dir / "bn.sigma.bin", std::ios::binary | std::ios::trunc)
            .write(std::string(12, '\0').data(), 12);
        CHECK_THROWS_AS(load_model(dir.path()), ValidationError);
    }
    SUBCASE("bad format version") {
        save_model(net, dir.path());
        auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
        manifest["format_version"] = "neuromerge-v0";
        std::ofstream(dir / "manifest.json") << manifest.dump();
        CHECK_THROWS_AS(load_model(dir.path()), FormatError);
    }
    SUBCASE("missing manifest") {
        CHECK_THROWS_AS(load_model(dir / "nothing-here"), IoError);
    }
}

TEST_CASE("saving an invalid network or to an unwritable place fails") {
    testing::TempDir dir("unwritable");
    CHECK_THROWS_AS(save_model(Network{{4}, {fc("a", 4, 3)}}, dir / "x"), ValidationError);
    std::ofstream(dir / "file") << "not a directory";
    Network net{{4}, {fc("a", 4, 3), output()}};
    try {
        save_model(net, dir / "file" / "model");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("file") != std::string::npos);
    }
}

TEST_CASE("dataset round trip and checks") {
    Rng rng(3);
    const Network net = random_network(rng);
    Dataset data = self_labelled_dataset(net, 12, rng);
    testing::TempDir dir("dataset");
    save_dataset(data, dir.path());
    const Dataset back = load_dataset(dir.path());
    CHECK(back.input_shape == data.input_shape);
    CHECK(back.class_count == data.class_count);
    CHECK(back.labels == data.labels);
    REQUIRE(back.size() == data.size());
    for (std::size_t m = 0; m < data.size(); ++m) CHECK(back.inputs[m].bitwise_equal(data.inputs[m]));
    CHECK(fs::file_size(dir / "labels.bin") == 12 * 4);

    data.labels[0] = static_cast<std::uint32_t>(data.class_count);
    CHECK_THROWS_AS(check_dataset(data), ValidationError);
    data.labels[0] = 0;
    data.inputs[1] = Tensor({1});
    CHECK_THROWS_AS(check_dataset(data), ValidationError);

    fs::resize_file(dir / "inputs.bin", 4);
    CHECK_THROWS_AS(load_dataset(dir.path()), ShapeError);
}

TEST_CASE("tensor files carry a shape sidecar") {
    Rng rng(1);
    const Tensor t = random_tensor({3, 4, 5}, rng);
    testing::TempDir dir("tensorfile");
    write_tensor_file(t, dir / "t.bin", "layer");
    CHECK(fs::exists(dir / "t.bin.json"));
    CHECK(read_tensor_file(dir / "t.bin").bitwise_equal(t));
    CHECK(fs::file_size(dir / "t.bin") == 60 * 4);
}
