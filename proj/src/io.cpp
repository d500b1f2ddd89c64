#include "neuromerge/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <system_error>

#include <nlohmann/json.hpp>

#include "neuromerge/error.hpp"

namespace neuromerge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(sizeof(float) == 4 && sizeof(std::uint32_t) == 4);

template <class T>
void to_little_endian(std::vector<T>& values) {
    if constexpr (std::endian::native == std::endian::big) {
        for (T& v : values) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) |
                   (bits >> 24);
            std::memcpy(&v, &bits, 4);
        }
    }
}

template <class T>
void write_words(std::vector<T> values, const fs::path& file) {
    to_little_endian(values);
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + file.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * 4));
    if (!out) throw IoError("write failed for '" + file.string() + "'");
}

std::vector<char> read_bytes(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open '" + file.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <class T>
std::vector<T> words_from_bytes(const std::vector<char>& bytes) {
    std::vector<T> values(bytes.size() / 4);
    std::memcpy(values.data(), bytes.data(), values.size() * 4);
    to_little_endian(values);
    return values;
}

void write_text(const std::string& text, const fs::path& file) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + file.string() + "' for writing");
    out << text;
    if (!out) throw IoError("write failed for '" + file.string() + "'");
}

json read_json(const fs::path& file) {
    const auto bytes = read_bytes(file);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw FormatError("'" + file.string() + "' is not valid JSON: " + e.what());
    }
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw IoError("cannot create directory '" + dir.string() + "'" +
                      (ec ? ": " + ec.message() : std::string{}));
}

Shape shape_from_json(const json& j, const std::string& context) {
    if (!j.is_array() || j.empty() || j.size() > 4)
        throw FormatError(context + ": shape must be an array of 1..4 positive integers");
    Shape shape;
    for (const auto& d : j) {
        if (!d.is_number_unsigned() || d.get<std::size_t>() == 0)
            throw FormatError(context + ": shape must be an array of 1..4 positive integers");
        shape.push_back(d.get<std::size_t>());
    }
    return shape;
}

// -- model manifest ---------------------------------------------------------

class ModelWriter {
public:
    explicit ModelWriter(fs::path dir) : dir_(std::move(dir)) {}

    json tensor(const std::string& layer, const std::string& field, const Tensor& t) {
        const std::string blob = layer + "." + field + ".bin";
        write_blob(t, dir_ / blob);
        return {{"blob", blob}, {"shape", t.shape()}};
    }

    json layer(const Layer& layer) {
        json j{{"name", layer.name}, {"kind", std::string(kind_name(layer.op))}};
        if (const auto* fc = std::get_if<FullyConnected>(&layer.op)) {
            j["weight"] = tensor(layer.name, "weight", fc->weight);
            if (fc->bias) j["bias"] = tensor(layer.name, "bias", *fc->bias);
        } else if (const auto* conv = std::get_if<Conv2d>(&layer.op)) {
            j["weight"] = tensor(layer.name, "weight", conv->weight);
            j["stride"] = conv->stride;
            j["padding"] = conv->padding;
        } else if (const auto* bn = std::get_if<BatchNorm>(&layer.op)) {
            j["gamma"] = tensor(layer.name, "gamma", bn->gamma);
            j["beta"] = tensor(layer.name, "beta", bn->beta);
            j["mean"] = tensor(layer.name, "mean", bn->mean);
            j["sigma"] = tensor(layer.name, "sigma", bn->sigma);
        } else if (const auto* pool = std::get_if<MaxPool2d>(&layer.op)) {
            j["kernel"] = pool->kernel;
            j["stride"] = pool->stride;
        } else if (const auto* pool = std::get_if<AvgPool2d>(&layer.op)) {
            j["kernel"] = pool->kernel;
            j["stride"] = pool->stride;
        }
        return j;
    }

    json layers(const std::vector<Layer>& layers) {
        json arr = json::array();
        for (const Layer& l : layers) arr.push_back(layer(l));
        return arr;
    }

private:
    fs::path dir_;
};

class ModelReader {
public:
    explicit ModelReader(fs::path dir) : dir_(std::move(dir)) {}

    Tensor tensor(const json& j, const std::string& layer, const std::string& field) {
        const std::string context = "layer '" + layer + "' " + field;
        if (!j.contains(field) || !j[field].is_object())
            throw FormatError(context + ": missing tensor entry");
        const json& t = j[field];
        if (!t.contains("blob") || !t["blob"].is_string())
            throw FormatError(context + ": missing blob filename");
        const Shape shape = shape_from_json(t.value("shape", json()), context);
        const fs::path file = dir_ / t["blob"].get<std::string>();
        if (!fs::is_regular_file(file))
            throw FormatError(context + ": missing blob '" + file.string() + "'");
        try {
            return read_blob(file, shape);
        } catch (const ShapeError& e) {
            throw ShapeError(context + ": " + e.what());
        }
    }

    static std::size_t count(const json& j, const std::string& layer, const char* key,
                             std::size_t fallback) {
        if (!j.contains(key)) return fallback;
        if (!j[key].is_number_unsigned())
            throw FormatError("layer '" + layer + "': '" + key + "' must be a non-negative integer");
        return j[key].get<std::size_t>();
    }

    Layer layer(const json& j) {
        if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
            throw FormatError("manifest layer entry without a name");
        Layer l;
        l.name = j["name"].get<std::string>();
        const std::string kind = j.value("kind", std::string{});
        if (kind == "fully_connected") {
            FullyConnected fc{tensor(j, l.name, "weight"), std::nullopt};
            if (j.contains("bias")) fc.bias = tensor(j, l.name, "bias");
            l.op = std::move(fc);
        } else if (kind == "conv2d") {
            l.op = Conv2d{tensor(j, l.name, "weight"), count(j, l.name, "stride", 1),
                          count(j, l.name, "padding", 0)};
        } else if (kind == "batch_norm") {
            l.op = BatchNorm{tensor(j, l.name, "gamma"), tensor(j, l.name, "beta"),
                             tensor(j, l.name, "mean"), tensor(j, l.name, "sigma")};
        } else if (kind == "relu") {
            l.op = ReLU{};
        } else if (kind == "max_pool2d") {
            l.op = MaxPool2d{count(j, l.name, "kernel", 2), count(j, l.name, "stride", 2)};
        } else if (kind == "avg_pool2d") {
            l.op = AvgPool2d{count(j, l.name, "kernel", 2), count(j, l.name, "stride", 2)};
        } else if (kind == "flatten") {
            l.op = Flatten{};
        } else if (kind == "output") {
            l.op = Output{};
        } else {
            throw FormatError("layer '" + l.name + "': unknown layer kind '" + kind + "'");
        }
        return l;
    }

    std::vector<Layer> layers(const json& j, const std::string& owner, const char* key) {
        std::vector<Layer> out;
        if (!j.contains(key)) return out;
        if (!j[key].is_array()) throw FormatError("'" + owner + "': '" + key + "' must be an array");
        for (const auto& e : j[key]) {
            if (e.value("kind", std::string{}) == "residual_block")
                throw FormatError("'" + owner + "': nested residual blocks are not supported");
            out.push_back(layer(e));
        }
        return out;
    }

private:
    fs::path dir_;
};

} // namespace

void write_blob(const Tensor& tensor, const fs::path& file) { write_words(tensor.storage(), file); }

Tensor read_blob(const fs::path& file, const Shape& shape) {
    const auto bytes = read_bytes(file);
    const std::size_t expected = element_count(shape) * 4;
    if (bytes.size() != expected)
        throw ShapeError("blob '" + file.string() + "' has " + std::to_string(bytes.size()) +
                         " bytes, shape " + to_string(shape) + " needs " + std::to_string(expected));
    return Tensor(shape, words_from_bytes<float>(bytes));
}

void save_model(const Network& net, const fs::path& dir) {
    require_valid(net);
    ensure_directory(dir);
    ModelWriter writer(dir);
    json layers = json::array();
    for (const Node& node : net.nodes) {
        if (const auto* layer = std::get_if<Layer>(&node)) {
            layers.push_back(writer.layer(*layer));
            continue;
        }
        const auto& block = std::get<ResidualBlock>(node);
        layers.push_back({{"name", block.name},
                          {"kind", "residual_block"},
                          {"body", writer.layers(block.body)},
                          {"shortcut", writer.layers(block.shortcut)}});
    }
    const json manifest{
        {"format_version", kFormatVersion}, {"input_shape", net.input_shape}, {"layers", layers}};
    write_text(manifest.dump(2) + "\n", dir / "manifest.json");
}

Network load_model(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::is_regular_file(manifest_path))
        throw IoError("no manifest.json in '" + dir.string() + "'");
    const json manifest = read_json(manifest_path);
    if (manifest.value("format_version", std::string{}) != kFormatVersion)
        throw FormatError("'" + manifest_path.string() + "': unsupported format_version, expected " +
                          kFormatVersion);
    if (!manifest.contains("layers") || !manifest["layers"].is_array())
        throw FormatError("'" + manifest_path.string() + "': missing layer list");

    Network net;
    net.input_shape = shape_from_json(manifest.value("input_shape", json()), "input_shape");
    ModelReader reader(dir);
    for (const auto& entry : manifest["layers"]) {
        if (entry.is_object() && entry.value("kind", std::string{}) == "residual_block") {
            ResidualBlock block;
            block.name = entry.value("name", std::string{});
            block.body = reader.layers(entry, block.name, "body");
            block.shortcut = reader.layers(entry, block.name, "shortcut");
            net.nodes.emplace_back(std::move(block));
        } else {
            net.nodes.emplace_back(reader.layer(entry));
        }
    }
    require_valid(net);
    return net;
}

void check_dataset(const Dataset& data) {
    std::vector<std::string> problems;
    if (data.inputs.size() != data.labels.size())
        problems.push_back("dataset has " + std::to_string(data.inputs.size()) + " inputs but " +
                           std::to_string(data.labels.size()) + " labels");
    if (data.class_count == 0) problems.push_back("dataset class count must be positive");
    for (std::size_t i = 0; i < data.inputs.size(); ++i)
        if (data.inputs[i].shape() != data.input_shape) {
            problems.push_back("sample " + std::to_string(i) + " has shape " +
                               to_string(data.inputs[i].shape()) + ", expected " +
                               to_string(data.input_shape));
            break;
        }
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        if (data.labels[i] >= data.class_count) {
            problems.push_back("label " + std::to_string(data.labels[i]) + " of sample " +
                               std::to_string(i) + " is not below class count " +
                               std::to_string(data.class_count));
            break;
        }
    if (!problems.empty()) throw ValidationError(std::move(problems));
}

void save_dataset(const Dataset& data, const fs::path& dir) {
    check_dataset(data);
    ensure_directory(dir);
    std::vector<float> flat;
    flat.reserve(data.size() * element_count(data.input_shape));
    for (const Tensor& t : data.inputs) flat.insert(flat.end(), t.data().begin(), t.data().end());
    write_words(std::move(flat), dir / "inputs.bin");
    write_words(data.labels, dir / "labels.bin");
    const json manifest{{"format_version", kFormatVersion},
                        {"sample_count", data.size()},
                        {"input_shape", data.input_shape},
                        {"class_count", data.class_count}};
    write_text(manifest.dump(2) + "\n", dir / "data.json");
}

Dataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "data.json";
    if (!fs::is_regular_file(manifest_path)) throw IoError("no data.json in '" + dir.string() + "'");
    const json manifest = read_json(manifest_path);
    if (manifest.value("format_version", std::string{}) != kFormatVersion)
        throw FormatError("'" + manifest_path.string() + "': unsupported format_version");
    Dataset data;
    data.input_shape = shape_from_json(manifest.value("input_shape", json()), "input_shape");
    if (!manifest.contains("sample_count") || !manifest["sample_count"].is_number_unsigned() ||
        !manifest.contains("class_count") || !manifest["class_count"].is_number_unsigned())
        throw FormatError("'" + manifest_path.string() + "': sample_count and class_count required");
    const auto samples = manifest["sample_count"].get<std::size_t>();
    data.class_count = manifest["class_count"].get<std::size_t>();

    const std::size_t per_sample = element_count(data.input_shape);
    const auto input_bytes = read_bytes(dir / "inputs.bin");
    if (input_bytes.size() != samples * per_sample * 4)
        throw ShapeError("inputs.bin has " + std::to_string(input_bytes.size()) + " bytes, expected " +
                         std::to_string(samples * per_sample * 4));
    const auto label_bytes = read_bytes(dir / "labels.bin");
    if (label_bytes.size() != samples * 4)
        throw ShapeError("labels.bin has " + std::to_string(label_bytes.size()) + " bytes, expected " +
                         std::to_string(samples * 4));

    const auto flat = words_from_bytes<float>(input_bytes);
    data.labels = words_from_bytes<std::uint32_t>(label_bytes);
    data.inputs.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i)
        data.inputs.emplace_back(data.input_shape,
                                 std::vector<float>(flat.begin() + std::ptrdiff_t(i * per_sample),
                                                    flat.begin() + std::ptrdiff_t((i + 1) * per_sample)));
    check_dataset(data);
    return data;
}

void write_tensor_file(const Tensor& tensor, const fs::path& file, const std::string& label) {
    if (file.has_parent_path()) ensure_directory(file.parent_path());
    write_blob(tensor, file);
    json sidecar{{"format_version", kFormatVersion}, {"shape", tensor.shape()}};
    if (!label.empty()) sidecar["layer"] = label;
    write_text(sidecar.dump(2) + "\n", fs::path(file.string() + ".json"));
}

Tensor read_tensor_file(const fs::path& file) {
    const json sidecar = read_json(fs::path(file.string() + ".json"));
    return read_blob(file, shape_from_json(sidecar.value("shape", json()), file.string()));
}

} // namespace neuromerge
