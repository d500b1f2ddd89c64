#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "neuromerge/model.hpp"
#include "neuromerge/tensor.hpp"

namespace neuromerge {

inline constexpr const char* kFormatVersion = "neuromerge-v1";

// Model directory layout:
//   manifest.json   layer list (kinds, names, shapes, stride/padding, blob names)
//   <blob>.bin      one per tensor: little-endian f32, row-major, no header
void save_model(const Network& net, const std::filesystem::path& dir);
Network load_model(const std::filesystem::path& dir);

struct Dataset {
    Shape input_shape;
    std::size_t class_count = 0;
    std::vector<Tensor> inputs;
    std::vector<std::uint32_t> labels;

    std::size_t size() const { return inputs.size(); }
};

// Throws ValidationError on label/shape problems.
void check_dataset(const Dataset& data);

// Dataset directory layout: data.json, inputs.bin (f32 LE), labels.bin (u32 LE).
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Raw blob I/O. read_blob checks the byte count against `shape`.
void write_blob(const Tensor& tensor, const std::filesystem::path& file);
Tensor read_blob(const std::filesystem::path& file, const Shape& shape);

// A blob with a `<file>.json` sidecar holding its shape.
void write_tensor_file(const Tensor& tensor, const std::filesystem::path& file,
                       const std::string& label = {});
Tensor read_tensor_file(const std::filesystem::path& file);

} // namespace neuromerge
