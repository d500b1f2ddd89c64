#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuromerge/eval.hpp"
#include "neuromerge/identities.hpp"
#include "neuromerge/merge.hpp"
#include "neuromerge/model.hpp"

namespace neuromerge {

nlohmann::json to_json(const MergeReport& report);
nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const IdentityResult& result);
// Per-layer shapes and parameter counts plus totals.
nlohmann::json model_summary(const Network& net);

std::string render_merge_report(const MergeReport& report);
std::string render_model_summary(const Network& net);

// Merge reports stored next to a model as report.json.
inline constexpr const char* kReportFile = "report.json";
void write_json(const nlohmann::json& doc, const std::filesystem::path& file);
nlohmann::json read_json(const std::filesystem::path& file);

// layer -> retained original indices, read from a stored merge report.
// Empty when the directory has no report (an uncompressed model).
std::map<std::string, std::vector<std::size_t>> read_retained(const std::filesystem::path& model_dir);

// Plan file: a JSON object mapping layer names to pruning ratios.
std::map<std::string, double> read_plan(const std::filesystem::path& file);

} // namespace neuromerge
