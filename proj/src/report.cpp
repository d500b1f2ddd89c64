#include "neuromerge/report.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "neuromerge/error.hpp"

namespace neuromerge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json shape_json(const Shape& s) { return json(s); }

void add_layer(json& rows, const Layer& layer, const std::map<std::string, Shape>& in,
               const std::map<std::string, Shape>& out, const std::string& block) {
    json row{{"name", layer.name},
             {"kind", std::string(kind_name(layer.op))},
             {"input_shape", shape_json(in.at(layer.name))},
             {"output_shape", shape_json(out.at(layer.name))},
             {"parameters", count_parameters(layer)}};
    if (!block.empty()) row["block"] = block;
    rows.push_back(std::move(row));
}

std::string percent(double fraction) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * fraction << "%";
    return s.str();
}

} // namespace

json to_json(const MergeReport& report) {
    json layers = json::array();
    for (const auto& l : report.layers)
        layers.push_back({{"name", l.name},
                          {"absorbed_into", l.absorbed_into},
                          {"original", l.original},
                          {"retained", l.retained},
                          {"compensated", l.compensated},
                          {"bn_aware", l.bn_aware},
                          {"retained_indices", l.retained_indices}});
    json plan = json::object();
    for (const auto& [name, ratio] : report.config.plan) plan[name] = ratio;
    const double before = double(report.params_before);
    return {{"config",
             {{"criterion", std::string(criterion_name(report.config.criterion))},
              {"plan", plan},
              {"threshold", finite_or_null(report.config.threshold)},
              {"lambda", report.config.lambda},
              {"mode", std::string(mode_name(report.config.mode))}}},
            {"layers", layers},
            {"warnings", report.warnings},
            {"params_before", report.params_before},
            {"params_after", report.params_after},
            {"param_reduction", before > 0 ? 1.0 - double(report.params_after) / before : 0.0}};
}

json to_json(const EvalReport& report) {
    return {{"model", report.model},
            {"accuracy", report.accuracy},
            {"ware", report.ware ? finite_or_null(*report.ware) : json(nullptr)},
            {"parameters", report.parameters},
            {"samples", report.samples}};
}

json to_json(const IdentityResult& r) {
    return {{"name", r.name},
            {"cases", r.cases},
            {"failures", r.failures},
            {"worst_error", r.worst_error},
            {"tolerance", r.tolerance},
            {"passed", r.passed()}};
}

json model_summary(const Network& net) {
    const auto in = layer_input_shapes(net);
    const auto out = layer_output_shapes(net);
    json rows = json::array();
    for (const Node& node : net.nodes) {
        if (const auto* layer = std::get_if<Layer>(&node)) {
            add_layer(rows, *layer, in, out, {});
            continue;
        }
        const auto& block = std::get<ResidualBlock>(node);
        for (const Layer& l : block.body) add_layer(rows, l, in, out, block.name);
        for (const Layer& l : block.shortcut) add_layer(rows, l, in, out, block.name);
    }
    return {{"input_shape", shape_json(net.input_shape)},
            {"layers", rows},
            {"parameters", count_parameters(net)},
            {"classifier", classifier_name(net)},
            {"prunable", prunable_layers(net)}};
}

std::string render_merge_report(const MergeReport& r) {
    std::ostringstream s;
    s << "mode " << mode_name(r.config.mode) << ", criterion " << criterion_name(r.config.criterion)
      << ", t " << r.config.threshold << ", lambda " << r.config.lambda << "\n";
    s << std::left << std::setw(24) << "layer" << std::setw(24) << "absorbed into" << std::right
      << std::setw(10) << "original" << std::setw(10) << "retained" << std::setw(13) << "compensated"
      << "  bn\n";
    for (const auto& l : r.layers)
        s << std::left << std::setw(24) << l.name << std::setw(24) << l.absorbed_into << std::right
          << std::setw(10) << l.original << std::setw(10) << l.retained << std::setw(13)
          << l.compensated << "  " << (l.bn_aware ? "yes" : "no") << "\n";
    const double before = double(r.params_before);
    s << "parameters " << r.params_before << " -> " << r.params_after << " ("
      << percent(before > 0 ? 1.0 - double(r.params_after) / before : 0.0) << " fewer)\n";
    for (const auto& w : r.warnings) s << "warning: " << w << "\n";
    return s.str();
}

std::string render_model_summary(const Network& net) {
    const json doc = model_summary(net);
    std::ostringstream s;
    s << "input " << to_string(net.input_shape) << "\n";
    s << std::left << std::setw(24) << "layer" << std::setw(14) << "kind" << std::setw(20) << "output"
      << std::right << std::setw(12) << "params" << "\n";
    for (const auto& row : doc["layers"]) {
        std::string name = row["name"].get<std::string>();
        if (row.contains("block")) name = "  " + name;
        s << std::left << std::setw(24) << name << std::setw(14) << row["kind"].get<std::string>()
          << std::setw(20) << to_string(row["output_shape"].get<Shape>()) << std::right << std::setw(12)
          << row["parameters"].get<std::size_t>() << "\n";
    }
    s << "total parameters " << count_parameters(net) << "\n";
    s << "classifier " << classifier_name(net) << "\n";
    s << "prunable";
    for (const auto& name : prunable_layers(net)) s << " " << name;
    s << "\n";
    return s.str();
}

void write_json(const json& doc, const fs::path& file) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + file.string() + "' for writing");
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("write failed for '" + file.string() + "'");
}

json read_json(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open '" + file.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("'" + file.string() + "' is not valid JSON: " + e.what());
    }
}

std::map<std::string, std::vector<std::size_t>> read_retained(const fs::path& model_dir) {
    std::map<std::string, std::vector<std::size_t>> out;
    const fs::path file = model_dir / kReportFile;
    if (!fs::exists(file)) return out;
    const json doc = read_json(file);
    try {
        for (const auto& layer : doc.at("layers"))
            out[layer.at("name").get<std::string>()] =
                layer.at("retained_indices").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw FormatError("'" + file.string() + "' is not a merge report: " + e.what());
    }
    return out;
}

std::map<std::string, double> read_plan(const fs::path& file) {
    const json doc = read_json(file);
    if (!doc.is_object()) throw FormatError("plan '" + file.string() + "' must be a JSON object");
    std::map<std::string, double> plan;
    for (const auto& [name, ratio] : doc.items()) {
        if (!ratio.is_number())
            throw FormatError("plan entry '" + name + "' in '" + file.string() + "' is not a number");
        plan[name] = ratio.get<double>();
    }
    return plan;
}

} // namespace neuromerge
