#include "neuromerge/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "neuromerge/error.hpp"
#include "neuromerge/eval.hpp"
#include "neuromerge/identities.hpp"
#include "neuromerge/io.hpp"
#include "neuromerge/merge.hpp"
#include "neuromerge/parallel.hpp"
#include "neuromerge/report.hpp"
#include "neuromerge/zoo.hpp"

namespace neuromerge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::optional<std::size_t> threads;
    std::uint64_t seed = 0;
    bool json = false;

    std::string model, out, data, baseline, pruned, merged, tap, layer, plan, kind;
    std::string criterion = "l1";
    std::string mode = "merge";
    std::optional<double> ratio;
    double threshold = kDefaultThreshold;
    double lambda = kDefaultLambda;
    std::size_t sample = 0;
    std::size_t samples = 0;
    double noise = 0.0;
};

void configure_threads(const Options& opt) {
    std::size_t threads = 0;
    if (opt.threads) {
        threads = *opt.threads;
    } else if (const char* env = std::getenv("NEUROMERGE_THREADS"); env && *env) {
        char* end = nullptr;
        const long long v = std::strtoll(env, &end, 10);
        if (*end != '\0' || v < 0)
            throw ArgumentError(std::string("NEUROMERGE_THREADS must be a non-negative integer, got '") +
                                env + "'");
        threads = static_cast<std::size_t>(v);
    }
    set_thread_limit(threads);
}

void emit(std::ostream& out, const json& doc) { out << doc.dump(2) << "\n"; }

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

EvalReport evaluate(const std::string& id, const Network& net, const Dataset& data) {
    check_dataset(data);
    EvalReport r;
    r.model = id;
    r.accuracy = accuracy(net, data);
    r.parameters = count_parameters(net);
    r.samples = data.size();
    return r;
}

double ware_against(const Network& baseline, const Network& compressed, const fs::path& compressed_dir,
                    const Dataset& data, const std::string& tap) {
    const auto indices = tap_retained_indices(baseline, tap, read_retained(compressed_dir));
    return ware(baseline, compressed, data, tap, indices);
}

int cmd_inspect(const Options& opt, std::ostream& out) {
    const Network net = load_model(opt.model);
    if (opt.json)
        emit(out, model_summary(net));
    else
        out << render_model_summary(net);
    return kOk;
}

int cmd_merge(const Options& opt, MergeMode mode, std::ostream& out) {
    const Network net = load_model(opt.model);
    MergeConfig cfg;
    cfg.criterion = parse_criterion(opt.criterion);
    cfg.threshold = opt.threshold;
    cfg.lambda = opt.lambda;
    cfg.mode = mode;
    if (!opt.plan.empty())
        cfg.plan = read_plan(opt.plan);
    else if (opt.ratio)
        cfg.plan = uniform_plan(net, *opt.ratio);
    else
        throw ArgumentError("either --ratio or --plan is required");

    const auto [result, report] = apply(net, cfg);
    save_model(result, opt.out);
    const json doc = to_json(report);
    write_json(doc, fs::path(opt.out) / kReportFile);
    if (opt.json)
        emit(out, doc);
    else
        out << render_merge_report(report) << "wrote " << opt.out << "\n";
    return kOk;
}

int cmd_eval(const Options& opt, std::ostream& out) {
    const Network net = load_model(opt.model);
    const Dataset data = load_dataset(opt.data);
    EvalReport r = evaluate(opt.model, net, data);
    std::string tap;
    if (!opt.baseline.empty()) {
        const Network base = load_model(opt.baseline);
        tap = opt.tap.empty() ? final_response_layer(net) : opt.tap;
        r.ware = ware_against(base, net, opt.model, data, tap);
    }
    if (opt.json) {
        json doc = to_json(r);
        if (r.ware) doc["tap"] = tap;
        emit(out, doc);
    } else {
        out << "model      " << r.model << "\n"
            << "samples    " << r.samples << "\n"
            << "accuracy   " << fixed(100.0 * r.accuracy, 2) << "%\n"
            << "parameters " << r.parameters << "\n";
        if (r.ware) out << "ware       " << fixed(*r.ware, 6) << " at " << tap << "\n";
    }
    return kOk;
}

int cmd_compare(const Options& opt, std::ostream& out) {
    const Network base = load_model(opt.baseline);
    const Network pruned = load_model(opt.pruned);
    const Network merged = load_model(opt.merged);
    const Dataset data = load_dataset(opt.data);
    const std::string tap = opt.tap.empty() ? final_response_layer(pruned) : opt.tap;

    const EvalReport rb = evaluate(opt.baseline, base, data);
    EvalReport rp = evaluate(opt.pruned, pruned, data);
    EvalReport rm = evaluate(opt.merged, merged, data);
    rp.ware = ware_against(base, pruned, opt.pruned, data, tap);
    rm.ware = ware_against(base, merged, opt.merged, data, tap);

    if (opt.json) {
        emit(out, {{"tap", tap}, {"baseline", to_json(rb)}, {"pruned", to_json(rp)}, {"merged", to_json(rm)}});
        return kOk;
    }
    out << "tap " << tap << ", " << data.size() << " samples\n";
    out << std::left << std::setw(10) << "model" << std::right << std::setw(12) << "accuracy"
        << std::setw(14) << "ware" << std::setw(14) << "parameters" << "\n";
    auto row = [&](const char* label, const EvalReport& r) {
        out << std::left << std::setw(10) << label << std::right << std::setw(11)
            << fixed(100.0 * r.accuracy, 2) << "%" << std::setw(14) << (r.ware ? fixed(*r.ware, 6) : "-")
            << std::setw(14) << r.parameters << "\n";
    };
    row("baseline", rb);
    row("pruned", rp);
    row("merged", rm);
    return kOk;
}

int cmd_verify(const Options& opt, std::ostream& out) {
    const auto results = run_identity_suite(opt.seed);
    bool ok = true;
    json rows = json::array();
    for (const auto& r : results) {
        ok = ok && r.passed();
        rows.push_back(to_json(r));
    }
    if (opt.json) {
        emit(out, {{"seed", opt.seed}, {"checks", rows}, {"passed", ok}});
    } else {
        for (const auto& r : results) {
            out << (r.passed() ? "PASS " : "FAIL ") << r.name << ": " << r.cases << " cases, "
                << r.failures << " failures";
            if (r.tolerance > 0) out << ", worst relative error " << r.worst_error << " (tol " << r.tolerance << ")";
            out << "\n";
        }
    }
    return ok ? kOk : kNumeric;
}

int cmd_dump(const Options& opt, std::ostream& out) {
    const Network net = load_model(opt.model);
    const Dataset data = load_dataset(opt.data);
    if (opt.sample >= data.size())
        throw ArgumentError("--sample " + std::to_string(opt.sample) + " out of range for " +
                            std::to_string(data.size()) + " samples");
    dump_feature_maps(net, data.inputs[opt.sample], opt.layer, opt.out);
    const Tensor t = read_tensor_file(opt.out);
    if (opt.json)
        emit(out, {{"layer", opt.layer}, {"shape", t.shape()}, {"path", opt.out}});
    else
        out << "wrote " << opt.layer << " " << to_string(t.shape()) << " to " << opt.out << "\n";
    return kOk;
}

int cmd_fixture(const Options& opt, std::ostream& out) {
    Rng rng(opt.seed);
    Network net;
    std::map<std::string, double> plan;
    if (opt.kind == "planted-fc" || opt.kind == "planted-conv") {
        PlantedFixture fx = opt.kind == "planted-fc" ? planted_fc(opt.seed, opt.noise)
                                                     : planted_conv(opt.seed, opt.noise);
        net = std::move(fx.net);
        plan = std::move(fx.plan);
    } else if (opt.kind == "lenet300") {
        net = lenet300(rng);
    } else if (opt.kind == "vgg16") {
        net = vgg16_cifar(rng);
        plan = vgg16_plan();
    } else if (opt.kind == "resnet56") {
        net = resnet_cifar(56, 1, rng);
    } else if (opt.kind == "wrn40-4") {
        net = resnet_cifar(40, 4, rng);
    } else {
        net = random_network(rng);
    }
    save_model(net, opt.out);
    json doc{{"kind", opt.kind}, {"model", opt.out}, {"parameters", count_parameters(net)}};
    if (!plan.empty()) {
        json p = json::object();
        for (const auto& [name, ratio] : plan) p[name] = ratio;
        const fs::path file = fs::path(opt.out) / "plan.json";
        write_json(p, file);
        doc["plan"] = file.string();
    }
    if (opt.samples > 0) {
        if (opt.data.empty()) throw ArgumentError("--samples needs --data");
        Rng data_rng(opt.seed + 1);
        save_dataset(self_labelled_dataset(net, opt.samples, data_rng), opt.data);
        doc["data"] = opt.data;
        doc["samples"] = opt.samples;
    }
    if (opt.json)
        emit(out, doc);
    else
        out << "wrote " << opt.kind << " (" << count_parameters(net) << " parameters) to " << opt.out << "\n";
    return kOk;
}

void merge_flags(CLI::App* sub, Options& opt, bool with_mode) {
    sub->add_option("--model", opt.model, "input model directory")->required();
    sub->add_option("--out", opt.out, "output model directory")->required();
    sub->add_option("--criterion", opt.criterion, "l1, l2 or l2-gm")
        ->check(CLI::IsMember({"l1", "l2", "l2-gm"}))
        ->capture_default_str();
    sub->add_option("--ratio", opt.ratio, "pruning ratio for every prunable layer");
    sub->add_option("--plan", opt.plan, "JSON file mapping layer names to ratios (overrides --ratio)");
    sub->add_option("-t,--threshold", opt.threshold, "minimum cosine similarity to compensate")
        ->capture_default_str();
    sub->add_option("--lambda", opt.lambda, "cosine vs bias distance weight for BN layers")
        ->capture_default_str();
    if (with_mode)
        sub->add_option("--mode", opt.mode, "merge or prune")
            ->check(CLI::IsMember({"merge", "prune"}))
            ->capture_default_str();
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options opt;
    CLI::App app{"Neuron merging: structured pruning that folds removed neurons into the next layer",
                 "neuromerge"};
    app.require_subcommand(1);
    app.add_option("--threads", opt.threads, "worker thread cap (default: NEUROMERGE_THREADS or all cores)");
    app.add_option("--seed", opt.seed, "random seed")->capture_default_str();
    app.add_flag("--json", opt.json, "print reports as JSON");

    auto* inspect = app.add_subcommand("inspect", "model summary and parameter counts");
    inspect->add_option("--model", opt.model, "model directory")->required();

    auto* merge = app.add_subcommand("merge", "prune and merge planned layers");
    merge_flags(merge, opt, true);
    auto* prune = app.add_subcommand("prune", "prune planned layers without compensation");
    merge_flags(prune, opt, false);

    auto* eval = app.add_subcommand("eval", "accuracy, and WARE against a baseline");
    eval->add_option("--model", opt.model, "model directory")->required();
    eval->add_option("--data", opt.data, "dataset directory")->required();
    eval->add_option("--baseline", opt.baseline, "original model for WARE");
    eval->add_option("--tap", opt.tap, "layer whose output WARE compares (default: classifier input)");

    auto* compare = app.add_subcommand("compare", "baseline vs pruned vs merged");
    compare->add_option("--baseline", opt.baseline, "original model")->required();
    compare->add_option("--pruned", opt.pruned, "pruned model")->required();
    compare->add_option("--merged", opt.merged, "merged model")->required();
    compare->add_option("--data", opt.data, "dataset directory")->required();
    compare->add_option("--tap", opt.tap, "layer whose output WARE compares (default: classifier input)");

    auto* verify = app.add_subcommand("verify", "run the randomised identity checks");

    auto* dump = app.add_subcommand("dump-features", "write one layer's feature map for a sample");
    dump->add_option("--model", opt.model, "model directory")->required();
    dump->add_option("--data", opt.data, "dataset directory")->required();
    dump->add_option("--sample", opt.sample, "sample index")->capture_default_str();
    dump->add_option("--layer", opt.layer, "layer name")->required();
    dump->add_option("--out", opt.out, "output blob; shape goes to <out>.json")->required();

    auto* fixture = app.add_subcommand("fixture", "write a synthetic model (and dataset)");
    fixture->add_option("--kind", opt.kind, "model kind")
        ->required()
        ->check(CLI::IsMember({"planted-fc", "planted-conv", "lenet300", "vgg16", "resnet56", "wrn40-4",
                               "random"}));
    fixture->add_option("--out", opt.out, "output model directory")->required();
    fixture->add_option("--noise", opt.noise, "relative noise on planted copies")->capture_default_str();
    fixture->add_option("--samples", opt.samples, "self-labelled samples to write to --data");
    fixture->add_option("--data", opt.data, "dataset directory");

    for (auto* sub : {inspect, merge, prune, eval, compare, verify, dump, fixture}) sub->fallthrough();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        configure_threads(opt);
        if (inspect->parsed()) return cmd_inspect(opt, out);
        if (merge->parsed()) return cmd_merge(opt, parse_mode(opt.mode), out);
        if (prune->parsed()) return cmd_merge(opt, MergeMode::Prune, out);
        if (eval->parsed()) return cmd_eval(opt, out);
        if (compare->parsed()) return cmd_compare(opt, out);
        if (verify->parsed()) return cmd_verify(opt, out);
        if (dump->parsed()) return cmd_dump(opt, out);
        return cmd_fixture(opt, out);
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        for (const auto& d : e.diagnostics()) err << "  " << d << "\n";
        return kInvalid;
    } catch (const DegenerateError& e) {
        err << "error: " << e.what() << "\n";
        return kNumeric;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kInvalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kNumeric;
    }
}

} // namespace neuromerge::cli
