// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Library results are checked against the naive oracles in tests/support.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "neuromerge/decompose.hpp"
#include "neuromerge/eval.hpp"
#include "neuromerge/identities.hpp"
#include "neuromerge/merge.hpp"
#include "neuromerge/zoo.hpp"
#include "../support/helpers.hpp"
#include "../support/oracles.hpp"

using namespace neuromerge;
using testing::pick;
using testing::uniform;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

struct Check {
    std::string name;
    double limit_seconds;
    std::function<Outcome()> body;
};

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

std::string fixed(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// v with exact zeros, negative zeros and both signs.
Tensor random_vector(std::size_t n, Rng& rng) {
    Tensor v({n});
    for (std::size_t i = 0; i < n; ++i) {
        switch (pick(rng, 0, 5)) {
        case 0: v[i] = 0.0f; break;
        case 1: v[i] = -0.0f; break;
        default: v[i] = float(uniform(rng, -3, 3));
        }
    }
    return v;
}

Tensor column(const Tensor& v) { return v.reshaped({v.size(), 1}); }

Outcome relu_forward() {
    Rng rng(1001);
    std::size_t bad = 0;
    for (int c = 0; c < 1000; ++c) {
        const std::size_t p = pick(rng, 1, 32), n = pick(rng, 1, 32);
        const Tensor z = random_scaling_tensor(p, n, rng);
        if (!commutes_with_relu(z)) ++bad;
        const Tensor v = random_vector(p, rng);
        const Tensor lhs = relu(matmul(transpose(z), column(v)));
        const Tensor rhs = matmul(transpose(z), column(relu(v)));
        const Tensor zt = oracle::transpose(z);
        const Tensor olhs = oracle::relu(oracle::matmul(zt, column(v)));
        const Tensor orhs = oracle::matmul(zt, column(oracle::relu(v)));
        if (!values_equal(lhs, rhs) || !values_equal(olhs, orhs) || !values_equal(lhs, olhs)) ++bad;
    }
    return {bad == 0, "1000 cases, " + std::to_string(bad) + " mismatches"};
}

Outcome relu_converse() {
    Rng rng(1002);
    std::size_t bad = 0;
    for (int c = 0; c < 100; ++c) {
        const std::size_t p = pick(rng, 2, 32), n = pick(rng, 1, 32);
        const Tensor z = violating_scaling_tensor(p, n, rng);
        if (commutes_with_relu(z)) ++bad;
        std::size_t col = n;
        for (std::size_t j = 0; j < n && col == n; ++j) {
            std::size_t positive = 0;
            for (std::size_t i = 0; i < p; ++i) positive += z.at(i, j) > 0.0f;
            if (positive >= 2) col = j;
        }
        if (col == n) {
            ++bad;
            continue;
        }
        // Witness: -1 on the K-1 largest positive entries, 1/2 on the K-th.
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < p; ++i)
            if (z.at(i, col) > 0.0f) rows.push_back(i);
        std::stable_sort(rows.begin(), rows.end(),
                         [&](std::size_t a, std::size_t b) { return z.at(a, col) > z.at(b, col); });
        Tensor v({p});
        for (std::size_t k = 0; k + 1 < rows.size(); ++k) v[rows[k]] = -1.0f;
        v[rows.back()] = 0.5f;
        const Tensor zt = oracle::transpose(z);
        if (oracle::relu(oracle::matmul(zt, column(v)))[col] == oracle::matmul(zt, column(oracle::relu(v)))[col])
            ++bad;
        // The library's own witness must break the identity too.
        const Tensor w = relu_witness(z, col);
        if (relu(matmul(transpose(z), column(w)))[col] == matmul(transpose(z), column(relu(w)))[col]) ++bad;
    }
    return {bad == 0, "100 cases, " + std::to_string(bad) + " without inequality"};
}

Outcome tensor_identities() {
    Rng rng(1003);
    double worst = 0.0;
    std::size_t bad = 0;
    for (int c = 0; c < 200; ++c) {
        const std::size_t p = pick(rng, 1, 8), n = pick(rng, p, 8), ch = pick(rng, 1, 8), m = pick(rng, 1, 8);
        const std::size_t k = pick(rng, 1, 3), h = pick(rng, k, 8), w = pick(rng, k, 8);
        const Tensor z = random_scaling_tensor(p, n, rng);
        const Tensor zt = oracle::transpose(z);

        // (Y x1 Z^T) conv X == (Y conv X) x1 Z^T
        const Tensor y = random_tensor({p, ch, k, k}, rng);
        const Tensor x = random_tensor({ch, h, w}, rng);
        const Tensor want4 = oracle::n_mode(oracle::conv(y, x), zt, 1);
        const double e4 = std::max(oracle::rel_error(tensor_conv(n_mode_product(y, transpose(z), 1), x), want4),
                                   oracle::rel_error(oracle::conv(oracle::n_mode(y, zt, 1), x), want4));

        // W' conv (A x1 Z^T) == (W' x2 Z) conv A
        const Tensor wn = random_tensor({m, n, k, k}, rng);
        const Tensor a = random_tensor({p, h, w}, rng);
        const Tensor want5 = oracle::conv(oracle::n_mode(wn, z, 2), a);
        const double e5 = std::max(oracle::rel_error(tensor_conv(wn, n_mode_product(a, transpose(z), 1)), want5),
                                   oracle::rel_error(oracle::conv(wn, oracle::n_mode(a, zt, 1)), want5));

        worst = std::max({worst, e4, e5});
        if (!(e4 <= 1e-5 && e5 <= 1e-5)) ++bad;
    }
    return {bad == 0, "200 cases, worst relative error " + sci(worst) + " (tol 1e-05)"};
}

Outcome bn_algebra() {
    Rng rng(1004);
    double worst = 0.0;
    std::size_t bad = 0;
    for (int c = 0; c < 500; ++c) {
        const BnChannel one{uniform(rng, 0.05, 4), uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, 0.05, 4)};
        const BnChannel two{uniform(rng, 0.05, 4), uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, 0.05, 4)};
        double s = uniform(rng, -4, 4);
        if (s == 0.0) s = 1.0;
        const BnRelation rel = bn_relation(s, one, two);
        double diff = 0.0, scale = 0.0;
        for (int i = 0; i < 16; ++i) {
            const double x1 = uniform(rng, -5, 5);
            const double x2_bn = oracle::bn(s * x1, two.gamma, two.beta, two.mean, two.sigma);
            const double x1_bn = oracle::bn(x1, one.gamma, one.beta, one.mean, one.sigma);
            diff = std::max(diff, std::fabs(rel.scale * x1_bn + rel.bias - x2_bn));
            scale = std::max(scale, std::fabs(x2_bn));
        }
        const double e = scale > 0 ? diff / scale : diff;
        worst = std::max(worst, e);
        if (!(e <= 1e-5)) ++bad;
    }
    return {bad == 0, "500 cases, worst relative error " + sci(worst) + " (tol 1e-05)"};
}

Outcome exact_redundancy() {
    Rng rng(1005);
    std::string detail;
    bool ok = true;
    for (const auto& [label, fx] : {std::pair{"fc", planted_fc(5)}, std::pair{"conv", planted_conv(5)}}) {
        MergeConfig cfg{neuromerge::Criterion::L1Norm, fx.plan};
        const Network merged = apply(fx.net, cfg).first;
        cfg.mode = MergeMode::Prune;
        const Network pruned = apply(fx.net, cfg).first;
        double worst_merged = 0.0;
        std::size_t pruned_off = 0;
        for (int i = 0; i < 100; ++i) {
            const Tensor x = random_tensor(fx.net.input_shape, rng);
            const Tensor want = oracle::forward(fx.net, x);
            worst_merged = std::max(worst_merged, oracle::rel_error(oracle::forward(merged, x), want));
            if (oracle::rel_error(oracle::forward(pruned, x), want) > 1e-2) ++pruned_off;
        }
        ok = ok && worst_merged < 1e-4 && pruned_off >= 90;
        detail += std::string(detail.empty() ? "" : "; ") + label + ": merged worst " + sci(worst_merged) +
                  ", pruned off on " + std::to_string(pruned_off) + "/100";
    }
    return {ok, detail};
}

Outcome prune_special_case() {
    Rng rng(1006);
    std::size_t bad = 0, nets = 0;
    const neuromerge::Criterion criteria[] = {neuromerge::Criterion::L1Norm, neuromerge::Criterion::L2Norm,
                                               neuromerge::Criterion::L2GM};
    while (nets < 20) {
        const Network net = random_network(rng);
        const auto plan = uniform_plan(net, uniform(rng, 0.1, 0.8));
        if (plan.empty()) continue;
        ++nets;
        MergeConfig cfg{criteria[pick(rng, 0, 2)], plan, uniform(rng, 1.0 + 1e-9, 5.0), uniform(rng, 0, 1)};
        const Network merged = apply(net, cfg).first;
        cfg.mode = MergeMode::Prune;
        const Network pruned = apply(net, cfg).first;
        if (!bitwise_equal(merged, pruned)) ++bad;
    }
    return {bad == 0, "20 nets, " + std::to_string(bad) + " differ"};
}

Outcome noisy_ordering() {
    bool ok = true;
    std::string detail;
    for (const std::string kind : {"fc", "conv"}) {
        std::vector<double> wm, wp, am, ap;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const PlantedFixture fx = kind == "fc" ? planted_fc(seed, 0.05) : planted_conv(seed, 0.05);
            Rng rng(seed + 5000);
            const Dataset data = self_labelled_dataset(fx.net, 200, rng);
            MergeConfig cfg{neuromerge::Criterion::L1Norm, fx.plan};
            const auto [merged, report] = apply(fx.net, cfg);
            cfg.mode = MergeMode::Prune;
            const Network pruned = apply(fx.net, cfg).first;
            std::map<std::string, std::vector<std::size_t>> retained;
            for (const auto& l : report.layers) retained[l.name] = l.retained_indices;
            const std::string tap = final_response_layer(fx.net);
            const auto idx = tap_retained_indices(fx.net, tap, retained);
            wm.push_back(ware(fx.net, merged, data, tap, idx));
            wp.push_back(ware(fx.net, pruned, data, tap, idx));
            am.push_back(accuracy(merged, data));
            ap.push_back(accuracy(pruned, data));
        }
        const bool pass = median(wm) < median(wp) && median(am) >= median(ap);
        ok = ok && pass;
        detail += std::string(detail.empty() ? "" : "; ") + kind + ": WARE " + fixed(median(wm), 4) + " vs " +
                  fixed(median(wp), 4) + ", accuracy " + fixed(100 * median(am), 1) + "% vs " +
                  fixed(100 * median(ap), 1) + "%";
    }
    return {ok, detail};
}

// 3x3 convs with BN (gamma and beta), then fc1 (C_last -> 512) and fc2 (512 -> 10).
std::size_t vgg_formula(const std::vector<std::size_t>& widths) {
    std::size_t total = 0, in = 3;
    for (std::size_t c : widths) {
        total += 9 * in * c + 2 * c;
        in = c;
    }
    return total + in * 512 + 512 + 512 * 10 + 10;
}

Outcome parameter_accounting() {
    Rng rng(1008);
    const Network vgg = vgg16_cifar(rng);
    const std::vector<std::size_t> base{64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
    const auto plan = vgg16_plan();
    std::vector<std::size_t> widths = base;
    for (std::size_t i = 0; i < widths.size(); ++i)
        if (const auto it = plan.find("conv" + std::to_string(i + 1)); it != plan.end())
            widths[i] -= std::size_t(std::floor(it->second * double(widths[i])));
    const auto [out, report] = apply(vgg, MergeConfig{neuromerge::Criterion::L1Norm, plan});
    const std::size_t formula = vgg_formula(widths);
    const std::size_t counted = count_parameters(out);
    const bool consistent = counted == formula && report.params_after == formula &&
                            count_parameters(vgg) == vgg_formula(base);
    const bool corroborated = std::fabs(double(counted) - 5.4e6) < 0.05e6;
    const long long literal = 5398354;
    return {consistent && corroborated,
            std::to_string(counted) + " parameters (formula " + std::to_string(formula) + ", baseline " +
                std::to_string(count_parameters(vgg)) + "); quoted 5,398,354 differs by " +
                std::to_string((long long)counted - literal)};
}

} // namespace

int main() {
    const std::vector<Check> checks{
        {"relu commutation forward", 1, relu_forward},
        {"relu commutation converse", 1, relu_converse},
        {"conv tensor identities", 10, tensor_identities},
        {"batch-norm relation", 1, bn_algebra},
        {"exact redundancy end to end", 30, exact_redundancy},
        {"prune is merge with t > 1", 10, prune_special_case},
        {"noisy fixture ordering", 120, noisy_ordering},
        {"vgg16 parameter accounting", 10, parameter_accounting},
    };
    std::size_t failed = 0;
    for (const auto& check : checks) {
        const auto start = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = check.body();
        } catch (const std::exception& e) {
            r = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < check.limit_seconds;
        const bool pass = r.ok && in_time;
        failed += !pass;
        std::cout << (pass ? "PASS " : "FAIL ") << check.name << ": " << r.detail << " [" << fixed(secs, 3)
                  << " s, limit " << check.limit_seconds << " s" << (in_time ? "" : ", too slow") << "]\n";
    }
    std::cout << (checks.size() - failed) << "/" << checks.size() << " criteria passed\n";
    return failed ? 1 : 0;
}
