#include "neuromerge/identities.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neuromerge/decompose.hpp"
#include "neuromerge/error.hpp"

namespace neuromerge {

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void record(IdentityResult& r, double error) {
    ++r.cases;
    r.worst_error = std::max(r.worst_error, error);
    if (!(error <= r.tolerance)) ++r.failures;
}

} // namespace

Tensor random_scaling_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor z({rows, cols});
    for (std::size_t n = 0; n < cols; ++n) {
        if (pick(rng, 0, 2) == 0) continue;
        z.at(pick(rng, 0, rows - 1), n) = static_cast<float>(uniform(rng, 0.05, 2.0));
    }
    return z;
}

Tensor violating_scaling_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows < 2) throw ArgumentError("a violating scaling matrix needs at least two rows");
    Tensor z = random_scaling_tensor(rows, cols, rng);
    const std::size_t col = pick(rng, 0, cols - 1);
    const std::size_t extra = pick(rng, 2, rows);
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t p = 0; p < rows; ++p) z.at(p, col) = 0.0f;
    for (std::size_t k = 0; k < extra; ++k)
        z.at(order[k], col) = static_cast<float>(uniform(rng, 0.05, 2.0));
    return z;
}

std::size_t first_violating_column(const Tensor& z) {
    for (std::size_t n = 0; n < z.dim(1); ++n) {
        std::size_t positive = 0;
        for (std::size_t p = 0; p < z.dim(0); ++p) positive += z.at(p, n) > 0.0f ? 1 : 0;
        if (positive >= 2) return n;
    }
    return z.dim(1);
}

Tensor relu_witness(const Tensor& z, std::size_t col) {
    std::vector<std::size_t> rows;
    for (std::size_t p = 0; p < z.dim(0); ++p)
        if (z.at(p, col) > 0.0f) rows.push_back(p);
    if (rows.size() < 2)
        throw ArgumentError("column " + std::to_string(col) + " has fewer than two positive entries");
    std::stable_sort(rows.begin(), rows.end(),
                     [&](std::size_t a, std::size_t b) { return z.at(a, col) > z.at(b, col); });
    Tensor v({z.dim(0)});
    for (std::size_t k = 0; k + 1 < rows.size(); ++k) v[rows[k]] = -1.0f;
    v[rows.back()] = 0.5f;
    return v;
}

IdentityResult check_relu_commutation(Rng& rng, std::size_t cases) {
    IdentityResult r{"relu commutation", 0, 0, 0.0, 0.0};
    std::normal_distribution<double> normal;
    for (std::size_t c = 0; c < cases; ++c) {
        const Tensor z = random_scaling_tensor(pick(rng, 1, 32), pick(rng, 1, 32), rng);
        Tensor v({z.dim(0), 1});
        for (auto& x : v.storage()) x = static_cast<float>(normal(rng));
        const Tensor zt = transpose(z);
        const bool same = values_equal(relu(matmul(zt, v)), matmul(zt, relu(v)));
        record(r, same ? 0.0 : 1.0);
    }
    return r;
}

IdentityResult check_relu_commutation_converse(Rng& rng, std::size_t cases) {
    IdentityResult r{"relu commutation converse", 0, 0, 0.0, 0.0};
    for (std::size_t c = 0; c < cases; ++c) {
        const Tensor z = violating_scaling_tensor(pick(rng, 2, 32), pick(rng, 1, 32), rng);
        const std::size_t col = first_violating_column(z);
        const Tensor v = relu_witness(z, col).reshaped({z.dim(0), 1});
        const Tensor zt = transpose(z);
        // Inequality expected: a pass is recorded when the two sides differ.
        const bool differs = !values_equal(relu(matmul(zt, v)), matmul(relu(zt), relu(v)));
        record(r, differs ? 0.0 : 1.0);
    }
    return r;
}

IdentityResult check_feature_map_commutation(Rng& rng, std::size_t cases) {
    IdentityResult r{"feature-map relu commutation", 0, 0, 0.0, 0.0};
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t p = pick(rng, 1, 8), n = pick(rng, 1, 8);
        const Tensor z = random_scaling_tensor(p, n, rng);
        const Tensor x = random_tensor({p, pick(rng, 1, 8), pick(rng, 1, 8)}, rng);
        const Tensor zt = transpose(z);
        const bool same = values_equal(relu(n_mode_product(x, zt, 1)), n_mode_product(relu(x), zt, 1));
        record(r, same ? 0.0 : 1.0);
    }
    return r;
}

IdentityResult check_conv_product(Rng& rng, std::size_t cases) {
    IdentityResult r{"conv product identity", 0, 0, 0.0, 1e-5};
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t p = pick(rng, 1, 8), n = pick(rng, 1, 8), ch = pick(rng, 1, 8);
        const std::size_t h = pick(rng, 1, 8), w = pick(rng, 1, 8);
        const std::size_t k = pick(rng, 1, std::min(h, w));
        const Tensor y = random_tensor({p, ch, k, k}, rng);
        const Tensor zt = transpose(random_scaling_tensor(p, n, rng));
        const Tensor x = random_tensor({ch, h, w}, rng);
        const Tensor lhs = tensor_conv(n_mode_product(y, zt, 1), x);
        const Tensor rhs = n_mode_product(tensor_conv(y, x), zt, 1);
        record(r, relative_error(lhs, rhs));
    }
    return r;
}

IdentityResult check_next_layer(Rng& rng, std::size_t cases) {
    IdentityResult r{"next-layer identity", 0, 0, 0.0, 1e-5};
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t p = pick(rng, 1, 8), n = pick(rng, 1, 8), m = pick(rng, 1, 8);
        const std::size_t h = pick(rng, 1, 8), w = pick(rng, 1, 8);
        const std::size_t k = pick(rng, 1, std::min(h, w));
        const Tensor next = random_tensor({m, n, k, k}, rng);
        const Tensor z = random_scaling_tensor(p, n, rng);
        const Tensor x = random_tensor({p, h, w}, rng);
        const Tensor lhs = tensor_conv(next, n_mode_product(x, transpose(z), 1));
        const Tensor rhs = tensor_conv(n_mode_product(next, z, 2), x);
        record(r, relative_error(lhs, rhs));
    }
    return r;
}

IdentityResult check_bn_relation(Rng& rng, std::size_t cases) {
    IdentityResult r{"bn relation", 0, 0, 0.0, 1e-5};
    std::normal_distribution<double> normal;
    for (std::size_t c = 0; c < cases; ++c) {
        const BnChannel first{uniform(rng, 0.1, 3.0), normal(rng), normal(rng), uniform(rng, 0.1, 3.0)};
        const BnChannel second{uniform(rng, 0.1, 3.0), normal(rng), normal(rng), uniform(rng, 0.1, 3.0)};
        const double s = uniform(rng, 0.05, 4.0);
        const BnRelation rel = bn_relation(s, first, second);
        double worst = 0.0, scale = 0.0;
        for (int i = 0; i < 16; ++i) {
            const double x1 = normal(rng);
            const double y1 = first.gamma * (x1 - first.mean) / first.sigma + first.beta;
            const double y2 = second.gamma * (s * x1 - second.mean) / second.sigma + second.beta;
            worst = std::max(worst, std::fabs(rel.scale * y1 + rel.bias - y2));
            scale = std::max(scale, std::fabs(y2));
        }
        record(r, scale > 0.0 ? worst / scale : worst);
    }
    return r;
}

std::vector<IdentityResult> run_identity_suite(std::uint64_t seed) {
    Rng rng(seed);
    return {check_relu_commutation(rng, 1000),   check_relu_commutation_converse(rng, 100),
            check_feature_map_commutation(rng, 200), check_conv_product(rng, 200),
            check_next_layer(rng, 200),          check_bn_relation(rng, 500)};
}

} // namespace neuromerge
