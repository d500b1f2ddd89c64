#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neuromerge/tensor.hpp"
#include "neuromerge/zoo.hpp"

namespace neuromerge {

// Randomised self-checks of the algebra merging relies on. Used by
// `neuromerge verify`.
struct IdentityResult {
    std::string name;
    std::size_t cases = 0;
    std::size_t failures = 0;
    double worst_error = 0.0; // largest relative error seen (0 for exact checks)
    double tolerance = 0.0;   // 0 means exact equality required

    bool passed() const { return cases > 0 && failures == 0; }
};

// Random P x N matrix that satisfies the relu commutation condition. Roughly
// a third of the columns are zero. Values are positive and O(1).
Tensor random_scaling_tensor(std::size_t rows, std::size_t cols, Rng& rng);
// Random non-negative matrix in which at least one column has two or more
// strictly positive entries.
Tensor violating_scaling_tensor(std::size_t rows, std::size_t cols, Rng& rng);

// Counterexample vector for column `col` of a non-negative z holding K >= 2
// positive entries: -1 at the K-1 largest of them, 1/2 at the K-th, 0 elsewhere.
// relu(z^T v) is then 0 at `col` while z^T relu(v) is z_K / 2 there.
Tensor relu_witness(const Tensor& z, std::size_t col);
// First column of z with at least two strictly positive entries, or z.dim(1).
std::size_t first_violating_column(const Tensor& z);

IdentityResult check_relu_commutation(Rng& rng, std::size_t cases);
IdentityResult check_relu_commutation_converse(Rng& rng, std::size_t cases);
IdentityResult check_feature_map_commutation(Rng& rng, std::size_t cases);
// (Y x1 Z^T) conv X == (Y conv X) x1 Z^T
IdentityResult check_conv_product(Rng& rng, std::size_t cases);
// W conv (X x1 Z^T) == (W x2 Z) conv X
IdentityResult check_next_layer(Rng& rng, std::size_t cases);
// BN(s * x) of one channel == scale * BN(x) of another + bias
IdentityResult check_bn_relation(Rng& rng, std::size_t cases);

std::vector<IdentityResult> run_identity_suite(std::uint64_t seed);

} // namespace neuromerge
