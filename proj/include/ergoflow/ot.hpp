#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ergoflow/common.hpp"

namespace ergoflow {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CouplingPlan {
    Eigen::MatrixXd plan;
    Eigen::VectorXd row_marginal;
    Eigen::VectorXd col_marginal;
    double eps_sink = 0.0;
    int iterations = 0;
    // L1 marginal violation of the scaled kernel before feasibility rounding.
    double raw_row_residual = 0.0;
    double raw_col_residual = 0.0;

    double row_residual() const;  // max |row sum - row marginal|
    double col_residual() const;
};

struct SinkhornOptions {
    // Project onto the transport polytope after the last sweep
    // (Altschuler, Weed, Rigollet 2017) so marginals hold to round-off.
    bool round = true;
    // Fold scalings into the dual potentials once they leave [e^-t, e^t].
    double absorb_threshold = 50.0;
};

// Squared Euclidean cost, one row per source point.
RowMatrix sq_euclidean_cost(const Points& a, const Points& b);

// Entropic OT with uniform marginals. Scaling iterations run on a kernel
// stabilized by dual potentials (initialized by a c-transform so every row
// and column holds an entry equal to 1).
CouplingPlan sinkhorn_plan(const Points& source, const Points& target, double eps_sink,
                           int n_iters, const SinkhornOptions& opts = {});

double transport_cost(const CouplingPlan& plan, const RowMatrix& cost);

// One (source, target) pair per source row, target index drawn from the row.
std::vector<std::pair<int, int>> sample_pairs(const CouplingPlan& plan, std::uint64_t rng_seed);

// Row-conditional mean of the target points.
Points barycentric_targets(const CouplingPlan& plan, const Points& target);

struct Assignment {
    std::vector<int> row_to_col;
    double cost = 0.0;
};

// Exact minimum-cost perfect matching on a square matrix (Jonker-Volgenant:
// column reduction, augmenting row reduction, shortest augmenting paths).
Assignment solve_assignment(const RowMatrix& cost);

// Max-weight permutation of a square plan: a deterministic rounding onto the
// permutation couplings, which keep both empirical marginals exact.
std::vector<std::pair<int, int>> permutation_pairs(const CouplingPlan& plan);

// sqrt of the minimal mean squared pairing distance between equal-size sets.
double exact_w2(const Points& a, const Points& b, int cap = 4096);

}  // namespace ergoflow
