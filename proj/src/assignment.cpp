#include <cmath>
#include <limits>
#include <numeric>

#include "ergoflow/ot.hpp"

namespace ergoflow {

namespace {

constexpr double kLarge = std::numeric_limits<double>::infinity();

struct Lapjv {
    const RowMatrix& c;
    int n;
    std::vector<int> x, y;  // row -> col, col -> row
    std::vector<double> v;  // column duals

    explicit Lapjv(const RowMatrix& cost)
        : c(cost), n(static_cast<int>(cost.rows())), x(n, -1), y(n, -1), v(n, kLarge) {}

    // Column reduction plus reduction transfer. Returns the free rows.
    std::vector<int> column_reduction() {
        std::vector<int> ymin(n, 0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (c(i, j) < v[j]) {
                    v[j] = c(i, j);
                    ymin[j] = i;
                }
        std::vector<char> unique(n, 1);
        for (int j = n - 1; j >= 0; --j) {
            const int i = ymin[j];
            if (x[i] < 0) {
                x[i] = j;
                y[j] = i;
            } else {
                unique[i] = 0;
                y[j] = -1;
            }
        }
        std::vector<int> free_rows;
        for (int i = 0; i < n; ++i) {
            if (x[i] < 0) {
                free_rows.push_back(i);
            } else if (unique[i]) {
                const int j = x[i];
                double mn = kLarge;
                for (int j2 = 0; j2 < n; ++j2)
                    if (j2 != j) mn = std::min(mn, c(i, j2) - v[j2]);
                if (mn < kLarge) v[j] -= mn;
            }
        }
        return free_rows;
    }

    // Dijkstra-like shortest augmenting path from a free row.
    int find_path(int start, std::vector<int>& pred, std::vector<double>& d,
                  std::vector<int>& cols) {
        std::iota(cols.begin(), cols.end(), 0);
        for (int j = 0; j < n; ++j) {
            pred[j] = start;
            d[j] = c(start, j) - v[j];
        }
        int lo = 0, hi = 0, n_ready = 0, final_j = -1;
        while (final_j < 0) {
            if (lo == hi) {
                n_ready = lo;
                // collect columns with minimal d into [lo, hi)
                hi = lo + 1;
                double mind = d[cols[lo]];
                for (int k = hi; k < n; ++k) {
                    const int j = cols[k];
                    if (d[j] <= mind) {
                        if (d[j] < mind) {
                            hi = lo;
                            mind = d[j];
                        }
                        cols[k] = cols[hi];
                        cols[hi++] = j;
                    }
                }
                for (int k = lo; k < hi; ++k)
                    if (y[cols[k]] < 0) {
                        final_j = cols[k];
                        break;
                    }
            }
            if (final_j < 0) final_j = scan(lo, hi, pred, d, cols);
        }
        const double mind = d[cols[lo]];
        for (int k = 0; k < n_ready; ++k) {
            const int j = cols[k];
            v[j] += d[j] - mind;
        }
        return final_j;
    }

    // Works on copies of the window bounds: on an early return the caller's
    // lo must still index a column at the current minimum distance.
    int scan(int& lo_ref, int& hi_ref, std::vector<int>& pred, std::vector<double>& d,
             std::vector<int>& cols) {
        int lo = lo_ref, hi = hi_ref;
        while (lo != hi) {
            int j = cols[lo++];
            const int i = y[j];
            const double mind = d[j];
            const double h = c(i, j) - v[j] - mind;
            for (int k = hi; k < n; ++k) {
                j = cols[k];
                const double cred = c(i, j) - v[j] - h;
                if (cred < d[j]) {
                    d[j] = cred;
                    pred[j] = i;
                    if (cred == mind) {
                        if (y[j] < 0) return j;
                        cols[k] = cols[hi];
                        cols[hi++] = j;
                    }
                }
            }
        }
        lo_ref = lo;
        hi_ref = hi;
        return -1;
    }

    void augment(const std::vector<int>& free_rows) {
        std::vector<int> pred(n), cols(n);
        std::vector<double> d(n);
        for (int fi : free_rows) {
            int j = find_path(fi, pred, d, cols);
            int i = -1;
            while (i != fi) {
                i = pred[j];
                y[j] = i;
                std::swap(j, x[i]);
            }
        }
    }
};

}  // namespace

Assignment solve_assignment(const RowMatrix& cost) {
    if (cost.rows() != cost.cols()) throw DomainError("assignment needs a square cost matrix");
    if (!cost.allFinite()) throw NumericError("assignment cost has non-finite entries");
    const int n = static_cast<int>(cost.rows());
    Assignment out;
    if (n == 0) return out;
    if (n == 1) {
        out.row_to_col = {0};
        out.cost = cost(0, 0);
        return out;
    }
    Lapjv s(cost);
    // No augmenting row reduction: on near-tied costs (Sinkhorn plans, clustered
    // targets) it creeps the duals down in tiny steps and dominated runtime.
    const auto free_rows = s.column_reduction();
    if (!free_rows.empty()) s.augment(free_rows);
    out.row_to_col = s.x;
    for (int i = 0; i < n; ++i) {
        if (s.x[i] < 0) throw NumericError("assignment solver left a row unmatched");
        out.cost += cost(i, s.x[i]);
    }
    return out;
}

std::vector<std::pair<int, int>> permutation_pairs(const CouplingPlan& plan) {
    const Eigen::Index n = plan.plan.rows();
    require(n > 0 && plan.plan.cols() == n, "permutation rounding needs a square plan");
    const RowMatrix weight = -static_cast<double>(n) * plan.plan;
    const Assignment asg = solve_assignment(weight);
    std::vector<std::pair<int, int>> pairs(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) pairs[i] = {static_cast<int>(i), asg.row_to_col[i]};
    return pairs;
}

double exact_w2(const Points& a, const Points& b, int cap) {
    if (a.cols() != b.cols()) throw DomainError("exact_w2 needs equal-size point sets");
    if (a.cols() == 0) throw DomainError("exact_w2 needs nonempty point sets");
    if (a.cols() > cap)
        throw DomainError("exact_w2 size " + std::to_string(a.cols()) + " exceeds cap " +
                          std::to_string(cap));
    const RowMatrix C = sq_euclidean_cost(a, b);
    const Assignment asg = solve_assignment(C);
    // Re-evaluate matched pairs directly: the expanded cost matrix carries
    // cancellation error that sqrt would amplify near zero.
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.cols(); ++i) total += (a.col(i) - b.col(asg.row_to_col[i])).squaredNorm();
    return std::sqrt(total / static_cast<double>(a.cols()));
}

}  // namespace ergoflow
