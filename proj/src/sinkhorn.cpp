#include <algorithm>
#include <cmath>

#include "ergoflow/ot.hpp"
#include "ergoflow/rng.hpp"

namespace ergoflow {

double CouplingPlan::row_residual() const {
    return (plan.rowwise().sum() - row_marginal).cwiseAbs().maxCoeff();
}

double CouplingPlan::col_residual() const {
    return (plan.colwise().sum().transpose() - col_marginal).cwiseAbs().maxCoeff();
}

RowMatrix sq_euclidean_cost(const Points& a, const Points& b) {
    const Eigen::VectorXd na = a.colwise().squaredNorm().transpose();
    const Eigen::RowVectorXd nb = b.colwise().squaredNorm();
    RowMatrix C = -2.0 * (a.transpose() * b);
    C.colwise() += na;
    C.rowwise() += nb;
    return C.cwiseMax(0.0);
}

CouplingPlan sinkhorn_plan(const Points& source, const Points& target, double eps,
                           int n_iters, const SinkhornOptions& opts) {
    const Eigen::Index n = source.cols(), m = target.cols();
    if (n == 0 || m == 0) throw DomainError("sinkhorn needs nonempty point sets");
    if (!(eps > 0.0)) throw DomainError("eps_sink must be positive");
    if (n_iters < 1) throw DomainError("sinkhorn needs at least one iteration");
    if (!source.allFinite() || !target.allFinite())
        throw NumericError("non-finite coordinates passed to sinkhorn");

    const RowMatrix C = sq_euclidean_cost(source, target);
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(n, 1.0 / n);
    const Eigen::VectorXd b = Eigen::VectorXd::Constant(m, 1.0 / m);

    Eigen::VectorXd f = C.rowwise().minCoeff();
    Eigen::RowVectorXd g = (C.colwise() - f).colwise().minCoeff();

    RowMatrix K(n, m);
    auto rebuild = [&] {
        K = C;
        K.colwise() -= f;
        K.rowwise() -= g;
        K = (K.array() * (-1.0 / eps)).exp().matrix();
    };
    rebuild();

    Eigen::VectorXd u = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(m);
    const double hi = std::exp(opts.absorb_threshold), lo = std::exp(-opts.absorb_threshold);
    for (int it = 0; it < n_iters; ++it) {
        u = a.cwiseQuotient(K * v);
        v = b.cwiseQuotient(K.transpose() * u);
        const bool out_of_range = u.maxCoeff() > hi || u.minCoeff() < lo || v.maxCoeff() > hi ||
                                  v.minCoeff() < lo;
        if (!u.allFinite() || !v.allFinite()) throw NumericError("sinkhorn scaling diverged");
        if (out_of_range && it + 1 < n_iters) {
            f += eps * u.array().log().matrix();
            g += eps * v.array().log().matrix().transpose();
            rebuild();
            u.setOnes();
            v.setOnes();
        }
    }

    CouplingPlan out;
    out.eps_sink = eps;
    out.iterations = n_iters;
    out.row_marginal = a;
    out.col_marginal = b;
    out.plan = u.asDiagonal() * K * v.asDiagonal();
    out.raw_row_residual = (out.plan.rowwise().sum() - a).cwiseAbs().sum();
    out.raw_col_residual = (out.plan.colwise().sum().transpose() - b).cwiseAbs().sum();

    if (opts.round) {
        Eigen::MatrixXd& P = out.plan;
        const Eigen::VectorXd rs = P.rowwise().sum();
        for (Eigen::Index i = 0; i < n; ++i)
            if (rs(i) > a(i)) P.row(i) *= a(i) / rs(i);
        const Eigen::RowVectorXd cs = P.colwise().sum();
        for (Eigen::Index j = 0; j < m; ++j)
            if (cs(j) > b(j)) P.col(j) *= b(j) / cs(j);
        // deficits are nonnegative up to round-off; clamp so P stays >= 0
        const Eigen::VectorXd er = (a - P.rowwise().sum()).cwiseMax(0.0);
        const Eigen::VectorXd ec = (b - P.colwise().sum().transpose()).cwiseMax(0.0);
        const double mass = er.sum();
        if (mass > 0.0) P.noalias() += er * ec.transpose() / mass;
    }
    return out;
}

double transport_cost(const CouplingPlan& plan, const RowMatrix& cost) {
    require(plan.plan.rows() == cost.rows() && plan.plan.cols() == cost.cols(),
            "plan and cost shapes differ");
    return plan.plan.cwiseProduct(Eigen::MatrixXd(cost)).sum();
}

std::vector<std::pair<int, int>> sample_pairs(const CouplingPlan& plan, std::uint64_t rng_seed) {
    const Eigen::MatrixXd& P = plan.plan;
    Rng rng(rng_seed, "pairs");
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<std::size_t>(P.rows()));
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        const double total = P.row(i).sum();
        if (!(total > 0.0)) throw DomainError("plan row " + std::to_string(i) + " has no mass");
        const double target = rng.uniform() * total;
        double acc = 0.0;
        Eigen::Index pick = P.cols() - 1;
        for (Eigen::Index j = 0; j < P.cols(); ++j) {
            acc += P(i, j);
            if (acc > target) {
                pick = j;
                break;
            }
        }
        // never land on a zero-mass column through round-off at the tail
        while (pick > 0 && P(i, pick) <= 0.0) --pick;
        out.emplace_back(static_cast<int>(i), static_cast<int>(pick));
    }
    return out;
}

Points barycentric_targets(const CouplingPlan& plan, const Points& target) {
    require(plan.plan.cols() == target.cols(), "plan columns do not match target count");
    const Eigen::VectorXd rs = plan.plan.rowwise().sum();
    if ((rs.array() <= 0.0).any()) throw DomainError("plan has a row without mass");
    Points out = target * plan.plan.transpose();
    out.array().rowwise() /= rs.transpose().array();
    return out;
}

}  // namespace ergoflow
