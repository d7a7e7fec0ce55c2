#include "ergoflow/targets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ergoflow/rng.hpp"

namespace ergoflow {

namespace {

constexpr int kNormalizationDraws = 1000000;
constexpr double kMinAcceptance = 1e-3;

double gaussian_pdf(const Vec2& x, const Vec2& mean, const Mat2& cov) {
    const double det = cov.determinant();
    if (det <= 0.0) return 0.0;
    const Vec2 d = x - mean;
    const double q = d.dot(cov.inverse() * d);
    return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(det));
}

// Symmetric square root, tolerant of zero-variance (degenerate) components.
Mat2 cov_sqrt(const Mat2& cov) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
    const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

bool in_clip(const std::optional<SupportClip>& clip, const Vec2& x) {
    if (!clip) return true;
    const double r = x.norm();
    return r >= clip->r_min && r <= clip->r_max;
}

void validate_mixture(const GaussianMixture& g) {
    require(!g.weights.empty(), "mixture needs at least one component");
    require(g.weights.size() == g.means.size() && g.weights.size() == g.covariances.size(),
            "mixture weights, means and covariances differ in length");
    double total = 0.0;
    for (double w : g.weights) {
        require(w >= 0.0 && std::isfinite(w), "mixture weights must be finite and nonnegative");
        total += w;
    }
    require(std::abs(total - 1.0) < 1e-9, "mixture weights must sum to 1");
    for (const auto& c : g.covariances) {
        require(c.allFinite() && std::abs(c(0, 1) - c(1, 0)) < 1e-12, "covariance must be symmetric");
        require(Eigen::SelfAdjointEigenSolver<Mat2>(c).eigenvalues().minCoeff() >= -1e-15,
                "covariance must be positive semidefinite");
    }
    if (g.support_clip)
        require(g.support_clip->r_min >= 0.0 && g.support_clip->r_max > g.support_clip->r_min,
                "support clip needs 0 <= r_min < r_max");
}

void validate_grid(const GriddedDensity& g) {
    require(g.height >= 2 && g.width >= 2, "gridded density needs at least 2x2 cells");
    require(g.values.rows() == g.height && g.values.cols() == g.width, "grid shape mismatch");
    g.bbox.validate();
    require(g.values.allFinite() && g.values.minCoeff() >= 0.0, "grid values must be finite and >= 0");
    const double mass = g.values.sum() * g.cell_area();
    require(std::abs(mass - 1.0) < 1e-6, "gridded density must integrate to 1");
}

int sample_component(const std::vector<double>& w, double u) {
    double acc = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        acc += w[k];
        if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(w.size()) - 1;
}

Vec2 mixture_draw(const GaussianMixture& g, const std::vector<Mat2>& roots, Rng& rng) {
    const int k = sample_component(g.weights, rng.uniform());
    const Vec2 e(rng.normal(), rng.normal());
    return g.means[k] + roots[k] * e;
}

}  // namespace

Vec2 GriddedDensity::cell_center(int i, int j) const {
    return {bbox.xmin + (j + 0.5) * cell_width(), bbox.ymin + (i + 0.5) * cell_height()};
}

TargetSpec::TargetSpec(Variant v, std::uint64_t normalization_seed) : v_(std::move(v)) {
    if (auto* g = std::get_if<GaussianMixture>(&v_)) {
        validate_mixture(*g);
        if (g->support_clip) {
            std::vector<Mat2> roots;
            for (const auto& c : g->covariances) roots.push_back(cov_sqrt(c));
            Rng rng(normalization_seed, "target-normalization");
            int kept = 0;
            for (int i = 0; i < kNormalizationDraws; ++i)
                if (in_clip(g->support_clip, mixture_draw(*g, roots, rng))) ++kept;
            z_ = static_cast<double>(kept) / kNormalizationDraws;
            if (z_ < kMinAcceptance)
                throw DomainError("support clip keeps less than 0.1% of the mixture mass");
        }
    } else if (auto* b = std::get_if<BinaryHalfDisc>(&v_)) {
        require(b->ratio_low_over_high > 0.0 && std::isfinite(b->ratio_low_over_high),
                "binary density ratio must be positive");
    } else {
        validate_grid(std::get<GriddedDensity>(v_));
    }
}

std::string TargetSpec::kind() const {
    switch (v_.index()) {
        case 0: return "gaussian_mixture";
        case 1: return "binary_half_disc";
        default: return "gridded";
    }
}

double TargetSpec::raw_density(const Vec2& x) const {
    if (auto* g = std::get_if<GaussianMixture>(&v_)) {
        double d = 0.0;
        for (std::size_t k = 0; k < g->weights.size(); ++k)
            d += g->weights[k] * gaussian_pdf(x, g->means[k], g->covariances[k]);
        return d;
    }
    return density(x);
}

double TargetSpec::density(const Vec2& x) const {
    if (auto* g = std::get_if<GaussianMixture>(&v_)) {
        if (!in_clip(g->support_clip, x)) return 0.0;
        return raw_density(x) / z_;
    }
    if (auto* b = std::get_if<BinaryHalfDisc>(&v_)) {
        if (x.squaredNorm() > 1.0) return 0.0;
        const double r = b->ratio_low_over_high;
        return (x.y() < 0.0 ? 2.0 * r : 2.0) / (std::numbers::pi * (1.0 + r));
    }
    const auto& g = std::get<GriddedDensity>(v_);
    if (!g.bbox.contains(x)) return 0.0;
    const double fx = std::clamp((x.x() - g.bbox.xmin) / g.cell_width() - 0.5, 0.0, g.width - 1.0);
    const double fy = std::clamp((x.y() - g.bbox.ymin) / g.cell_height() - 0.5, 0.0, g.height - 1.0);
    const int j0 = std::min(static_cast<int>(fx), g.width - 2);
    const int i0 = std::min(static_cast<int>(fy), g.height - 2);
    const double tx = fx - j0, ty = fy - i0;
    const auto& V = g.values;
    return (1 - ty) * ((1 - tx) * V(i0, j0) + tx * V(i0, j0 + 1)) +
           ty * ((1 - tx) * V(i0 + 1, j0) + tx * V(i0 + 1, j0 + 1));
}

Points TargetSpec::sample(std::uint64_t rng_seed, int n) const {
    if (n < 1) throw DomainError("sample count must be at least 1");
    Rng rng(rng_seed, "target");
    Points out(2, n);
    if (auto* g = std::get_if<GaussianMixture>(&v_)) {
        std::vector<Mat2> roots;
        for (const auto& c : g->covariances) roots.push_back(cov_sqrt(c));
        long long tries = 0;
        for (int i = 0; i < n;) {
            const Vec2 x = mixture_draw(*g, roots, rng);
            ++tries;
            if (in_clip(g->support_clip, x)) {
                out.col(i++) = x;
            } else if (tries > 10000 && static_cast<double>(i) / tries < kMinAcceptance) {
                throw NumericError("rejection sampler acceptance below 1e-3 (" + std::to_string(i) +
                                   " of " + std::to_string(tries) + ")");
            }
        }
    } else if (auto* b = std::get_if<BinaryHalfDisc>(&v_)) {
        const double p_low = b->ratio_low_over_high / (1.0 + b->ratio_low_over_high);
        for (int i = 0; i < n; ++i) {
            const bool low = rng.uniform() < p_low;
            const double r = std::sqrt(rng.uniform());
            const double th = std::numbers::pi * (rng.uniform() + (low ? 1.0 : 0.0));
            out(0, i) = r * std::cos(th);
            out(1, i) = r * std::sin(th);
        }
    } else {
        const auto& g = std::get<GriddedDensity>(v_);
        std::vector<double> cdf(static_cast<std::size_t>(g.values.size()));
        double acc = 0.0;
        for (int i = 0; i < g.height; ++i)
            for (int j = 0; j < g.width; ++j) {
                acc += g.values(i, j);
                cdf[static_cast<std::size_t>(i) * g.width + j] = acc;
            }
        for (int k = 0; k < n; ++k) {
            const double u = rng.uniform() * acc;
            auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
            auto idx = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), cdf.size() - 1));
            while (g.values(idx / g.width, idx % g.width) <= 0.0 && idx > 0) --idx;
            const int i = idx / g.width, j = idx % g.width;
            out(0, k) = g.bbox.xmin + (j + rng.uniform()) * g.cell_width();
            out(1, k) = g.bbox.ymin + (i + rng.uniform()) * g.cell_height();
        }
    }
    return out;
}

BBox TargetSpec::support_box() const {
    if (auto* g = std::get_if<GaussianMixture>(&v_)) {
        if (g->support_clip) {
            const double r = g->support_clip->r_max;
            return {-r, r, -r, r};
        }
        BBox b{std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest(),
               std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()};
        for (std::size_t k = 0; k < g->means.size(); ++k) {
            const double sx = 5.0 * std::sqrt(g->covariances[k](0, 0));
            const double sy = 5.0 * std::sqrt(g->covariances[k](1, 1));
            b.xmin = std::min(b.xmin, g->means[k].x() - sx);
            b.xmax = std::max(b.xmax, g->means[k].x() + sx);
            b.ymin = std::min(b.ymin, g->means[k].y() - sy);
            b.ymax = std::max(b.ymax, g->means[k].y() + sy);
        }
        return b;
    }
    if (std::holds_alternative<BinaryHalfDisc>(v_)) return {};
    return std::get<GriddedDensity>(v_).bbox;
}

TargetSpec exp1_target(double delta) {
    GaussianMixture g;
    g.weights = {0.5, 0.5};
    g.means = {Vec2(-0.3, 0.0), Vec2(0.3, 0.0)};
    g.covariances = {0.04 * Mat2::Identity(), 0.04 * Mat2::Identity()};
    g.support_clip = SupportClip{delta, 1.0};
    return TargetSpec(g);
}

TargetSpec exp2_target() { return TargetSpec(BinaryHalfDisc{3.0}); }

// ---------------------------------------------------------------- ingestion

std::vector<double> gaussian_kernel(double sigma) {
    require(sigma > 0.0, "blur sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        total += k[i + radius];
    }
    for (double& v : k) v /= total;
    return k;
}

namespace {

int mirror(int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
}

}  // namespace

Eigen::MatrixXd gaussian_blur(const Eigen::MatrixXd& grid, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    const int H = static_cast<int>(grid.rows()), W = static_cast<int>(grid.cols());
    Eigen::MatrixXd tmp = Eigen::MatrixXd::Zero(H, W), out = Eigen::MatrixXd::Zero(H, W);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            double acc = 0.0;
            for (int d = -r; d <= r; ++d) acc += k[d + r] * grid(i, mirror(j + d, W));
            tmp(i, j) = acc;
        }
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            double acc = 0.0;
            for (int d = -r; d <= r; ++d) acc += k[d + r] * tmp(mirror(i + d, H), j);
            out(i, j) = acc;
        }
    return out;
}

GriddedDensity ingest_grid(const Eigen::MatrixXd& raw, double sigma, double floor, const BBox& bbox) {
    require(raw.rows() >= 2 && raw.cols() >= 2, "grid must be at least 2x2");
    require(raw.allFinite(), "grid has non-finite entries");
    require(raw.minCoeff() >= 0.0, "grid has negative entries");
    require(sigma >= 0.0 && floor >= 0.0, "sigma and floor must be nonnegative");
    bbox.validate();
    Eigen::MatrixXd v = sigma > 0.0 ? gaussian_blur(raw, sigma) : raw;
    v = v.cwiseMax(floor);
    GriddedDensity g;
    g.height = static_cast<int>(raw.rows());
    g.width = static_cast<int>(raw.cols());
    g.bbox = bbox;
    const double mass = v.sum() * g.cell_area();
    if (!(mass > 0.0)) throw NumericError("grid has no mass after the floor clip");
    g.values = v / mass;
    return g;
}

}  // namespace ergoflow
