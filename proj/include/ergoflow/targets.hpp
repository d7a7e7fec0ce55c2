#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "ergoflow/common.hpp"

namespace ergoflow {

// Radial support window r_min <= |x| <= r_max.
struct SupportClip {
    double r_min = 0.0;
    double r_max = 1.0;
};

struct GaussianMixture {
    std::vector<double> weights;
    std::vector<Vec2> means;
    std::vector<Mat2> covariances;
    std::optional<SupportClip> support_clip;
};

// Unit disc with density ratio (lower half x2 < 0) : (upper half).
struct BinaryHalfDisc {
    double ratio_low_over_high = 3.0;
};

// Row i spans y in [ymin + i*h, ymin + (i+1)*h]; column j spans x likewise.
struct GriddedDensity {
    int height = 0;
    int width = 0;
    BBox bbox;
    Eigen::MatrixXd values;  // density per cell; sum(values) * cell_area = 1
    std::optional<double> meters_per_unit;

    double cell_width() const { return bbox.width() / width; }
    double cell_height() const { return bbox.height() / height; }
    double cell_area() const { return cell_width() * cell_height(); }
    Vec2 cell_center(int i, int j) const;
};

class TargetSpec {
public:
    using Variant = std::variant<GaussianMixture, BinaryHalfDisc, GriddedDensity>;

    explicit TargetSpec(Variant v, std::uint64_t normalization_seed = 0);

    const Variant& variant() const { return v_; }
    std::string kind() const;

    // Normalized density; zero outside the support.
    double density(const Vec2& x) const;
    // Mixture density before support clipping and renormalization.
    double raw_density(const Vec2& x) const;
    // Mass of the raw mixture kept by the support clip (1 without a clip).
    double normalization() const { return z_; }

    Points sample(std::uint64_t rng_seed, int n) const;

    // Axis-aligned box containing the support.
    BBox support_box() const;

private:
    Variant v_;
    double z_ = 1.0;
};

TargetSpec exp1_target(double delta = 0.01);
TargetSpec exp2_target();

// Truncated Gaussian blur (sigma in cells, radius ceil(3 sigma), mirrored
// boundary), floor clip, then normalization so that cell values times cell
// area sum to 1. sigma = 0 skips the blur.
GriddedDensity ingest_grid(const Eigen::MatrixXd& raw, double smoothing_sigma, double floor,
                           const BBox& bbox = {});

// Separable blur used by ingest_grid; exposed for testing.
Eigen::MatrixXd gaussian_blur(const Eigen::MatrixXd& grid, double sigma);
std::vector<double> gaussian_kernel(double sigma);

}  // namespace ergoflow
