#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ergoflow {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
// Point sets are stored column-wise: one 2D point per column.
using Points = Eigen::Matrix<double, 2, Eigen::Dynamic>;

// Bad arguments or violated preconditions.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite values or failed numerical procedures.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed configuration or input files.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw DomainError(msg);
}

struct BBox {
    double xmin = -1.0, xmax = 1.0, ymin = -1.0, ymax = 1.0;

    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    bool contains(const Vec2& p) const {
        return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax;
    }
    void validate() const {
        require(xmax > xmin && ymax > ymin, "bbox must have positive extent");
    }
};

// No-fly zone disc.
struct Disc {
    Vec2 center = Vec2::Zero();
    double radius = 0.0;
};

}  // namespace ergoflow
