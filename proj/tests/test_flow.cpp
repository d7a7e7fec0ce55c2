#include <chrono>
#include <cmath>
#include <memory>

#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "ergoflow/flow.hpp"
#include "ergoflow/latent.hpp"
#include "ergoflow/rng.hpp"
#include "ergoflow/targets.hpp"

using namespace ergoflow;
using doctest::Approx;

namespace {

std::shared_ptr<const VelocityField> linear(const Mat2& A, const Vec2& c = Vec2::Zero()) {
    return std::make_shared<LinearField>(A, c);
}

Mat2 rotation_generator() {
    Mat2 A;
    A << 0, -1, 1, 0;
    return A;
}

Points random_points(std::uint64_t seed, int n) {
    Rng rng(seed);
    Points p(2, n);
    for (int i = 0; i < n; ++i) p.col(i) = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    return p;
}

double max_col_error(const Points& a, const Points& b) { return (a - b).colwise().norm().maxCoeff(); }

}  // namespace

TEST_CASE("integration of zero, constant and linear fields") {
    const Points z = random_points(1, 50);
    CHECK(max_col_error(integrate(FlowMap(linear(Mat2::Zero()), 50), z), z) == 0.0);
    const Vec2 c(0.3, -0.7);
    for (int steps : {1, 3, 50}) {
        Points want = z;
        want.colwise() += c;
        CHECK(max_col_error(integrate(FlowMap(linear(Mat2::Zero(), c), steps), z), want) < 1e-14);
    }
    const Mat2 expA = rotation_generator().exp();
    CHECK(max_col_error(integrate(FlowMap(linear(rotation_generator()), 50), z), expA * z) < 1e-8);
    CHECK(max_col_error(integrate(FlowMap(linear(rotation_generator()), 50), z), expA * z) > 0.0);
}

TEST_CASE("RK4 error falls by about 16 per step doubling") {
    const Points z = random_points(2, 20);
    const Points exact = rotation_generator().exp() * z;
    for (int n : {5, 10, 20}) {
        const double e1 = max_col_error(integrate(FlowMap(linear(rotation_generator()), n), z), exact);
        const double e2 = max_col_error(integrate(FlowMap(linear(rotation_generator()), 2 * n), z), exact);
        CAPTURE(n);
        CHECK(e1 / e2 >= 12.0);
        CHECK(e1 / e2 <= 20.0);
    }
}

TEST_CASE("non-finite states abort integration") {
    Mat2 A = Mat2::Identity() * 800.0;
    const FlowMap blowup(linear(A), 1);
    CHECK_THROWS_AS(integrate(blowup, Points(random_points(3, 4) * 1e300)), NumericError);
}

TEST_CASE("pushforward preserves timestamps and tags") {
    const auto latent = generate_trajectory(5, 0.1, 3, 20).flatten();
    const FlowMap id(linear(Mat2::Zero()), 10);
    const auto out = pushforward_trajectory(id, latent);
    CHECK(out.points == latent.points);
    CHECK(out.t == latent.t);
    CHECK(out.cycle == latent.cycle);
    CHECK(out.leg == latent.leg);
    const FlowMap shift(linear(Mat2::Zero(), Vec2(1, 0)), 10);
    const auto moved = pushforward_trajectory(shift, latent);
    CHECK(moved.points(0, 5) == Approx(latent.points(0, 5) + 1.0));
}

TEST_CASE("central-difference Jacobians") {
    const Vec2 z(0.3, -0.2);
    CHECK((jacobian(FlowMap(linear(Mat2::Zero())), z) - Mat2::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((jacobian(FlowMap(linear(Mat2::Zero(), Vec2(2, 1))), z) - Mat2::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    const Mat2 expA = rotation_generator().exp();
    CHECK((jacobian(FlowMap(linear(rotation_generator())), z) - expA).cwiseAbs().maxCoeff() < 1e-5);
    const auto batch = jacobians(FlowMap(linear(rotation_generator())), random_points(4, 10));
    for (const auto& J : batch) CHECK((J - expA).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("map Lipschitz estimate") {
    CHECK(map_lipschitz_hat(FlowMap(linear(Mat2::Zero())), 0.1) == Approx(1.0).epsilon(1e-6));
    Mat2 A;
    A << 0.3, 0.5, 0.0, -0.2;
    const double want = Eigen::JacobiSVD<Mat2>(Mat2(A.exp())).singularValues()(0);
    CHECK(map_lipschitz_hat(FlowMap(linear(A)), 0.1, 256) == Approx(want).epsilon(1e-4));
    CHECK(sigma_max(Mat2(Eigen::Vector2d(3, 1).asDiagonal())) == Approx(3.0));
}

TEST_CASE("velocity Lipschitz estimate and the architectural bracket") {
    const auto target = exp1_target();
    CHECK(velocity_lipschitz_hat(LinearField(Mat2::Zero()), 0.1, target, 1) == 0.0);
    CHECK(velocity_lipschitz_hat(LinearField(2.0 * Mat2::Identity()), 0.1, target, 1) == Approx(2.0).epsilon(1e-3));
    VelocityLipschitzOptions quick;
    quick.n_pts = 128;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = MlpParams::init({3, 32, Activation::SiLU}, seed);
        CHECK(velocity_lipschitz_hat(MlpField(p), 0.05, target, seed, quick) <= lv_net(p));
    }
}

TEST_CASE("learned flows are injective and obey the Gronwall bound") {
    const auto p = MlpParams::init({2, 32, Activation::SiLU}, 8);
    const FlowMap G(p, 20);
    const double bound = std::exp(lv_net(p));
    Rng rng(9);
    const int n = 100000;
    Points a(2, n), b(2, n);
    for (int i = 0; i < n; ++i) {
        a.col(i) = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
        Vec2 d(rng.normal(), rng.normal());
        d *= (1e-3 + 0.5 * rng.uniform()) / d.norm();
        b.col(i) = a.col(i) + d;
    }
    const Points ga = G.apply(a), gb = G.apply(b);
    int collisions = 0;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        const double out = (ga.col(i) - gb.col(i)).norm(), in = (a.col(i) - b.col(i)).norm();
        if (out < 1e-12) ++collisions;
        worst = std::max(worst, out / in);
    }
    CHECK(collisions == 0);
    CHECK(worst <= bound);
}

TEST_CASE("finite-difference Hessians") {
    const FunctionMap quad([](const Vec2& z) { return Vec2(z.x() * z.x(), 0.0); });
    const auto h = hessians(quad, random_points(5, 10));
    for (Eigen::Index i = 0; i < 10; ++i) CHECK(h.frobenius_sq(i) == Approx(4.0).epsilon(1e-6));
    const FlowMap affine(linear(rotation_generator(), Vec2(0.1, 0.2)));
    CHECK(hessians(affine, random_points(6, 10)).frobenius_sq.maxCoeff() < 1e-6);

    const FunctionMap mixed([](const Vec2& z) { return Vec2(z.x() * z.y(), z.y() * z.y() * z.y()); });
    const Points z = random_points(7, 4);
    const auto hm = hessians(mixed, z, 1e-3);
    for (Eigen::Index i = 0; i < 4; ++i) {
        CHECK(hm.h1[i](0, 1) == Approx(1.0).epsilon(1e-6));
        CHECK(hm.h1[i](0, 0) == Approx(0.0).epsilon(1e-6));
        CHECK(hm.h2[i](1, 1) == Approx(6 * z(1, i)).epsilon(1e-5));
    }
    const auto via_stencil = hessians_from_stencil(mixed.apply(hessian_stencil(z, 1e-3)), 4, 1e-3);
    CHECK((via_stencil.frobenius_sq - hm.frobenius_sq).cwiseAbs().maxCoeff() < 1e-12);
    // |hess G_1|_op = 1 and |hess G_2|_op = 6|z_2| <= 6 on the unit disc.
    CHECK(hessian_norm_hat(mixed, 0.1, 512, 1e-3) <= std::sqrt(1.0 + 36.0) + 1e-3);
    CHECK(hessian_norm_hat(mixed, 0.1, 512, 1e-3) > 4.0);
}

TEST_CASE("lookup table distillation") {
    const FlowMap id(linear(Mat2::Zero()));
    const auto lut_id = lookup_table(id, 17, 0.05);
    const Points z = uniform_annulus_sample(3, 0.05, 500);
    CHECK(max_col_error(lut_id.apply(z), z) < 1e-14);
    CHECK(lut_id.probe_ok);

    const auto p = MlpParams::init({4, 64, Activation::SiLU}, 21);
    const FlowMap G(p, 50);
    const auto lut = lookup_table(G, 256, 0.01);
    CHECK(lut.probe_max_error < 1e-2);
    CHECK(lut.probe_ok);
    const auto coarse = lookup_table(G, 3, 0.01, {}, 1000, 1e-6);
    CHECK_FALSE(coarse.probe_ok);

    const Points many = uniform_annulus_sample(4, 0.01, 100000);
    auto t0 = std::chrono::steady_clock::now();
    const Points direct = G.apply(many);
    const double t_direct = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    t0 = std::chrono::steady_clock::now();
    const Points fast = lut.apply(many);
    const double t_lut = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(t_direct >= 10 * t_lut);
    CHECK(max_col_error(direct, fast) < 1e-2);
}
