#include "doctest.h"
#include "oracles.hpp"

#include "madv/svgd.hpp"

using namespace madv;

namespace {

MatrixXd col(std::initializer_list<double> v) {
    MatrixXd m(Eigen::Index(v.size()), 1);
    Eigen::Index i = 0;
    for (double e : v) m(i++, 0) = e;
    return m;
}

// Converged SVGD sample of N(mu, sd^2).
MatrixXd gaussian_particles(double mu, double sd, int count, int steps, double step, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    MatrixXd p = oracle::random_matrix(rng, count, 1, 3.0 * sd);
    p.array() += mu;
    auto g = [&](const VectorXd& x) { return VectorXd((mu - x.array()) / (sd * sd)); };
    for (int s = 0; s < steps; ++s) p = svgd_step(p, g, step);
    return p;
}

}  // namespace

TEST_CASE("rbf_kernel: examples") {
    VectorXd u(1), v(1);
    u << 0.0;
    v << 1.0;
    CHECK(rbf_kernel(u, v, 1.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    CHECK(rbf_kernel(u, u, 0.3) == 1.0);
    v << 1e3;
    CHECK(rbf_kernel(u, v, 1.0) == 0.0);
}

TEST_CASE("rbf_kernel: symmetric, positive, analytic gradient") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const VectorXd u = oracle::random_vector(rng, 4), v = oracle::random_vector(rng, 4);
        const double h = 0.5 + trial * 0.05;
        const double k = rbf_kernel(u, v, h);
        CHECK(k == rbf_kernel(v, u, h));
        CHECK(k > 0.0);
        CHECK(k <= 1.0);
        const VectorXd fd = finite_diff_grad([&](const VectorXd& w) { return rbf_kernel(w, v, h); }, u, 1e-6);
        CHECK((rbf_kernel_grad(u, v, h) - fd).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("median_bandwidth: examples") {
    CHECK(median_bandwidth(col({0.0, 2.5})) == doctest::Approx(std::sqrt(2.5 * 2.5 / (2 * std::log(3.0)))));
    CHECK(median_bandwidth(col({1.0, 1.0, 1.0})) == kBandwidthFloor);
    MatrixXd tri(3, 2);
    tri << 0, 0, 1, 0, 0.5, std::sqrt(3.0) / 2;
    CHECK(median_bandwidth(tri) == doctest::Approx(std::sqrt(1.0 / (2 * std::log(4.0)))).epsilon(1e-12));
    CHECK_THROWS_AS(median_bandwidth(col({1.0})), ConfigError);
}

TEST_CASE("svgd_tau: one particle is plain gradient ascent") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const MatrixXd p = oracle::random_matrix(rng, 1, 5);
        const MatrixXd g = oracle::random_matrix(rng, 1, 5);
        CHECK(svgd_tau(p, g, 0.7) == g);
        const VectorXd pi = svgd_pi(VectorXd(p.row(0).transpose()), p, g, 0.7);
        CHECK(pi == VectorXd(g.row(0).transpose()));
    }
}

TEST_CASE("svgd_tau: zero gradients give mutual repulsion") {
    MatrixXd p(2, 2);
    p << 0.0, 0.0, 1.0, 2.0;
    const MatrixXd tau = svgd_tau(p, MatrixXd(MatrixXd::Zero(2, 2)), 1.0);
    const RowVector<double> diff = p.row(1) - p.row(0);
    CHECK(tau.row(1).dot(diff) > 0.0);
    CHECK(tau.row(0).dot(diff) < 0.0);
    CHECK((tau.row(0) + tau.row(1)).norm() < 1e-15);
    // Parallel to the difference vector.
    CHECK(std::abs(tau(1, 0) * diff(1) - tau(1, 1) * diff(0)) < 1e-15);
}

TEST_CASE("svgd_tau: non-finite gradient names the particle") {
    MatrixXd p = MatrixXd::Zero(3, 1), g = MatrixXd::Zero(3, 1);
    g(2, 0) = std::nan("");
    try {
        svgd_tau(p, g, 1.0);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("particle 2") != std::string::npos);
    }
}

TEST_CASE("svgd_pi: zero leader gradients repel the follower") {
    MatrixXd leaders(1, 1);
    leaders << 0.0;
    VectorXd f(1);
    f << 0.5;
    CHECK(svgd_pi(f, leaders, MatrixXd(MatrixXd::Zero(1, 1)), 1.0)[0] > 0.0);
    f << -0.5;
    CHECK(svgd_pi(f, leaders, MatrixXd(MatrixXd::Zero(1, 1)), 1.0)[0] < 0.0);
}

TEST_CASE("svgd_pi: a follower placed on a leader moves with the leaders' field") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const MatrixXd leaders = oracle::random_matrix(rng, 6, 3);
        const MatrixXd g = oracle::random_matrix(rng, 6, 3);
        const double h = median_bandwidth(leaders);
        const MatrixXd tau = svgd_tau(leaders, g, h);
        for (Eigen::Index j = 0; j < leaders.rows(); ++j) {
            const VectorXd pi = svgd_pi(VectorXd(leaders.row(j).transpose()), leaders, g, h);
            CHECK((pi - tau.row(j).transpose()).cwiseAbs().maxCoeff() < 1e-14);
        }
    }
}

TEST_CASE("svgd_pi: follower on a leader away from the optimum is pulled toward it") {
    MatrixXd leader(1, 1);
    leader << 2.0;
    VectorXd f(1);
    f << 2.0;
    for (int s = 0; s < 50; ++s) {
        const double before = std::abs(f[0]);
        const MatrixXd g = -leader;
        f += 0.05 * svgd_pi(f, leader, g, 1.0);
        leader += 0.05 * g;
        CHECK(std::abs(f[0]) < before);
        CHECK(f[0] == doctest::Approx(leader(0, 0)).epsilon(1e-12));
    }
}

TEST_CASE("svgd_step: zero step and single-particle ascent") {
    std::mt19937_64 rng(4);
    const MatrixXd p = oracle::random_matrix(rng, 6, 3);
    auto g = [](const VectorXd& x) { return VectorXd(-2.0 * x); };
    CHECK(svgd_step(p, g, 0.0) == p);

    MatrixXd one(1, 2);
    one << 1.0, -2.0;
    MatrixXd expect = one;
    for (int s = 0; s < 10; ++s) {
        one = svgd_step(one, g, 0.1);
        expect = expect - 0.2 * expect;
        CHECK(one == expect);
    }
}

TEST_CASE("svgd demos recover known targets") {
    const DemoResult n = svgd_demo(DemoTarget::normal, 50, 2000, 0.05, 11);
    CHECK(std::abs(n.mean) < 0.05);
    CHECK(std::abs(n.variance - 1.0) < 0.1);
    const DemoResult m = svgd_demo(DemoTarget::mixture, 50, 2000, 0.05, 11);
    CHECK(m.left_fraction >= 0.2);
    CHECK(m.right_fraction >= 0.2);
}

TEST_CASE("svgd recovers moments of shifted and scaled Gaussians") {
    for (auto [mu, sd] : {std::pair{1.5, 2.0}, std::pair{-3.0, 0.5}}) {
        const MatrixXd p = gaussian_particles(mu, sd, 50, 2000, 0.05 * sd * sd, 5);
        const double mean = p.mean();
        const double var = (p.array() - mean).square().mean();
        CHECK(std::abs(mean - mu) < 0.05);
        CHECK(std::abs(var - sd * sd) < 0.1 * sd * sd);
    }
}

TEST_CASE("log_posterior: gradient matches finite differences") {
    std::mt19937_64 rng(6);
    const PosteriorHyper hyper;
    for (int trial = 0; trial < 20; ++trial) {
        const MlpShape net{{3, 5, 2}};
        const Eigen::Index p = net.param_count();
        VectorXd particle(p + 2);
        particle.head(p) = oracle::random_vector(rng, p, 0.5);
        particle[p] = std::log(0.5 + trial * 0.2);
        particle[p + 1] = std::log(0.3 + trial * 0.1);
        const MatrixXd x = oracle::random_matrix(rng, 4, 3);
        const MatrixXd z = oracle::random_matrix(rng, 4, 2);
        const VectorXd prior = oracle::random_vector(rng, p, 0.5);
        const ValueGrad vg = log_posterior(net, particle, x, z, hyper, prior);
        const VectorXd fd = finite_diff_grad(
            [&](const VectorXd& q) { return log_posterior(net, q, x, z, hyper, prior).value; }, particle, 1e-6);
        CHECK(gradient_mismatch(vg.grad, fd) < 1e-5);
    }
}

TEST_CASE("log_posterior: stationary points") {
    std::mt19937_64 rng(7);
    const PosteriorHyper hyper;
    const MlpShape net{{2, 4, 2}};
    const Eigen::Index p = net.param_count();
    VectorXd particle(p + 2);
    particle.head(p) = oracle::random_vector(rng, p);
    particle[p + 1] = 0.0;
    const MatrixXd x = oracle::random_matrix(rng, 6, 2);

    SUBCASE("gamma balancing the residuals") {
        const MatrixXd z = oracle::random_matrix(rng, 6, 2);
        particle[p] = 0.0;
        const MatrixXd res = z - mlp_forward(Mlpd(net, particle.head(p)), x);
        const double star = (double(res.size()) + 2 * (hyper.a - 1)) / (res.squaredNorm() + 2 * hyper.b);
        particle[p] = std::log(star);
        const ValueGrad vg = log_posterior(net, particle, x, z, hyper, particle.head(p));
        CHECK(std::abs(vg.grad[p]) < 1e-10);
        const VectorXd fd = finite_diff_grad(
            [&](const VectorXd& q) { return log_posterior(net, q, x, z, hyper, particle.head(p)).value; }, particle,
            1e-6);
        CHECK(std::abs(fd[p]) < 1e-6);
    }
    SUBCASE("weights at the prior mean with exact targets") {
        particle[p] = 1.0;
        const MatrixXd z = mlp_forward(Mlpd(net, particle.head(p)), x);
        const ValueGrad vg = log_posterior(net, particle, x, z, hyper, particle.head(p));
        CHECK(vg.grad.head(p).isZero(0.0));
    }
}

TEST_CASE("log_posterior: argument checks") {
    const MlpShape net{{2, 2}};
    const VectorXd particle = VectorXd::Zero(net.param_count() + 2);
    const VectorXd prior = VectorXd::Zero(net.param_count());
    CHECK_THROWS_AS(log_posterior(net, particle, MatrixXd(0, 2), MatrixXd(0, 2), {}, prior), ContractError);
    CHECK_THROWS_AS(log_posterior(net, VectorXd::Zero(3), MatrixXd::Zero(1, 2), MatrixXd::Zero(1, 2), {}, prior),
                    ConfigError);
    CHECK_THROWS_AS(ParticleSet(net, MatrixXd::Zero(2, 3)), ConfigError);
}

TEST_CASE("ParticleSet exposes gamma and lambda through exp") {
    const MlpShape net{{1, 1}};
    MatrixXd v(2, 4);
    v << 0.1, 0.2, std::log(3.0), std::log(4.0), 0, 0, 0, 0;
    const ParticleSet set(net, v);
    CHECK(set.size() == 2);
    CHECK(set.gamma(0) == doctest::Approx(3.0));
    CHECK(set.lambda(0) == doctest::Approx(4.0));
    CHECK(set.gamma(1) == 1.0);
    CHECK(set.weights(0) == VectorXd(v.row(0).head(2).transpose()));
}
