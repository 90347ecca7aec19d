#pragma once

#include "madv/autodiff.hpp"
#include "madv/core.hpp"
#include "madv/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <string>
#include <vector>

namespace madv {

/// Positive-definite RBF kernel exp(-|u - v|^2 / (2 h^2)).
template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar rbf_kernel(const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedV>& v,
                                     typename DerivedU::Scalar bandwidth) {
    using std::exp;
    return exp(-(u - v).squaredNorm() / (typename DerivedU::Scalar(2) * bandwidth * bandwidth));
}

/// Gradient of rbf_kernel(u, v) with respect to its first argument.
template <typename DerivedU, typename DerivedV>
Vector<typename DerivedU::Scalar> rbf_kernel_grad(const Eigen::MatrixBase<DerivedU>& u,
                                                  const Eigen::MatrixBase<DerivedV>& v,
                                                  typename DerivedU::Scalar bandwidth) {
    return (rbf_kernel(u, v, bandwidth) / (bandwidth * bandwidth)) * (v - u);
}

inline constexpr double kBandwidthFloor = 1e-6;

/// Median heuristic over the rows of `particles`:
/// h = sqrt(med^2 / (2 log(M + 1))), floored at 1e-6.
template <typename Scalar>
Scalar median_bandwidth(const Matrix<Scalar>& particles) {
    const Eigen::Index m = particles.rows();
    if (m < 2) throw ConfigError("median bandwidth needs at least two particles");
    std::vector<Scalar> dist;
    dist.reserve(m * (m - 1) / 2);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) dist.push_back((particles.row(i) - particles.row(j)).norm());
    std::sort(dist.begin(), dist.end());
    const std::size_t n = dist.size();
    const Scalar med = n % 2 ? dist[n / 2] : Scalar(0.5) * (dist[n / 2 - 1] + dist[n / 2]);
    using std::log;
    using std::sqrt;
    const Scalar h = sqrt(med * med / (Scalar(2) * log(Scalar(m + 1))));
    return std::max(h, Scalar(kBandwidthFloor));
}

namespace detail {
template <typename Scalar>
void require_finite_rows(const Matrix<Scalar>& grads) {
    for (Eigen::Index m = 0; m < grads.rows(); ++m)
        if (!grads.row(m).allFinite())
            throw NumericError("non-finite log-density gradient for particle " + std::to_string(m));
}
}  // namespace detail

/// SVGD direction for every particle (rows). `grads` holds grad log p at each
/// particle. Sums run in particle-index order.
template <typename Scalar>
Matrix<Scalar> svgd_tau(const Matrix<Scalar>& particles, const Matrix<Scalar>& grads, Scalar bandwidth) {
    if (particles.rows() < 1) throw ConfigError("SVGD needs at least one particle");
    require(grads.rows() == particles.rows() && grads.cols() == particles.cols(),
            "gradient matrix does not match particle matrix");
    detail::require_finite_rows(grads);
    const Eigen::Index m = particles.rows();
    Matrix<Scalar> out = Matrix<Scalar>::Zero(m, particles.cols());
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const Scalar k = rbf_kernel(particles.row(j), particles.row(i), bandwidth);
            // grad wrt the first argument x_j of k(x_j, x_i) is k (x_i - x_j) / h^2.
            out.row(i) += k * grads.row(j) + (k / (bandwidth * bandwidth)) * (particles.row(i) - particles.row(j));
        }
    }
    out /= Scalar(m);
    return out;
}

/// Alignment direction for one follower: leaders' kernel-weighted gradients
/// plus the kernel gradient taken with respect to each leader.
template <typename Scalar, typename Derived>
Vector<Scalar> svgd_pi(const Eigen::MatrixBase<Derived>& follower, const Matrix<Scalar>& leaders,
                       const Matrix<Scalar>& leader_grads, Scalar bandwidth) {
    require(follower.size() == leaders.cols(), "follower and leaders differ in dimension");
    require(leader_grads.rows() == leaders.rows() && leader_grads.cols() == leaders.cols(),
            "gradient matrix does not match leader matrix");
    detail::require_finite_rows(leader_grads);
    const Eigen::Index m = leaders.rows();
    Vector<Scalar> out = Vector<Scalar>::Zero(leaders.cols());
    for (Eigen::Index j = 0; j < m; ++j) {
        const Scalar k = rbf_kernel(follower.transpose(), leaders.row(j), bandwidth);
        out += k * leader_grads.row(j).transpose() +
               (k / (bandwidth * bandwidth)) * (follower - leaders.row(j).transpose());
    }
    return out / Scalar(m);
}

/// Evaluates `logp_grad(row) -> Vector` for every particle.
template <typename Scalar, typename GradFn>
Matrix<Scalar> eval_grads(const Matrix<Scalar>& particles, GradFn&& logp_grad) {
    Matrix<Scalar> g(particles.rows(), particles.cols());
    for (Eigen::Index m = 0; m < particles.rows(); ++m) {
        Vector<Scalar> row = particles.row(m).transpose();
        g.row(m) = logp_grad(row).transpose();
    }
    return g;
}

template <typename Scalar, typename GradFn>
    requires(!std::derived_from<std::remove_cvref_t<GradFn>, Eigen::EigenBase<std::remove_cvref_t<GradFn>>>)
Matrix<Scalar> svgd_tau(const Matrix<Scalar>& particles, GradFn&& logp_grad, Scalar bandwidth) {
    return svgd_tau(particles, eval_grads(particles, logp_grad), bandwidth);
}

/// One transport step x <- x + step * tau(x) at the current median bandwidth
/// (bandwidth 1 for a single particle, where it has no effect).
template <typename Scalar, typename GradFn>
Matrix<Scalar> svgd_step(const Matrix<Scalar>& particles, GradFn&& logp_grad, Scalar step_size) {
    const Scalar h = particles.rows() >= 2 ? median_bandwidth(particles) : Scalar(1);
    return particles + step_size * svgd_tau(particles, std::forward<GradFn>(logp_grad), h);
}

// ---------------------------------------------------------------------------
// Bayesian encoder particles

/// Gamma shape/rate hyperparameters for the likelihood precision (a, b) and
/// the weight-prior precision (a', b').
struct PosteriorHyper {
    double a = 1.0;
    double b = 0.1;
    double a_prime = 1.0;
    double b_prime = 1.0;
};

/// Each particle row is [flattened encoder weights W, rho_gamma, rho_lambda]
/// with gamma = exp(rho_gamma) and lambda = exp(rho_lambda).
class ParticleSet {
public:
    ParticleSet() = default;
    ParticleSet(MlpShape net, MatrixXd values);

    static Eigen::Index length_for(const MlpShape& net) { return net.param_count() + 2; }

    const MlpShape& net() const { return net_; }
    const MatrixXd& values() const { return values_; }
    MatrixXd& values() { return values_; }
    int size() const { return static_cast<int>(values_.rows()); }
    Eigen::Index length() const { return values_.cols(); }
    Eigen::Index weight_count() const { return values_.cols() - 2; }

    VectorXd particle(int m) const { return values_.row(m).transpose(); }
    VectorXd weights(int m) const { return values_.row(m).head(weight_count()).transpose(); }
    Mlpd network(int m) const { return Mlpd(net_, weights(m)); }
    double rho_gamma(int m) const { return values_(m, weight_count()); }
    double rho_lambda(int m) const { return values_(m, weight_count() + 1); }
    double gamma(int m) const { return std::exp(rho_gamma(m)); }
    double lambda(int m) const { return std::exp(rho_lambda(m)); }

private:
    MlpShape net_;
    MatrixXd values_;
};

/// Unnormalized log posterior of one particle and its gradient:
///   -gamma/2 sum |z~ - f_W(x)|^2 + (d B / 2) log gamma
///   -lambda/2 |W - prior_mean|^2 + (P / 2) log lambda
///   + (a - 1) log gamma - b gamma + (a' - 1) log lambda - b' lambda
/// with gamma, lambda reached through their log-parameters.
ValueGrad log_posterior(const MlpShape& net, const VectorXd& particle, const MatrixXd& x, const MatrixXd& z_target,
                        const PosteriorHyper& hyper, const VectorXd& prior_mean);

inline VectorXd log_posterior_grad(const MlpShape& net, const VectorXd& particle, const MatrixXd& x,
                                   const MatrixXd& z_target, const PosteriorHyper& hyper,
                                   const VectorXd& prior_mean) {
    return log_posterior(net, particle, x, z_target, hyper, prior_mean).grad;
}

// ---------------------------------------------------------------------------
// One-dimensional demo targets

enum class DemoTarget { normal, mixture };

/// N(0, 1), or 0.5 N(-2, 1) + 0.5 N(2, 1).
double demo_log_density_grad(DemoTarget target, double x);

struct DemoResult {
    VectorXd particles;
    double mean = 0.0;
    double variance = 0.0;      ///< population variance
    double left_fraction = 0.0;  ///< share of particles below 0
    double right_fraction = 0.0;
};

/// `count` particles drawn from N(0, 3^2), then `steps` SVGD steps.
DemoResult svgd_demo(DemoTarget target, int count, int steps, double step_size, std::uint64_t seed);

}  // namespace madv
