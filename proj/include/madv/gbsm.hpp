#pragma once

#include "madv/autodiff.hpp"
#include "madv/hypernet.hpp"
#include "madv/manifold.hpp"
#include "madv/svgd.hpp"

#include <string>
#include <vector>

namespace madv {

/// Orthonormal rows spanning a set of latent vectors.
template <typename Scalar>
struct OrthoBasis {
    Matrix<Scalar> u;  // r x d
    Scalar drop_tolerance = Scalar(0);

    Eigen::Index rank() const { return u.rows(); }
    bool degenerate() const { return u.rows() == 0; }
};

/// 1e-10 times the largest row norm (absolute 1e-300 for all-zero input).
template <typename Scalar>
Scalar relative_drop_tolerance(const Matrix<Scalar>& vectors, Scalar relative = Scalar(1e-10)) {
    const Scalar largest = vectors.rows() ? vectors.rowwise().norm().maxCoeff() : Scalar(0);
    return std::max(relative * largest, Scalar(1e-300));
}

/// Modified Gram-Schmidt over the rows, with one re-orthogonalization sweep.
/// Rows whose residual norm is <= drop_tolerance are skipped.
template <typename Scalar>
OrthoBasis<Scalar> gram_schmidt(const Matrix<Scalar>& vectors, Scalar drop_tolerance) {
    if (vectors.rows() < 1) throw ConfigError("Gram-Schmidt needs at least one vector");
    const Eigen::Index d = vectors.cols();
    Matrix<Scalar> basis(std::min(vectors.rows(), d), d);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < vectors.rows() && r < d; ++i) {
        RowVector<Scalar> w = vectors.row(i);
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index k = 0; k < r; ++k) w -= w.dot(basis.row(k)) * basis.row(k);
        const Scalar norm = w.norm();
        if (norm <= drop_tolerance) continue;
        basis.row(r++) = w / norm;
    }
    return {basis.topRows(r), drop_tolerance};
}

template <typename Scalar>
OrthoBasis<Scalar> gram_schmidt(const Matrix<Scalar>& vectors) {
    return gram_schmidt(vectors, relative_drop_tolerance(vectors));
}

/// Row i is the elementwise sign of basis row (i mod r), with sign(0) = +1.
template <typename Scalar>
Matrix<Scalar> assign_signs(const OrthoBasis<Scalar>& basis, Eigen::Index batch_size) {
    if (basis.degenerate()) throw NumericError("degenerate basis: no direction survived Gram-Schmidt");
    Matrix<Scalar> s(batch_size, basis.u.cols());
    for (Eigen::Index i = 0; i < batch_size; ++i) {
        const auto row = basis.u.row(i % basis.rank());
        for (Eigen::Index j = 0; j < s.cols(); ++j) s(i, j) = row[j] < Scalar(0) ? Scalar(-1) : Scalar(1);
    }
    return s;
}

/// Closed-form minimizer of sum_i |z'_i - (z_i + delta * s_i)|^2 over delta.
template <typename Scalar>
Vector<Scalar> solve_delta(const Matrix<Scalar>& z, const Matrix<Scalar>& z_prime, const Matrix<Scalar>& signs) {
    if (z.rows() == 0) throw ContractError("solve_delta needs a non-empty batch");
    require(z.rows() == z_prime.rows() && z.cols() == z_prime.cols() && signs.rows() == z.rows() &&
                signs.cols() == z.cols(),
            "solve_delta inputs differ in shape");
    return (signs.cwiseProduct(z_prime - z)).colwise().sum().transpose() / Scalar(z.rows());
}

/// Squared surrogate of the GBSM objective.
template <typename Scalar>
Scalar gbsm_objective(const Matrix<Scalar>& z, const Matrix<Scalar>& z_prime, const Vector<Scalar>& delta,
                      const Matrix<Scalar>& signs) {
    Matrix<Scalar> target = z + signs * delta.asDiagonal();
    return (z_prime - target).squaredNorm();
}

/// GBSM objective as a function of a perturbing particle, with z, delta and
/// signs held fixed. The gradient covers the full particle (zeros on rho).
ValueGrad gbsm_particle_objective(const MlpShape& encoder, const VectorXd& particle, const MatrixXd& x,
                                  const MatrixXd& z, const VectorXd& delta, const MatrixXd& signs);

struct GbsmResult {
    ParticleSet theta_prime;
    MatrixXd delta;              // M x d
    std::vector<double> objective_before;
    std::vector<double> objective_after;
    std::vector<std::string> warnings;
};

/// One GBSM update of every perturbing particle: basis from the clean batch
/// latents, closed-form delta, then one backtracked gradient step on theta'_m
/// starting at `lr`.
/// Particles with a degenerate basis keep their delta and parameters.
GbsmResult gbsm_update(const ParticleSet& theta_prime, const MatrixXd& delta, const MatrixXd& x,
                       const ParticleSet& theta, double lr);

struct AlignResult {
    ParticleSet theta_prime;
    MatchResult match;
};

/// One pi step of every follower against the leaders, then one trajectory
/// match of the perturbing hypernet to the moved followers.
AlignResult align(const ParticleSet& theta_prime, const ParticleSet& theta, const MatrixXd& leader_grads,
                  double bandwidth, const HyperNet& eta_prime, const XiCodes& codes, double lr_align,
                  double lr_eta_prime, int match_steps = 1);

}  // namespace madv
