#include "madv/gbsm.hpp"

namespace madv {

ValueGrad gbsm_particle_objective(const MlpShape& encoder, const VectorXd& particle, const MatrixXd& x,
                                  const MatrixXd& z, const VectorXd& delta, const MatrixXd& signs) {
    const Eigen::Index p = encoder.param_count();
    require(particle.size() == p + 2, "particle length does not match encoder layout");
    const Mlpd f(encoder, particle.head(p));
    MlpTape<double> tape;
    const MatrixXd target = z + signs * delta.asDiagonal();
    const MatrixXd diff = mlp_forward(f, x, &tape) - target;
    ValueGrad out{diff.squaredNorm(), VectorXd::Zero(p + 2)};
    VectorXd dw = VectorXd::Zero(p);
    mlp_backward(f, tape, MatrixXd(2.0 * diff), &dw);
    out.grad.head(p) = dw;
    return out;
}

GbsmResult gbsm_update(const ParticleSet& theta_prime, const MatrixXd& delta, const MatrixXd& x,
                       const ParticleSet& theta, double lr) {
    if (x.rows() == 0) throw ContractError("GBSM needs a non-empty batch");
    require(theta.size() == theta_prime.size() && theta.length() == theta_prime.length(),
            "clean and perturbing particle sets differ in shape");
    const int count = theta.size();
    const int d = theta.net().output_dim();
    require(delta.rows() == count && delta.cols() == d, "perturbation set has wrong shape");

    GbsmResult r{theta_prime, delta, std::vector<double>(count, 0.0), std::vector<double>(count, 0.0), {}};
    for (int m = 0; m < count; ++m) {
        const MatrixXd z = encode_mean(theta, m, x);
        const auto basis = gram_schmidt(z);
        if (basis.degenerate()) {
            r.warnings.push_back("particle " + std::to_string(m) + ": degenerate latent basis, skipped");
            continue;
        }
        const MatrixXd signs = assign_signs(basis, x.rows());
        const MatrixXd z_prime = encode_mean(theta_prime, m, x);
        const VectorXd dm = solve_delta(z, z_prime, signs);
        r.delta.row(m) = dm.transpose();
        const VectorXd particle = theta_prime.particle(m);
        const ValueGrad vg = gbsm_particle_objective(theta.net(), particle, x, z, dm, signs);
        r.objective_before[m] = vg.value;
        r.objective_after[m] = vg.value;
        const double slope = vg.grad.squaredNorm();
        if (lr <= 0 || slope == 0.0) continue;
        for (double t = lr; t >= lr * kMinStepFraction; t *= 0.5) {
            const VectorXd trial = particle - t * vg.grad;
            const double value = gbsm_particle_objective(theta.net(), trial, x, z, dm, signs).value;
            if (value <= vg.value - kArmijo * t * slope) {
                r.theta_prime.values().row(m) = trial.transpose();
                r.objective_after[m] = value;
                break;
            }
        }
    }
    return r;
}

AlignResult align(const ParticleSet& theta_prime, const ParticleSet& theta, const MatrixXd& leader_grads,
                  double bandwidth, const HyperNet& eta_prime, const XiCodes& codes, double lr_align,
                  double lr_eta_prime, int match_steps) {
    require(theta.length() == theta_prime.length(), "clean and perturbing particles differ in length");
    ParticleSet moved = theta_prime;
    for (int m = 0; m < theta_prime.size(); ++m) {
        const VectorXd follower = theta_prime.particle(m);
        moved.values().row(m) =
            (follower + lr_align * svgd_pi(follower, theta.values(), leader_grads, bandwidth)).transpose();
    }
    AlignResult r{moved, trajectory_match(eta_prime, codes, moved.values(), lr_eta_prime, match_steps)};
    return r;
}

}  // namespace madv
