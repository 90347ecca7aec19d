#include "madv/svgd.hpp"

#include <random>

namespace madv {

ParticleSet::ParticleSet(MlpShape net, MatrixXd values) : net_(std::move(net)), values_(std::move(values)) {
    require(values_.cols() == length_for(net_), "particle length " + std::to_string(values_.cols()) +
                                                    " does not match encoder layout (" +
                                                    std::to_string(length_for(net_)) + ")");
}

ValueGrad log_posterior(const MlpShape& net, const VectorXd& particle, const MatrixXd& x, const MatrixXd& z_target,
                        const PosteriorHyper& hyper, const VectorXd& prior_mean) {
    if (x.rows() == 0) throw ContractError("log posterior needs a non-empty batch");
    const Eigen::Index p = net.param_count();
    require(particle.size() == p + 2, "particle length does not match encoder layout");
    require(prior_mean.size() == p || prior_mean.size() == p + 2, "prior mean length does not match encoder");
    require(z_target.rows() == x.rows() && z_target.cols() == net.output_dim(), "latent targets have wrong shape");

    const Mlpd f(net, particle.head(p));
    const double rho_g = particle[p];
    const double rho_l = particle[p + 1];
    const double gamma = std::exp(rho_g);
    const double lambda = std::exp(rho_l);

    MlpTape<double> tape;
    const MatrixXd residual = z_target - mlp_forward(f, x, &tape);
    const double sq_res = residual.squaredNorm();
    const VectorXd w_dev = particle.head(p) - prior_mean.head(p);
    const double sq_dev = w_dev.squaredNorm();
    const double count = double(residual.size());

    ValueGrad out;
    out.value = -0.5 * gamma * sq_res + 0.5 * count * rho_g - 0.5 * lambda * sq_dev + 0.5 * double(p) * rho_l +
                (hyper.a - 1.0) * rho_g - hyper.b * gamma + (hyper.a_prime - 1.0) * rho_l - hyper.b_prime * lambda;
    require_finite(out.value, "log posterior");

    out.grad = VectorXd::Zero(p + 2);
    VectorXd dw(p);
    dw.setZero();
    // d/df of -gamma/2 |z~ - f|^2 is gamma * residual
    mlp_backward(f, tape, MatrixXd(gamma * residual), &dw);
    out.grad.head(p) = dw - lambda * w_dev;
    out.grad[p] = gamma * (-0.5 * sq_res - hyper.b) + 0.5 * count + (hyper.a - 1.0);
    out.grad[p + 1] = lambda * (-0.5 * sq_dev - hyper.b_prime) + 0.5 * double(p) + (hyper.a_prime - 1.0);
    require_finite(out.grad, "log posterior gradient");
    return out;
}

double demo_log_density_grad(DemoTarget target, double x) {
    if (target == DemoTarget::normal) return -x;
    // Responsibility-weighted pull toward each mode.
    const double a = std::exp(-0.5 * (x + 2.0) * (x + 2.0));
    const double b = std::exp(-0.5 * (x - 2.0) * (x - 2.0));
    const double total = a + b;
    if (total == 0.0) return x > 0 ? 2.0 - x : -2.0 - x;
    return (a * (-2.0 - x) + b * (2.0 - x)) / total;
}

DemoResult svgd_demo(DemoTarget target, int count, int steps, double step_size, std::uint64_t seed) {
    require(count >= 1 && steps >= 0 && step_size >= 0, "demo needs count >= 1, steps >= 0, step >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> init(0.0, 3.0);
    MatrixXd p(count, 1);
    for (int i = 0; i < count; ++i) p(i, 0) = init(rng);
    auto grad = [target](const VectorXd& x) {
        VectorXd g(1);
        g[0] = demo_log_density_grad(target, x[0]);
        return g;
    };
    for (int s = 0; s < steps; ++s) p = svgd_step(p, grad, step_size);
    DemoResult r;
    r.particles = p.col(0);
    r.mean = r.particles.mean();
    r.variance = (r.particles.array() - r.mean).square().mean();
    r.left_fraction = (r.particles.array() < 0.0).cast<double>().mean();
    r.right_fraction = 1.0 - r.left_fraction;
    return r;
}

}  // namespace madv

