#include "madv/hypernet.hpp"

namespace madv {

MlpShape hypernet_shape(Eigen::Index particle_length, int code_dim) {
    return {{code_dim, 60, 70, static_cast<int>(particle_length)}, HiddenActivation::tanh, OutputActivation::linear};
}

HyperNet make_hypernet(const MlpShape& encoder, HyperRole role, const HyperInit& init, std::mt19937_64& rng) {
    const Eigen::Index length = ParticleSet::length_for(encoder);
    require(init.output_gain > 0, "hypernet output gain must be positive");
    HyperNet h{Mlpd::glorot(hypernet_shape(length), rng), role, init.output_gain};
    auto& out = h.net.layers().back();
    std::normal_distribution<double> normal(
        0.0, init.output_weight_sd / (init.output_gain * std::sqrt(double(out.weight.cols()))));
    for (Eigen::Index i = 0; i < out.weight.size(); ++i) out.weight.data()[i] = normal(rng);
    out.bias.head(length - 2) = Mlpd::glorot(encoder, rng).flatten();
    out.bias[length - 2] = init.rho_gamma;
    out.bias[length - 1] = init.rho_lambda;
    return h;
}

XiCodes sample_codes(int count, int dim, std::uint64_t seed) {
    require(count >= 1 && dim >= 1, "code count and dimension must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    XiCodes c{MatrixXd(count, dim), seed};
    for (Eigen::Index i = 0; i < c.codes.size(); ++i) c.codes.data()[i] = normal(rng);
    return c;
}

Mlpd effective_net(const HyperNet& h) {
    Mlpd net = h.net;
    net.layers().back().weight *= h.output_gain;
    return net;
}

namespace {

// Gradient w.r.t. the effective net -> gradient w.r.t. the stored parameters.
VectorXd to_stored(const HyperNet& h, const VectorXd& g_effective) {
    Mlpd g(h.net.shape(), g_effective);
    g.layers().back().weight *= h.output_gain;
    return g.flatten();
}

}  // namespace

MatrixXd sample_particle_matrix(const HyperNet& h, const XiCodes& codes) {
    if (codes.codes.cols() != h.code_dim())
        throw ConfigError("code dimension " + std::to_string(codes.codes.cols()) + " does not match hypernet input " +
                          std::to_string(h.code_dim()));
    MatrixXd out = mlp_forward(effective_net(h), codes.codes);
    require_finite(out, "hypernet output");
    return out;
}

ParticleSet sample_particles(const HyperNet& h, const XiCodes& codes, const MlpShape& encoder) {
    return ParticleSet(encoder, sample_particle_matrix(h, codes));
}

VectorXd hypernet_pullback(const HyperNet& h, const XiCodes& codes, const MatrixXd& d_particles) {
    const Mlpd net = effective_net(h);
    MlpTape<double> tape;
    mlp_forward(net, codes.codes, &tape);
    VectorXd g = VectorXd::Zero(net.param_count());
    mlp_backward(net, tape, d_particles, &g);
    return to_stored(h, g);
}

ValueGrad matching_loss(const HyperNet& h, const XiCodes& codes, const MatrixXd& targets) {
    require(targets.rows() == codes.count() && targets.cols() == h.particle_length(),
            "matching targets must be one particle per code");
    const Mlpd net = effective_net(h);
    MlpTape<double> tape;
    const MatrixXd diff = mlp_forward(net, codes.codes, &tape) - targets;
    ValueGrad out{diff.squaredNorm(), VectorXd::Zero(net.param_count())};
    mlp_backward(net, tape, MatrixXd(2.0 * diff), &out.grad);
    out.grad = to_stored(h, out.grad);
    require_finite(out.value, "trajectory matching loss");
    return out;
}

MatchResult trajectory_match(const HyperNet& h, const XiCodes& codes, const MatrixXd& targets, double lr, int steps) {
    require(steps >= 0, "step count must be non-negative");
    require(lr >= 0, "learning rate must be non-negative");
    MatchResult r{h, 0.0, 0.0};
    ValueGrad vg = matching_loss(r.net, codes, targets);
    r.loss_before = vg.value;
    for (int s = 0; s < steps && lr > 0; ++s) {
        const VectorXd w = r.net.net.flatten();
        const double slope = vg.grad.squaredNorm();
        if (slope == 0.0) break;
        // Armijo backtracking from lr: halve until the loss drops enough.
        bool moved = false;
        for (double t = lr; t >= lr * kMinStepFraction; t *= 0.5) {
            HyperNet trial = r.net;
            trial.net.assign(w - t * vg.grad);
            ValueGrad next = matching_loss(trial, codes, targets);
            if (next.value <= vg.value - kArmijo * t * slope) {
                r.net = std::move(trial);
                vg = std::move(next);
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    r.loss_after = vg.value;
    return r;
}

}  // namespace madv
