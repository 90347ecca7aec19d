#include "madv/manifold.hpp"

namespace madv {

MlpShape encoder_shape(const EncoderSpec& spec) {
    require(spec.latent_dim >= 2, "latent dimension must be at least 2");
    std::vector<int> dims{spec.input_dim};
    dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
    dims.push_back(spec.latent_dim);
    return {dims, HiddenActivation::tanh, OutputActivation::linear};
}

MlpShape decoder_shape(const EncoderSpec& spec) {
    MlpShape s = encoder_shape(spec);
    std::reverse(s.dims.begin(), s.dims.end());
    return s;
}

MatrixXd encode_mean(const ParticleSet& particles, int m, const MatrixXd& x) {
    require(m >= 0 && m < particles.size(), "particle index out of range");
    return mlp_forward(particles.network(m), x);
}

LatentBatch encode(const ParticleSet& particles, int m, const MatrixXd& x, std::uint64_t noise_seed,
                   LatentSource source) {
    LatentBatch out{encode_mean(particles, m, x), std::vector<int>(x.rows(), m), source};
    const double sd = std::exp(-0.5 * particles.rho_gamma(m));
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < out.z.size(); ++i) out.z.data()[i] += sd * normal(rng);
    require_finite(out.z, "encoder output");
    return out;
}

LatentBatch encode_posterior(const ParticleSet& particles, const MatrixXd& x, PosteriorMode mode,
                             std::uint64_t seed, LatentSource source) {
    if (particles.size() < 1) throw ConfigError("posterior needs at least one particle");
    const int count = particles.size();
    if (mode == PosteriorMode::mean) {
        MatrixXd sum = encode_mean(particles, 0, x);
        for (int m = 1; m < count; ++m) sum += encode_mean(particles, m, x);
        return {sum / double(count), std::vector<int>(x.rows(), -1), source};
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, count - 1);
    std::normal_distribution<double> normal;
    LatentBatch out{MatrixXd(x.rows(), particles.net().output_dim()), std::vector<int>(x.rows()), source};
    std::vector<Mlpd> nets;
    for (int m = 0; m < count; ++m) nets.push_back(particles.network(m));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int m = pick(rng);
        out.particle[i] = m;
        MatrixXd row = x.row(i);
        out.z.row(i) = mlp_forward(nets[m], row);
        const double sd = std::exp(-0.5 * particles.rho_gamma(m));
        for (Eigen::Index j = 0; j < out.z.cols(); ++j) out.z(i, j) += sd * normal(rng);
    }
    require_finite(out.z, "posterior latent sample");
    return out;
}

MatrixXd decode(const Mlpd& decoder, const MatrixXd& z) {
    MatrixXd x = mlp_forward(decoder, z);
    require_finite(x, "decoder output");
    return x;
}

InversionResult inversion(const MatrixXd& x, const ParticleSet& particles, int m, const Mlpd& decoder,
                          std::uint64_t seed) {
    std::mt19937_64 seeds(seed);
    InversionResult r;
    r.z = encode(particles, m, x, seeds(), LatentSource::clean);
    r.x_tilde = decode(decoder, r.z.z);
    r.z_tilde = encode(particles, m, r.x_tilde, seeds(), LatentSource::inverted);
    return r;
}

}  // namespace madv
