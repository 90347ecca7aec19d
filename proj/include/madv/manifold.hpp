#pragma once

#include "madv/mlp.hpp"
#include "madv/svgd.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace madv {

struct EncoderSpec {
    int input_dim = 3;
    std::vector<int> hidden{40, 40};
    int latent_dim = 2;
};

MlpShape encoder_shape(const EncoderSpec& spec);
/// Mirror of the encoder: latent -> reversed hidden widths -> input.
MlpShape decoder_shape(const EncoderSpec& spec);

enum class LatentSource { clean, perturbed, inverted };

struct LatentBatch {
    MatrixXd z;                 // B x d
    std::vector<int> particle;  // particle used for each row
    LatentSource source = LatentSource::clean;
};

/// Noiseless encoder output f_W(x) of particle m.
MatrixXd encode_mean(const ParticleSet& particles, int m, const MatrixXd& x);

/// z = f_W(x) + eps, eps ~ N(0, gamma^-1 I), noise drawn from `noise_seed`.
LatentBatch encode(const ParticleSet& particles, int m, const MatrixXd& x, std::uint64_t noise_seed,
                   LatentSource source = LatentSource::clean);

enum class PosteriorMode { sample, mean };

/// Monte Carlo posterior over the particle set. `sample` draws a particle per
/// row (uniform, seeded) and encodes with noise; `mean` averages the M
/// noiseless embeddings.
LatentBatch encode_posterior(const ParticleSet& particles, const MatrixXd& x, PosteriorMode mode,
                             std::uint64_t seed = 0, LatentSource source = LatentSource::clean);

MatrixXd decode(const Mlpd& decoder, const MatrixXd& z);

struct InversionResult {
    LatentBatch z;        // first encoding of x
    MatrixXd x_tilde;     // decoded reconstruction
    LatentBatch z_tilde;  // re-encoding of x_tilde, the likelihood target
};

/// encode x, decode, re-encode the reconstruction, all with particle m.
InversionResult inversion(const MatrixXd& x, const ParticleSet& particles, int m, const Mlpd& decoder,
                          std::uint64_t seed);

}  // namespace madv
