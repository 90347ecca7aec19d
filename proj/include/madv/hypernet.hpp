#pragma once

#include "madv/autodiff.hpp"
#include "madv/mlp.hpp"
#include "madv/svgd.hpp"

#include <cstdint>
#include <random>

namespace madv {

enum class HyperRole { clean, perturbing };

inline constexpr int kCodeDim = 50;

/// Recognition network mapping a Gaussian code to a full particle vector.
/// The last layer is b + gain * W h, so Adam's per-parameter steps on W do
/// not add up across the hidden units into large particle moves.
struct HyperNet {
    Mlpd net;
    HyperRole role = HyperRole::clean;
    double output_gain = 1.0;

    int code_dim() const { return net.input_dim(); }
    int particle_length() const { return net.output_dim(); }
};

/// Shape 50 -> [60, 70] -> particle length, tanh hidden, linear output.
MlpShape hypernet_shape(Eigen::Index particle_length, int code_dim = kCodeDim);

struct HyperInit {
    double output_weight_sd = 1e-2;  ///< spread of gain * W h; sets particle diversity
    double output_gain = 1.0;
    double rho_gamma = std::log(10.0);
    double rho_lambda = 0.0;
};

/// Glorot hidden layers; the output bias is a Glorot draw of the encoder
/// weights followed by (rho_gamma, rho_lambda), so every code starts near one
/// sensible encoder.
HyperNet make_hypernet(const MlpShape& encoder, HyperRole role, const HyperInit& init, std::mt19937_64& rng);

/// Codes xi_1..xi_M, drawn once per run.
struct XiCodes {
    MatrixXd codes;  // M x code_dim
    std::uint64_t seed = 0;

    int count() const { return static_cast<int>(codes.rows()); }
};

XiCodes sample_codes(int count, int dim, std::uint64_t seed);

/// The net with the gain folded into its last-layer weights.
Mlpd effective_net(const HyperNet& h);

/// Row m is f_eta(xi_m).
MatrixXd sample_particle_matrix(const HyperNet& h, const XiCodes& codes);
ParticleSet sample_particles(const HyperNet& h, const XiCodes& codes, const MlpShape& encoder);

/// Pulls per-particle gradients (M x length) back to the hypernet parameters.
VectorXd hypernet_pullback(const HyperNet& h, const XiCodes& codes, const MatrixXd& d_particles);

/// sum_m |f(xi_m; eta) - target_m|^2 as a function of the flat hypernet
/// parameters.
ValueGrad matching_loss(const HyperNet& h, const XiCodes& codes, const MatrixXd& targets);

struct MatchResult {
    HyperNet net;
    double loss_before = 0.0;
    double loss_after = 0.0;
};

inline constexpr double kArmijo = 1e-4;
inline constexpr double kMinStepFraction = 1.0 / (1 << 20);

/// `steps` gradient-descent updates of the hypernet on matching_loss. Each
/// step starts at `lr` and halves until the Armijo condition holds; a step
/// that finds no decrease ends the loop with the net unchanged.
MatchResult trajectory_match(const HyperNet& h, const XiCodes& codes, const MatrixXd& targets, double lr, int steps);

}  // namespace madv
