#pragma once

#include "madv/autodiff.hpp"
#include "madv/config.hpp"
#include "madv/dataset.hpp"
#include "madv/gbsm.hpp"
#include "madv/hypernet.hpp"
#include "madv/manifold.hpp"
#include "madv/svgd.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace madv {

/// Bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8).
struct Adam {
    VectorXd m, v;
    long t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    Adam() = default;
    Adam(Eigen::Index n, double lr) : m(VectorXd::Zero(n)), v(VectorXd::Zero(n)), lr(lr) {}
    void step(VectorXd& params, const VectorXd& grad);
};

// ---------------------------------------------------------------------------
// Target classifier

struct Classifier {
    Mlpd net;
    bool trained = false;
    double test_accuracy = 0.0;

    MatrixXd proba(const MatrixXd& x) const { return mlp_forward(net, x); }
    std::vector<int> predict(const MatrixXd& x) const;
    int predict(const VectorXd& x) const;
};

/// input -> [32, 32] -> classes, tanh hidden, softmax output.
MlpShape classifier_shape(int input_dim, int classes);

/// Mean cross-entropy over the rows and its gradient w.r.t. the flat weights.
ValueGrad classifier_loss(const Mlpd& net, const MatrixXd& x, const std::vector<int>& y);
/// Cross-entropy -log P(y|x) and its gradient w.r.t. the input.
ValueGrad cross_entropy_input_grad(const Classifier& clf, const VectorXd& x, int y);

double accuracy(const Classifier& clf, const MatrixXd& x, const std::vector<int>& y);

/// Adam on minibatches of the training split; records held-out accuracy.
Classifier train_classifier(const LabeledDataset& data, const RunConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Losses

/// corrected: -log(1 - P(y|x') + 1e-12), small when the classifier is fooled.
/// literal:    log(1 - P(y|x') + 1e-12), the term exactly as printed.
double adversarial_term(const VectorXd& x_adv, int y, const Classifier& clf,
                        AdvTermForm form = AdvTermForm::corrected);
/// Value and gradient w.r.t. x'.
ValueGrad adversarial_term_grad(const VectorXd& x_adv, int y, const Classifier& clf,
                                AdvTermForm form = AdvTermForm::corrected);

struct TotalLoss {
    double clean = 0.0;  ///< L_x~ = |x - x~|
    double rec = 0.0;    ///< |x - x'|
    double term = 0.0;   ///< adversarial term, 0 when the gate is closed
    double adv = 0.0;    ///< L_x' = rec (+ term when rec <= eps)
    bool gate_open = false;
};

TotalLoss total_loss(const VectorXd& x, const VectorXd& x_tilde, const VectorXd& x_adv, int y,
                     const Classifier& clf, double eps_attack, AdvTermForm form = AdvTermForm::corrected);

/// L_x' and its gradient w.r.t. x'. With the gate closed the gradient is the
/// reconstruction gradient alone.
ValueGrad adv_loss_grad(const VectorXd& x, const VectorXd& x_adv, int y, const Classifier& clf, double eps_attack,
                        AdvTermForm form = AdvTermForm::corrected);

// ---------------------------------------------------------------------------
// Training

struct TrainState {
    EncoderSpec spec;
    HyperNet eta;
    HyperNet eta_prime;
    Mlpd phi;
    MatrixXd delta;  // M x latent_dim
    XiCodes codes;
    Adam adam_eta;
    Adam adam_eta_prime;
    Adam adam_phi;
    int epoch = 0;
    std::uint64_t seed_train = 0;

    MlpShape encoder() const { return encoder_shape(spec); }
    ParticleSet theta() const { return sample_particles(eta, codes, encoder()); }
    ParticleSet theta_prime() const { return sample_particles(eta_prime, codes, encoder()); }
};

/// Fresh state: f_eta' starts as a copy of f_eta (separate weights), so the
/// perturbing particles begin on the clean ones and delta starts at zero.
TrainState init_state(const RunConfig& cfg, int input_dim);

struct InnerStats {
    double match_eta_before = 0.0;
    double match_eta_after = 0.0;
    double match_eta_prime_before = 0.0;
    double match_eta_prime_after = 0.0;
    double bandwidth = 0.0;
    std::vector<std::string> warnings;
};

/// One InnerTraining call on batch x: SVGD step of the clean particles with
/// inversion targets and a trajectory match of f_eta; GBSM on the perturbing
/// particles; alignment and a trajectory match of f_eta'.
InnerStats inner_training(TrainState& state, const ParticleSet& theta, const ParticleSet& theta_prime,
                          const MatrixXd& x, const RunConfig& cfg, std::mt19937_64& rng);

struct EpochMetrics {
    int epoch = 0;
    double L_rec_clean = 0.0;
    double L_rec_adv = 0.0;
    double adv_term = 0.0;
    double asr_train_batch = 0.0;
    std::vector<double> delta_norms;
    double bandwidth = 0.0;
    double match_loss_eta = 0.0;
    double match_loss_eta_prime = 0.0;
    int batches = 0;
    int descending_batches = 0;  ///< every inner trajectory match lowered its loss
    double gamma_mean = 0.0;
    double gamma_prime_mean = 0.0;

    std::string to_json() const;
};

/// One pass over the training split (shuffled from seed_train and the epoch
/// number, so a resumed run replays exactly).
EpochMetrics train_epoch(TrainState& state, const LabeledDataset& data, const Classifier& clf,
                         const RunConfig& cfg);

using EpochCallback = std::function<void(const EpochMetrics&, const TrainState&)>;

/// Runs epochs state.epoch .. cfg.epochs - 1.
void train(TrainState& state, const LabeledDataset& data, const Classifier& clf, const RunConfig& cfg,
           const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// Generation and evaluation

struct Generated {
    VectorXd x_adv;
    VectorXd z_adv;
    int y_pred = -1;
    double rec = 0.0;
    double loss = 0.0;  ///< L_x' of the returned candidate
    bool constraint_satisfied = false;
    bool is_adversarial = false;
    int tries = 0;
};

/// Posterior samples through the perturbing particles, decoded. Returns the
/// first candidate with |x - x'| <= eps and a flipped label; otherwise the
/// candidate with the lowest L_x'.
Generated generate(const ParticleSet& theta_prime, const Mlpd& phi, const VectorXd& x, int y, const Classifier& clf,
                   double eps_attack, int max_tries, std::uint64_t seed, AdvTermForm form = AdvTermForm::corrected);

/// L2 projected gradient ascent on the classifier's cross-entropy.
VectorXd pgd_attack(const VectorXd& x, int y, const Classifier& clf, double eps_attack, int steps, double step_size);

struct SpectralNorm {
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
};

/// Largest singular value of (adv - clean) by power iteration on D^T D.
SpectralNorm spectral_norm(const MatrixXd& d, double tol = 1e-10, int max_iter = 1000);
double noise_level(const MatrixXd& clean_latents, const MatrixXd& adv_latents);
/// noise_level over consecutive row batches, averaged.
double noise_level_batched(const MatrixXd& clean_latents, const MatrixXd& adv_latents, int batch_size);

/// Per-dimension 1-D Wasserstein-1 distance of the empirical marginals.
std::vector<double> marginal_overlap(const MatrixXd& clean_latents, const MatrixXd& adv_latents,
                                     std::uint64_t seed = 0);

/// Mean distance from each row of `points` to its nearest row of `reference`
/// (excluding the identical index when `exclude_self`).
double mean_nn_distance(const MatrixXd& points, const MatrixXd& reference, bool exclude_self);

struct AttackRecord {
    VectorXd x, x_tilde, x_adv;
    VectorXd z_clean, z_adv, z_pgd;
    VectorXd x_pgd;
    int y = 0;
    int y_pred_clean = 0;
    int y_pred_adv = 0;
    int y_pred_pgd = 0;
    double rec_loss = 0.0;
    bool constraint_satisfied = false;
    bool is_adversarial = false;
};

struct AttackReport {
    std::vector<AttackRecord> records;
    double classifier_accuracy = 0.0;
    double asr = 0.0;
    int asr_denominator = 0;
    int adversarial_count = 0;
    double found_rate = 0.0;  // in-ball flips over correctly classified examples
    double mean_rec_loss = 0.0;
    double noise_level = 0.0;
    std::vector<double> marginal_w1;
    std::vector<double> clean_sd;
    double nn_clean = 0.0;
    double nn_ours = 0.0;
    double nn_pgd = 0.0;
    double pgd_misclassification = 0.0;

    void compute_aggregates(std::uint64_t seed = 0);
    std::string aggregate_json() const;
};

/// Attacks every example of `x` (normally the test split) with the trained
/// state and with PGD, encoding both through the clean posterior mean.
AttackReport evaluate(const TrainState& state, const Classifier& clf, const MatrixXd& x, const std::vector<int>& y,
                      const RunConfig& cfg, std::uint64_t seed);

void write_report_csv(const AttackReport& report, const std::string& path);
AttackReport read_report_csv(const std::string& path);

}  // namespace madv
