#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace madv {

enum class AdvTermForm { corrected, literal };

/// Every hyperparameter of a run. Defaults follow the published settings
/// where they exist (M, batch, inner updates, learning rates, gamma priors).
struct RunConfig {
    std::string dataset = "swiss_roll";  // swiss_roll | mnist_idx
    std::string data_path;               // CSV (swiss_roll) or IDX images path
    std::string labels_path;             // IDX labels (mnist_idx)
    int n = 1600;
    int classes = 4;
    double noise_sd = 0.1;

    int M = 5;
    int T_inner = 3;
    int epochs = 1000;
    int batch_size = 64;
    double eps_attack = 0.3;
    int latent_dim = 2;

    double lr_phi = 5e-4;         // decoder (Adam)
    double lr_eta = 1e-3;         // f_eta outer step (Adam)
    double lr_eta_prime = 1e-3;   // f_eta' outer step (Adam)
    double beta = 1e-2;           // f_eta inner trajectory match
    double beta_prime = 1e-2;     // f_eta' inner trajectory match
    double svgd_step = 1e-6;      // particle step behind the matching targets
    double gbsm_step = 1e-3;
    int match_steps = 1;

    double hyper_output_sd = 1e-2;
    double hyper_output_gain = 1.0 / 70.0;  // 1 / last hidden width of the hypernet
    double init_gamma = 2.0;
    double init_lambda = 1.0;
    bool precision_grad = false;  // let the outer losses reach rho_gamma through the sample noise

    int classifier_epochs = 300;
    double classifier_lr = 1e-2;
    double classifier_min_accuracy = 0.95;

    int pgd_steps = 40;
    double pgd_step = 0.05;
    int max_tries = 10;
    AdvTermForm adv_term = AdvTermForm::corrected;

    std::uint64_t seed_data = 1;
    std::uint64_t seed_init = 2;
    std::uint64_t seed_train = 3;
    int threads = 1;
    std::string out_dir = "run";

    /// Applies one `key = value` setting; throws ConfigError on unknown keys.
    void set(const std::string& key, const std::string& value);
    /// Checks ranges (positive rates, M >= 1, ...).
    void validate() const;
    /// Replaces all seeds when MANIFOLD_ADVGEN_SEED is set.
    void apply_env();
    std::map<std::string, std::string> to_map() const;
};

/// Flat `key = value` lines, `#` comments.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});
std::string to_config_text(const RunConfig& cfg);

}  // namespace madv
