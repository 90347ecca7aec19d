#include "madv/config.hpp"

#include "madv/core.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace madv {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_as(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    T out{};
    in >> out;
    if (!in || !(in >> std::ws).eof()) throw ConfigError("bad value '" + value + "' for key '" + key + "'");
    return out;
}

std::string format_double(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

// One row per key: how to set it and how to print it.
struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field field(T RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& k, const std::string& v) {
                if constexpr (std::is_same_v<T, std::string>)
                    c.*member = v;
                else
                    c.*member = parse_as<T>(k, v);
            },
            [member](const RunConfig& c) -> std::string {
                if constexpr (std::is_same_v<T, std::string>)
                    return c.*member;
                else if constexpr (std::is_same_v<T, double>)
                    return format_double(c.*member);
                else
                    return std::to_string(c.*member);
            }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t{
            {"dataset", field(&RunConfig::dataset)},
            {"data_path", field(&RunConfig::data_path)},
            {"labels_path", field(&RunConfig::labels_path)},
            {"n", field(&RunConfig::n)},
            {"classes", field(&RunConfig::classes)},
            {"noise_sd", field(&RunConfig::noise_sd)},
            {"M", field(&RunConfig::M)},
            {"T_inner", field(&RunConfig::T_inner)},
            {"epochs", field(&RunConfig::epochs)},
            {"batch_size", field(&RunConfig::batch_size)},
            {"eps_attack", field(&RunConfig::eps_attack)},
            {"latent_dim", field(&RunConfig::latent_dim)},
            {"lr_phi", field(&RunConfig::lr_phi)},
            {"lr_eta", field(&RunConfig::lr_eta)},
            {"lr_eta_prime", field(&RunConfig::lr_eta_prime)},
            {"beta", field(&RunConfig::beta)},
            {"beta_prime", field(&RunConfig::beta_prime)},
            {"svgd_step", field(&RunConfig::svgd_step)},
            {"gbsm_step", field(&RunConfig::gbsm_step)},
            {"match_steps", field(&RunConfig::match_steps)},
            {"hyper_output_sd", field(&RunConfig::hyper_output_sd)},
            {"hyper_output_gain", field(&RunConfig::hyper_output_gain)},
            {"init_gamma", field(&RunConfig::init_gamma)},
            {"init_lambda", field(&RunConfig::init_lambda)},
            {"precision_grad", field(&RunConfig::precision_grad)},
            {"classifier_epochs", field(&RunConfig::classifier_epochs)},
            {"classifier_lr", field(&RunConfig::classifier_lr)},
            {"classifier_min_accuracy", field(&RunConfig::classifier_min_accuracy)},
            {"pgd_steps", field(&RunConfig::pgd_steps)},
            {"pgd_step", field(&RunConfig::pgd_step)},
            {"max_tries", field(&RunConfig::max_tries)},
            {"seed_data", field(&RunConfig::seed_data)},
            {"seed_init", field(&RunConfig::seed_init)},
            {"seed_train", field(&RunConfig::seed_train)},
            {"threads", field(&RunConfig::threads)},
            {"out_dir", field(&RunConfig::out_dir)},
        };
        t["adv_term"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                             if (v == "corrected")
                                 c.adv_term = AdvTermForm::corrected;
                             else if (v == "literal")
                                 c.adv_term = AdvTermForm::literal;
                             else
                                 throw ConfigError("bad value '" + v + "' for key '" + k + "'");
                         },
                         [](const RunConfig& c) -> std::string {
                             return c.adv_term == AdvTermForm::corrected ? "corrected" : "literal";
                         }};
        return t;
    }();
    return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, value);
}

void RunConfig::validate() const {
    require(dataset == "swiss_roll" || dataset == "mnist_idx", "dataset must be swiss_roll or mnist_idx");
    require(M >= 1, "M must be at least 1");
    require(T_inner >= 1, "T_inner must be at least 1");
    require(epochs >= 0, "epochs must be non-negative");
    require(batch_size >= 1, "batch_size must be positive");
    require(latent_dim >= 2, "latent_dim must be at least 2");
    require(eps_attack > 0, "eps_attack must be positive");
    for (double rate : {lr_phi, lr_eta, lr_eta_prime, beta, beta_prime, svgd_step, gbsm_step, pgd_step, classifier_lr})
        require(rate > 0, "learning rates must be positive");
    require(init_gamma > 0 && init_lambda > 0, "initial precisions must be positive");
    require(hyper_output_gain > 0, "hyper_output_gain must be positive");
    require(max_tries >= 1, "max_tries must be at least 1");
    require(threads >= 1, "threads must be at least 1");
}

void RunConfig::apply_env() {
    if (const char* s = std::getenv("MANIFOLD_ADVGEN_SEED"); s && *s) {
        const auto seed = parse_as<std::uint64_t>("MANIFOLD_ADVGEN_SEED", s);
        seed_data = seed_init = seed_train = seed;
    }
}

std::map<std::string, std::string> RunConfig::to_map() const {
    std::map<std::string, std::string> out;
    for (const auto& [key, f] : fields()) out[key] = f.get(*this);
    return out;
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

std::string to_config_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, value] : cfg.to_map()) out += key + " = " + value + "\n";
    return out;
}

}  // namespace madv
