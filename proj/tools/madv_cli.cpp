// madv: command-line driver for data generation, training, attacks and plots.
//
// Exit codes: 0 success, 1 usage or input error, 2 numeric failure.

#include "madv/attack.hpp"
#include "madv/checkpoint.hpp"
#include "madv/config.hpp"
#include "madv/dataset.hpp"
#include "madv/plots.hpp"
#include "madv/svgd.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace madv;

namespace {

// Every RunConfig key doubles as a --key flag; flags beat the config file.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> values;

    void attach(CLI::App* sub) {
        sub->add_option("--config", config_path, "key = value run configuration file");
        for (const auto& [key, value] : RunConfig{}.to_map())
            sub->add_option("--" + key, values[key], "config key " + key + " (default " + value + ")");
    }

    RunConfig resolve(const CLI::App* sub) const {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        for (const auto& [key, value] : values)
            if (sub->count("--" + key) > 0) cfg.set(key, value);
        cfg.apply_env();
        cfg.validate();
        return cfg;
    }
};

LabeledDataset load_data(const RunConfig& cfg, const std::string& data_path) {
    if (cfg.dataset == "mnist_idx") {
        const std::string images = data_path.empty() ? cfg.data_path : data_path;
        if (images.empty() || cfg.labels_path.empty())
            throw ConfigError("mnist_idx needs --data_path (images) and --labels_path");
        return load_idx(images, cfg.labels_path);
    }
    const std::string path = data_path.empty() ? cfg.data_path : data_path;
    if (!path.empty()) return read_csv(path);
    return gen_swiss_roll(cfg.n, cfg.classes, cfg.noise_sd, cfg.seed_data);
}

void ensure_dir(const std::string& dir) {
    if (!dir.empty()) fs::create_directories(dir);
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

Classifier classifier_for(const RunConfig& cfg, const LabeledDataset& data, const std::string& path) {
    if (!path.empty()) return load_classifier(path);
    Classifier clf = train_classifier(data, cfg, cfg.seed_init);
    std::cerr << "trained classifier: test accuracy " << clf.test_accuracy << "\n";
    return clf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Manifold-preserving adversarial example generation"};
    app.require_subcommand(1);

    ConfigFlags flags;
    std::string data_path, out_path, classifier_path, state_path, resume_path, report_path;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;

    auto* gen = app.add_subcommand("gen-data", "Generate the Swiss Roll dataset as CSV");
    gen->add_option("--seed", seed, "data seed (same as --seed_data)");
    gen->add_option("--out", out_path, "output CSV")->required();

    auto* tc = app.add_subcommand("train-classifier", "Train the target classifier");
    tc->add_option("--data", data_path, "dataset CSV (generated from the config when absent)");
    tc->add_option("--out", out_path, "classifier checkpoint")->required();

    auto* tr = app.add_subcommand("train", "Train the encoder particles, hypernetworks and decoder");
    tr->add_option("--data", data_path, "dataset CSV");
    tr->add_option("--classifier", classifier_path, "classifier checkpoint (trained on the fly when absent)");
    tr->add_option("--resume", resume_path, "state checkpoint to continue from");
    tr->add_option("--checkpoint-every", checkpoint_every, "also save state_epoch_<k>.ckpt every k epochs");

    auto* at = app.add_subcommand("attack", "Generate adversarial examples for the test split");
    at->add_option("--data", data_path, "dataset CSV");
    at->add_option("--state", state_path, "state checkpoint (default <out_dir>/state.ckpt)");
    at->add_option("--classifier", classifier_path, "classifier checkpoint (default <out_dir>/classifier.ckpt)");

    auto* ev = app.add_subcommand("eval", "Recompute aggregate metrics from a report CSV");
    ev->add_option("--report", report_path, "report CSV")->required();

    auto* ep = app.add_subcommand("export-plots", "Latent scatter and marginal histogram SVGs");
    ep->add_option("--report", report_path, "report CSV")->required();
    ep->add_option("--out", out_path, "output directory (default <out_dir>/plots)");

    auto* sd = app.add_subcommand("svgd-demo", "SVGD on a known 1-D target");
    std::string target = "normal";
    int particles = 50, steps = 2000;
    double step = 0.05;
    sd->add_option("--target", target, "normal | mixture")->check(CLI::IsMember({"normal", "mixture"}));
    sd->add_option("--particles", particles, "particle count");
    sd->add_option("--steps", steps, "SVGD steps");
    sd->add_option("--step", step, "step size");
    sd->add_option("--seed", seed, "initialization seed");
    sd->add_option("--out", out_path, "optional CSV of final particles");

    auto* pb = app.add_subcommand("pgd-baseline", "L2 PGD against the classifier on the test split");
    pb->add_option("--data", data_path, "dataset CSV");
    pb->add_option("--classifier", classifier_path, "classifier checkpoint");
    pb->add_option("--out", out_path, "output CSV (default <out_dir>/pgd.csv)");

    for (auto* sub : {gen, tc, tr, at, ev, ep, pb}) flags.attach(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*gen) {
            RunConfig cfg = flags.resolve(gen);
            if (gen->count("--seed") && !std::getenv("MANIFOLD_ADVGEN_SEED")) cfg.seed_data = seed;
            const LabeledDataset data = gen_swiss_roll(cfg.n, cfg.classes, cfg.noise_sd, cfg.seed_data);
            write_csv(data, out_path);
            std::cout << "wrote " << data.size() << " rows to " << out_path << "\n";
        } else if (*tc) {
            const RunConfig cfg = flags.resolve(tc);
            const LabeledDataset data = load_data(cfg, data_path);
            const Classifier clf = train_classifier(data, cfg, cfg.seed_init);
            save_classifier(clf, out_path);
            std::cout << "test accuracy " << clf.test_accuracy << "\n";
            if (clf.test_accuracy < cfg.classifier_min_accuracy)
                std::cerr << "warning: accuracy below classifier_min_accuracy " << cfg.classifier_min_accuracy << "\n";
        } else if (*tr) {
            const RunConfig cfg = flags.resolve(tr);
            const LabeledDataset data = load_data(cfg, data_path);
            ensure_dir(cfg.out_dir);
            Classifier clf = classifier_for(cfg, data, classifier_path);
            if (classifier_path.empty()) save_classifier(clf, in_dir(cfg.out_dir, "classifier.ckpt"));
            TrainState state = resume_path.empty() ? init_state(cfg, int(data.x.cols())) : load_state(resume_path);
            write_text(in_dir(cfg.out_dir, "run.cfg"), to_config_text(cfg));
            const std::string metrics_path = in_dir(cfg.out_dir, "metrics.jsonl");
            std::ofstream metrics(metrics_path, resume_path.empty() ? std::ios::trunc : std::ios::app);
            if (!metrics) throw ConfigError("cannot write " + metrics_path);
            train(state, data, clf, cfg, [&](const EpochMetrics& m, const TrainState& s) {
                metrics << m.to_json() << '\n' << std::flush;
                if (checkpoint_every > 0 && s.epoch % checkpoint_every == 0)
                    save_state(s, in_dir(cfg.out_dir, "state_epoch_" + std::to_string(s.epoch) + ".ckpt"));
            });
            save_state(state, in_dir(cfg.out_dir, "state.ckpt"));
            std::cout << "trained to epoch " << state.epoch << "; state in " << in_dir(cfg.out_dir, "state.ckpt")
                      << "\n";
        } else if (*at) {
            const RunConfig cfg = flags.resolve(at);
            const LabeledDataset data = load_data(cfg, data_path);
            const TrainState state = load_state(state_path.empty() ? in_dir(cfg.out_dir, "state.ckpt") : state_path);
            const Classifier clf =
                load_classifier(classifier_path.empty() ? in_dir(cfg.out_dir, "classifier.ckpt") : classifier_path);
            const AttackReport report =
                evaluate(state, clf, data.rows(data.test), data.labels(data.test), cfg, cfg.seed_train);
            ensure_dir(cfg.out_dir);
            write_report_csv(report, in_dir(cfg.out_dir, "report.csv"));
            write_text(in_dir(cfg.out_dir, "report.json"), report.aggregate_json() + "\n");
            std::cout << report.aggregate_json() << "\n";
        } else if (*ev) {
            const RunConfig cfg = flags.resolve(ev);
            AttackReport report = read_report_csv(report_path);
            report.compute_aggregates(cfg.seed_train);
            std::cout << report.aggregate_json() << "\n";
        } else if (*ep) {
            const RunConfig cfg = flags.resolve(ep);
            if (!fs::exists(report_path)) throw ConfigError("report not found: " + report_path);
            const AttackReport report = read_report_csv(report_path);
            for (const auto& f : export_plots(report, out_path.empty() ? in_dir(cfg.out_dir, "plots") : out_path))
                std::cout << "wrote " << f << "\n";
        } else if (*sd) {
            const DemoTarget t = target == "mixture" ? DemoTarget::mixture : DemoTarget::normal;
            const DemoResult r = svgd_demo(t, particles, steps, step, seed);
            nlohmann::json j = {{"target", target},       {"particles", particles},
                                {"steps", steps},         {"mean", r.mean},
                                {"variance", r.variance}, {"left_fraction", r.left_fraction},
                                {"right_fraction", r.right_fraction}};
            std::cout << j.dump() << "\n";
            if (!out_path.empty()) {
                std::ofstream out(out_path);
                if (!out) throw ConfigError("cannot write " + out_path);
                out << "particle\n" << std::setprecision(17);
                for (double v : r.particles) out << v << '\n';
            }
        } else if (*pb) {
            const RunConfig cfg = flags.resolve(pb);
            const LabeledDataset data = load_data(cfg, data_path);
            const Classifier clf = classifier_for(cfg, data, classifier_path);
            const MatrixXd x = data.rows(data.test);
            const auto y = data.labels(data.test);
            const std::string path = out_path.empty() ? in_dir(cfg.out_dir, "pgd.csv") : out_path;
            ensure_dir(fs::path(path).parent_path().string());
            std::ofstream out(path);
            if (!out) throw ConfigError("cannot write " + path);
            out << std::setprecision(17);
            for (Eigen::Index j = 0; j < x.cols(); ++j) out << 'x' << j + 1 << ',';
            for (Eigen::Index j = 0; j < x.cols(); ++j) out << "xp" << j + 1 << ',';
            out << "y,y_pred_clean,y_pred_pgd\n";
            int correct = 0, fooled = 0;
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                const VectorXd xi = x.row(i).transpose();
                const VectorXd xp = pgd_attack(xi, y[i], clf, cfg.eps_attack, cfg.pgd_steps, cfg.pgd_step);
                const int pc = clf.predict(xi), pp = clf.predict(xp);
                correct += pc == y[i];
                fooled += pc == y[i] && pp != y[i];
                for (double v : xi) out << v << ',';
                for (double v : xp) out << v << ',';
                out << y[i] << ',' << pc << ',' << pp << '\n';
            }
            std::cout << "pgd misclassification " << (correct ? double(fooled) / correct : 0.0) << " over " << correct
                      << " correctly classified test points\n";
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
