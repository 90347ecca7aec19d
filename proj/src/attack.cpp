#include "madv/attack.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace madv {

void Adam::step(VectorXd& params, const VectorXd& grad) {
    if (m.size() != params.size()) throw ContractError("Adam state does not match parameter count");
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, double(t));
    const double c2 = 1.0 - std::pow(beta2, double(t));
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

// ---------------------------------------------------------------------------

namespace {

int argmax(const Eigen::Ref<const RowVector<double>>& row) {
    Eigen::Index k;
    row.maxCoeff(&k);
    return static_cast<int>(k);
}

MatrixXd as_row(const VectorXd& v) { return v.transpose(); }

}  // namespace

std::vector<int> Classifier::predict(const MatrixXd& x) const {
    const MatrixXd p = proba(x);
    std::vector<int> out(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) out[i] = argmax(p.row(i));
    return out;
}

int Classifier::predict(const VectorXd& x) const { return predict(as_row(x))[0]; }

MlpShape classifier_shape(int input_dim, int classes) {
    return {{input_dim, 32, 32, classes}, HiddenActivation::tanh, OutputActivation::softmax};
}

ValueGrad classifier_loss(const Mlpd& net, const MatrixXd& x, const std::vector<int>& y) {
    require(Eigen::Index(y.size()) == x.rows(), "label count does not match rows");
    MlpTape<double> tape;
    MatrixXd p = mlp_forward(net, x, &tape);
    ValueGrad out{0.0, VectorXd::Zero(net.param_count())};
    const double n = double(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        // log-softmax from the logits avoids log(0)
        const auto logits = tape.logits.row(i);
        const double mx = logits.maxCoeff();
        const double lse = mx + std::log((logits.array() - mx).exp().sum());
        out.value += (lse - logits[y[i]]) / n;
        p(i, y[i]) -= 1.0;
    }
    mlp_backward(net, tape, MatrixXd(p / n), &out.grad);
    require_finite(out.value, "classifier loss");
    return out;
}

ValueGrad cross_entropy_input_grad(const Classifier& clf, const VectorXd& x, int y) {
    MlpTape<double> tape;
    MatrixXd p = mlp_forward(clf.net, as_row(x), &tape);
    const auto logits = tape.logits.row(0);
    const double mx = logits.maxCoeff();
    ValueGrad out;
    out.value = mx + std::log((logits.array() - mx).exp().sum()) - logits[y];
    p(0, y) -= 1.0;
    MatrixXd dx;
    mlp_backward(clf.net, tape, p, nullptr, &dx);
    out.grad = dx.row(0).transpose();
    return out;
}

double accuracy(const Classifier& clf, const MatrixXd& x, const std::vector<int>& y) {
    if (y.empty()) return 0.0;
    const auto pred = clf.predict(x);
    int hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];
    return double(hits) / double(y.size());
}

Classifier train_classifier(const LabeledDataset& data, const RunConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Classifier clf{Mlpd::glorot(classifier_shape(int(data.x.cols()), data.classes), rng), false, 0.0};
    Adam adam(clf.net.param_count(), cfg.classifier_lr);
    VectorXd w = clf.net.flatten();
    std::vector<int> order = data.train;
    const int batch = cfg.batch_size;
    for (int epoch = 0; epoch < cfg.classifier_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::vector<int> idx(order.begin() + std::ptrdiff_t(start),
                                       order.begin() + std::ptrdiff_t(std::min(order.size(), start + batch)));
            clf.net.assign(w);
            const ValueGrad vg = classifier_loss(clf.net, data.rows(idx), data.labels(idx));
            adam.step(w, vg.grad);
        }
    }
    clf.net.assign(w);
    clf.trained = true;
    clf.test_accuracy = accuracy(clf, data.rows(data.test), data.labels(data.test));
    return clf;
}

// ---------------------------------------------------------------------------

ValueGrad adversarial_term_grad(const VectorXd& x_adv, int y, const Classifier& clf, AdvTermForm form) {
    MlpTape<double> tape;
    const MatrixXd p = mlp_forward(clf.net, as_row(x_adv), &tape);
    const double py = p(0, y);
    const double margin = 1.0 - py + 1e-12;
    const double sign = form == AdvTermForm::corrected ? -1.0 : 1.0;
    ValueGrad out;
    out.value = sign * std::log(margin);
    // d/dlogit_j of P_y is P_y (1[j = y] - P_j)
    MatrixXd d_logits = -py * p;
    d_logits(0, y) += py;
    d_logits *= -sign / margin;
    MatrixXd dx;
    mlp_backward(clf.net, tape, d_logits, nullptr, &dx);
    out.grad = dx.row(0).transpose();
    return out;
}

double adversarial_term(const VectorXd& x_adv, int y, const Classifier& clf, AdvTermForm form) {
    const double py = clf.proba(as_row(x_adv))(0, y);
    const double v = std::log(1.0 - py + 1e-12);
    return form == AdvTermForm::corrected ? -v : v;
}

TotalLoss total_loss(const VectorXd& x, const VectorXd& x_tilde, const VectorXd& x_adv, int y,
                     const Classifier& clf, double eps_attack, AdvTermForm form) {
    TotalLoss l;
    l.clean = (x - x_tilde).norm();
    l.rec = (x - x_adv).norm();
    l.gate_open = !(l.rec > eps_attack);
    l.term = l.gate_open ? adversarial_term(x_adv, y, clf, form) : 0.0;
    l.adv = l.rec + l.term;
    return l;
}

ValueGrad adv_loss_grad(const VectorXd& x, const VectorXd& x_adv, int y, const Classifier& clf, double eps_attack,
                        AdvTermForm form) {
    const VectorXd diff = x_adv - x;
    const double rec = diff.norm();
    ValueGrad out{rec, rec > 0.0 ? VectorXd(diff / rec) : VectorXd(VectorXd::Zero(x.size()))};
    if (!(rec > eps_attack)) {
        const ValueGrad t = adversarial_term_grad(x_adv, y, clf, form);
        out.value += t.value;
        out.grad += t.grad;
    }
    return out;
}

// ---------------------------------------------------------------------------

TrainState init_state(const RunConfig& cfg, int input_dim) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed_init);
    TrainState s;
    s.spec = EncoderSpec{input_dim, {40, 40}, cfg.latent_dim};
    const MlpShape enc = s.encoder();
    HyperInit init{cfg.hyper_output_sd, cfg.hyper_output_gain, std::log(cfg.init_gamma), std::log(cfg.init_lambda)};
    s.eta = make_hypernet(enc, HyperRole::clean, init, rng);
    s.eta_prime = s.eta;
    s.eta_prime.role = HyperRole::perturbing;
    s.phi = Mlpd::glorot(decoder_shape(s.spec), rng);
    s.delta = MatrixXd::Zero(cfg.M, cfg.latent_dim);
    s.codes = sample_codes(cfg.M, kCodeDim, rng());
    s.adam_eta = Adam(s.eta.net.param_count(), cfg.lr_eta);
    s.adam_eta_prime = Adam(s.eta_prime.net.param_count(), cfg.lr_eta_prime);
    s.adam_phi = Adam(s.phi.param_count(), cfg.lr_phi);
    s.epoch = 0;
    s.seed_train = cfg.seed_train;
    return s;
}

InnerStats inner_training(TrainState& state, const ParticleSet& theta, const ParticleSet& theta_prime,
                          const MatrixXd& x, const RunConfig& cfg, std::mt19937_64& rng) {
    const int count = theta.size();
    const PosteriorHyper hyper;
    InnerStats stats;

    std::vector<std::uint64_t> seeds(count);
    for (auto& s : seeds) s = rng();
    MatrixXd grads(count, theta.length());
    parallel_for(count, cfg.threads, [&](int m) {
        const InversionResult inv = inversion(x, theta, m, state.phi, seeds[m]);
        const VectorXd particle = theta.particle(m);
        grads.row(m) = log_posterior_grad(theta.net(), particle, x, inv.z_tilde.z, hyper, particle).transpose();
    });
    stats.bandwidth = count >= 2 ? median_bandwidth(theta.values()) : 1.0;
    const MatrixXd targets = theta.values() + cfg.svgd_step * svgd_tau(theta.values(), grads, stats.bandwidth);
    MatchResult matched = trajectory_match(state.eta, state.codes, targets, cfg.beta, cfg.match_steps);
    state.eta = std::move(matched.net);
    stats.match_eta_before = matched.loss_before;
    stats.match_eta_after = matched.loss_after;

    GbsmResult g = gbsm_update(theta_prime, state.delta, x, theta, cfg.gbsm_step);
    state.delta = g.delta;
    stats.warnings = std::move(g.warnings);

    AlignResult a = align(g.theta_prime, theta, grads, stats.bandwidth, state.eta_prime, state.codes, cfg.svgd_step,
                          cfg.beta_prime, cfg.match_steps);
    state.eta_prime = std::move(a.match.net);
    stats.match_eta_prime_before = a.match.loss_before;
    stats.match_eta_prime_after = a.match.loss_after;
    return stats;
}

namespace {

struct PathResult {
    MatrixXd x_out;
    MatrixXd z;
    VectorXd d_phi;
    MatrixXd d_particles;
};

// Posterior sample z (one particle per row), decode, and backpropagate a
// per-row loss to the decoder and to every particle (weights and rho_gamma).
template <typename RowLoss>
PathResult reconstruct_path(const ParticleSet& particles, const Mlpd& phi, const MatrixXd& x, std::mt19937_64& rng,
                            bool precision_grad, RowLoss&& row_loss) {
    const int count = particles.size();
    const Eigen::Index rows = x.rows();
    const int d = particles.net().output_dim();
    std::uniform_int_distribution<int> pick(0, count - 1);
    std::normal_distribution<double> normal;
    std::vector<int> owner(rows);
    MatrixXd noise(rows, d);
    for (Eigen::Index i = 0; i < rows; ++i) {
        owner[i] = pick(rng);
        for (int j = 0; j < d; ++j) noise(i, j) = normal(rng);
    }

    PathResult r;
    r.z.resize(rows, d);
    std::vector<std::vector<int>> groups(count);
    for (Eigen::Index i = 0; i < rows; ++i) groups[owner[i]].push_back(int(i));
    std::vector<MlpTape<double>> tapes(count);
    std::vector<Mlpd> nets;
    for (int m = 0; m < count; ++m) {
        nets.push_back(particles.network(m));
        if (groups[m].empty()) continue;
        MatrixXd xm(groups[m].size(), x.cols());
        for (std::size_t k = 0; k < groups[m].size(); ++k) xm.row(k) = x.row(groups[m][k]);
        const MatrixXd mean = mlp_forward(nets[m], xm, &tapes[m]);
        const double sd = std::exp(-0.5 * particles.rho_gamma(m));
        for (std::size_t k = 0; k < groups[m].size(); ++k)
            r.z.row(groups[m][k]) = mean.row(k) + sd * noise.row(groups[m][k]);
    }
    MlpTape<double> dec_tape;
    r.x_out = mlp_forward(phi, r.z, &dec_tape);
    require_finite(r.x_out, "decoded batch");

    MatrixXd d_out(rows, x.cols());
    for (Eigen::Index i = 0; i < rows; ++i) d_out.row(i) = row_loss(i, r.x_out.row(i).transpose()).transpose();
    r.d_phi = VectorXd::Zero(phi.param_count());
    MatrixXd dz;
    mlp_backward(phi, dec_tape, d_out, &r.d_phi, &dz);

    const Eigen::Index p = particles.weight_count();
    r.d_particles = MatrixXd::Zero(count, particles.length());
    for (int m = 0; m < count; ++m) {
        if (groups[m].empty()) continue;
        MatrixXd dmean(groups[m].size(), d);
        double d_rho = 0.0;
        const double sd = std::exp(-0.5 * particles.rho_gamma(m));
        for (std::size_t k = 0; k < groups[m].size(); ++k) {
            const int i = groups[m][k];
            dmean.row(k) = dz.row(i);
            // z = mean + exp(-rho/2) eps
            d_rho += -0.5 * sd * dz.row(i).dot(noise.row(i));
        }
        VectorXd dw = VectorXd::Zero(p);
        mlp_backward(nets[m], tapes[m], dmean, &dw);
        r.d_particles.row(m).head(p) = dw.transpose();
        if (precision_grad) r.d_particles(m, p) = d_rho;
    }
    return r;
}

void adam_update(Mlpd& net, Adam& adam, const VectorXd& grad) {
    require_finite(grad, "outer gradient");
    VectorXd w = net.flatten();
    adam.step(w, grad);
    net.assign(w);
}

}  // namespace

EpochMetrics train_epoch(TrainState& state, const LabeledDataset& data, const Classifier& clf,
                         const RunConfig& cfg) {
    std::seed_seq seq{std::uint32_t(state.seed_train), std::uint32_t(state.seed_train >> 32),
                      std::uint32_t(state.epoch)};
    std::mt19937_64 rng(seq);
    std::vector<int> order = data.train;
    std::shuffle(order.begin(), order.end(), rng);

    EpochMetrics em;
    em.epoch = state.epoch;
    int inner_calls = 0;
    double adv_rows = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::vector<int> idx(order.begin() + std::ptrdiff_t(start),
                                   order.begin() + std::ptrdiff_t(std::min(order.size(), start + cfg.batch_size)));
        const MatrixXd x = data.rows(idx);
        const std::vector<int> y = data.labels(idx);
        const double n = double(idx.size());

        try {
            bool descending = true;
            for (int t = 0; t < cfg.T_inner; ++t) {
                const InnerStats s = inner_training(state, state.theta(), state.theta_prime(), x, cfg, rng);
                descending = descending && s.match_eta_after < s.match_eta_before &&
                             s.match_eta_prime_after < s.match_eta_prime_before;
                em.bandwidth += s.bandwidth;
                em.match_loss_eta += s.match_eta_after;
                em.match_loss_eta_prime += s.match_eta_prime_after;
                ++inner_calls;
            }
            em.descending_batches += descending;
            ++em.batches;

            const ParticleSet theta = state.theta();
            const ParticleSet theta_prime = state.theta_prime();
            double clean_sum = 0.0, rec_sum = 0.0, term_sum = 0.0;
            int fooled = 0;
            const PathResult clean = reconstruct_path(theta, state.phi, x, rng, cfg.precision_grad, [&](Eigen::Index i, const VectorXd& xt) {
                const VectorXd diff = xt - x.row(i).transpose();
                const double norm = diff.norm();
                clean_sum += norm;
                return VectorXd(norm > 0.0 ? VectorXd(diff / (norm * n)) : VectorXd(VectorXd::Zero(diff.size())));
            });
            const PathResult adv = reconstruct_path(theta_prime, state.phi, x, rng, cfg.precision_grad, [&](Eigen::Index i, const VectorXd& xa) {
                const VectorXd xi = x.row(i).transpose();
                const ValueGrad vg = adv_loss_grad(xi, xa, y[i], clf, cfg.eps_attack, cfg.adv_term);
                const double rec = (xa - xi).norm();
                rec_sum += rec;
                term_sum += vg.value - rec;
                if (!(rec > cfg.eps_attack) && clf.predict(xa) != y[i]) ++fooled;
                return VectorXd(vg.grad / n);
            });
            const double loss = (clean_sum + rec_sum + term_sum) / n;
            if (!std::isfinite(loss)) throw NumericError("non-finite training loss");

            adam_update(state.eta.net, state.adam_eta, hypernet_pullback(state.eta, state.codes, clean.d_particles));
            adam_update(state.eta_prime.net, state.adam_eta_prime,
                        hypernet_pullback(state.eta_prime, state.codes, adv.d_particles));
            adam_update(state.phi, state.adam_phi, clean.d_phi + adv.d_phi);

            em.L_rec_clean += clean_sum;
            em.L_rec_adv += rec_sum;
            em.adv_term += term_sum;
            em.asr_train_batch += fooled;
            adv_rows += n;
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(state.epoch) + ", batch " + std::to_string(start / cfg.batch_size) +
                               ": " + e.what());
        }
    }
    if (adv_rows > 0) {
        em.L_rec_clean /= adv_rows;
        em.L_rec_adv /= adv_rows;
        em.adv_term /= adv_rows;
        em.asr_train_batch /= adv_rows;
    }
    if (inner_calls > 0) {
        em.bandwidth /= inner_calls;
        em.match_loss_eta /= inner_calls;
        em.match_loss_eta_prime /= inner_calls;
    }
    for (Eigen::Index m = 0; m < state.delta.rows(); ++m) em.delta_norms.push_back(state.delta.row(m).norm());
    const ParticleSet theta = state.theta();
    const ParticleSet theta_prime = state.theta_prime();
    for (int m = 0; m < theta.size(); ++m) {
        em.gamma_mean += theta.gamma(m) / theta.size();
        em.gamma_prime_mean += theta_prime.gamma(m) / theta.size();
    }
    ++state.epoch;
    return em;
}

std::string EpochMetrics::to_json() const {
    nlohmann::json j = {{"epoch", epoch},
                        {"L_rec_clean", L_rec_clean},
                        {"L_rec_adv", L_rec_adv},
                        {"adv_term", adv_term},
                        {"asr_train_batch", asr_train_batch},
                        {"delta_norms", delta_norms},
                        {"bandwidth", bandwidth},
                        {"match_loss_eta", match_loss_eta},
                        {"match_loss_eta_prime", match_loss_eta_prime},
                        {"batches", batches},
                        {"descending_batches", descending_batches},
                        {"gamma_mean", gamma_mean},
                        {"gamma_prime_mean", gamma_prime_mean}};
    return j.dump();
}

void train(TrainState& state, const LabeledDataset& data, const Classifier& clf, const RunConfig& cfg,
           const EpochCallback& on_epoch) {
    if (!clf.trained) throw ContractError("the target classifier must be trained before the attack");
    while (state.epoch < cfg.epochs) {
        const EpochMetrics em = train_epoch(state, data, clf, cfg);
        if (on_epoch) on_epoch(em, state);
    }
}

// ---------------------------------------------------------------------------

Generated generate(const ParticleSet& theta_prime, const Mlpd& phi, const VectorXd& x, int y, const Classifier& clf,
                   double eps_attack, int max_tries, std::uint64_t seed, AdvTermForm form) {
    std::mt19937_64 seeds(seed);
    const MatrixXd xr = as_row(x);
    Generated best;
    best.loss = std::numeric_limits<double>::infinity();
    for (int k = 0; k < std::max(1, max_tries); ++k) {
        const LatentBatch z = encode_posterior(theta_prime, xr, PosteriorMode::sample, seeds(), LatentSource::perturbed);
        const VectorXd xa = decode(phi, z.z).row(0).transpose();
        Generated g;
        g.x_adv = xa;
        g.z_adv = z.z.row(0).transpose();
        g.y_pred = clf.predict(xa);
        g.rec = (x - xa).norm();
        g.constraint_satisfied = g.rec <= eps_attack;
        g.is_adversarial = g.constraint_satisfied && g.y_pred != y;
        g.loss = g.rec + (g.constraint_satisfied ? adversarial_term(xa, y, clf, form) : 0.0);
        g.tries = k + 1;
        if (g.is_adversarial) return g;
        if (g.loss < best.loss) best = g;
    }
    best.tries = std::max(1, max_tries);
    return best;
}

VectorXd pgd_attack(const VectorXd& x, int y, const Classifier& clf, double eps_attack, int steps, double step_size) {
    VectorXd xa = x;
    for (int s = 0; s < steps; ++s) {
        const VectorXd g = cross_entropy_input_grad(clf, xa, y).grad;
        const double gn = g.norm();
        if (gn == 0.0) break;
        xa += (step_size / gn) * g;
        VectorXd delta = xa - x;
        const double dn = delta.norm();
        if (dn > eps_attack) xa = x + delta * (eps_attack / dn);
    }
    return xa;
}

SpectralNorm spectral_norm(const MatrixXd& d, double tol, int max_iter) {
    SpectralNorm out;
    const MatrixXd a = d.transpose() * d;
    if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0) {
        out.converged = true;
        return out;
    }
    // Start from the column of D^T D with the largest norm; it cannot be
    // orthogonal to the dominant eigenvector unless D^T D is zero.
    Eigen::Index col;
    a.colwise().norm().maxCoeff(&col);
    VectorXd v = a.col(col).normalized();
    double lambda = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        const VectorXd av = a * v;
        lambda = v.dot(av);
        out.iterations = it;
        const double residual = (av - lambda * v).norm();
        if (residual <= tol * std::max(lambda, 1e-300)) {
            out.converged = true;
            break;
        }
        v = av.normalized();
    }
    out.value = std::sqrt(std::max(lambda, 0.0));
    return out;
}

double noise_level(const MatrixXd& clean_latents, const MatrixXd& adv_latents) {
    require(clean_latents.rows() == adv_latents.rows() && clean_latents.cols() == adv_latents.cols(),
            "noise level needs row-aligned latent matrices");
    return spectral_norm(adv_latents - clean_latents).value;
}

double noise_level_batched(const MatrixXd& clean_latents, const MatrixXd& adv_latents, int batch_size) {
    require(batch_size >= 1, "batch size must be positive");
    double sum = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < clean_latents.rows(); start += batch_size) {
        const Eigen::Index rows = std::min<Eigen::Index>(batch_size, clean_latents.rows() - start);
        sum += noise_level(clean_latents.middleRows(start, rows), adv_latents.middleRows(start, rows));
        ++batches;
    }
    return batches ? sum / batches : 0.0;
}

std::vector<double> marginal_overlap(const MatrixXd& clean_latents, const MatrixXd& adv_latents, std::uint64_t seed) {
    require(clean_latents.rows() >= 30 && adv_latents.rows() >= 30, "marginal overlap needs at least 30 rows each");
    require(clean_latents.cols() == adv_latents.cols(), "latent dimensions differ");
    const Eigen::Index n = std::min(clean_latents.rows(), adv_latents.rows());
    std::mt19937_64 rng(seed);
    auto subsample = [&](const MatrixXd& z) {
        if (z.rows() == n) return z;
        std::vector<int> idx(z.rows());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        MatrixXd out(n, z.cols());
        for (Eigen::Index i = 0; i < n; ++i) out.row(i) = z.row(idx[i]);
        return out;
    };
    const MatrixXd a = subsample(clean_latents);
    const MatrixXd b = subsample(adv_latents);
    std::vector<double> w1(a.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        std::vector<double> u(a.col(j).data(), a.col(j).data() + n);
        std::vector<double> v(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            u[i] = a(i, j);
            v[i] = b(i, j);
        }
        std::sort(u.begin(), u.end());
        std::sort(v.begin(), v.end());
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += std::abs(u[i] - v[i]);
        w1[j] = s / double(n);
    }
    return w1;
}

double mean_nn_distance(const MatrixXd& points, const MatrixXd& reference, bool exclude_self) {
    if (points.rows() == 0) return 0.0;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < reference.rows(); ++j) {
            if (exclude_self && i == j) continue;
            best = std::min(best, (points.row(i) - reference.row(j)).norm());
        }
        sum += best;
    }
    return sum / double(points.rows());
}

// ---------------------------------------------------------------------------

namespace {
MatrixXd stack(const std::vector<AttackRecord>& records, VectorXd AttackRecord::*field) {
    if (records.empty()) return {};
    MatrixXd out(records.size(), (records.front().*field).size());
    for (std::size_t i = 0; i < records.size(); ++i) out.row(i) = (records[i].*field).transpose();
    return out;
}
}  // namespace

void AttackReport::compute_aggregates(std::uint64_t seed) {
    asr_denominator = 0;
    adversarial_count = 0;
    int fooled = 0, correct = 0, pgd_fooled = 0;
    double rec_sum = 0.0;
    for (const auto& r : records) {
        correct += r.y_pred_clean == r.y;
        adversarial_count += r.is_adversarial;
        rec_sum += r.rec_loss;
        if (r.y_pred_clean == r.y) pgd_fooled += r.y_pred_pgd != r.y;
        if (r.constraint_satisfied && r.y_pred_clean == r.y) {
            ++asr_denominator;
            fooled += r.y_pred_adv != r.y;
        }
    }
    const double n = double(records.size());
    classifier_accuracy = records.empty() ? 0.0 : correct / n;
    asr = asr_denominator ? double(fooled) / asr_denominator : 0.0;
    found_rate = correct ? double(fooled) / correct : 0.0;
    mean_rec_loss = records.empty() ? 0.0 : rec_sum / n;
    pgd_misclassification = correct ? double(pgd_fooled) / correct : 0.0;
    marginal_w1.clear();
    clean_sd.clear();
    if (records.empty()) return;

    const MatrixXd clean = stack(records, &AttackRecord::z_clean);
    const MatrixXd ours = stack(records, &AttackRecord::z_adv);
    const MatrixXd pgd = stack(records, &AttackRecord::z_pgd);
    noise_level = noise_level_batched(clean, ours, 64);
    if (records.size() >= 30) marginal_w1 = marginal_overlap(clean, ours, seed);
    const RowVector<double> mean = clean.colwise().mean();
    for (Eigen::Index j = 0; j < clean.cols(); ++j)
        clean_sd.push_back(std::sqrt((clean.col(j).array() - mean[j]).square().sum() / n));
    nn_clean = mean_nn_distance(clean, clean, true);
    nn_ours = mean_nn_distance(ours, clean, false);
    nn_pgd = mean_nn_distance(pgd, clean, false);
}

std::string AttackReport::aggregate_json() const {
    nlohmann::json j = {{"examples", records.size()},
                        {"classifier_accuracy", classifier_accuracy},
                        {"asr", asr},
                        {"asr_denominator", asr_denominator},
                        {"adversarial_count", adversarial_count},
                        {"found_rate", found_rate},
                        {"mean_rec_loss", mean_rec_loss},
                        {"noise_level", noise_level},
                        {"marginal_w1", marginal_w1},
                        {"clean_sd", clean_sd},
                        {"nn_clean", nn_clean},
                        {"nn_ours", nn_ours},
                        {"nn_pgd", nn_pgd},
                        {"pgd_misclassification", pgd_misclassification}};
    return j.dump(2);
}

AttackReport evaluate(const TrainState& state, const Classifier& clf, const MatrixXd& x, const std::vector<int>& y,
                      const RunConfig& cfg, std::uint64_t seed) {
    require(Eigen::Index(y.size()) == x.rows(), "label count does not match rows");
    const ParticleSet theta = state.theta();
    const ParticleSet theta_prime = state.theta_prime();
    const MatrixXd clean = encode_posterior(theta, x, PosteriorMode::mean).z;
    const MatrixXd x_tilde = decode(state.phi, clean);
    const auto pred = clf.predict(x);
    std::mt19937_64 seeds(seed);
    AttackReport report;
    report.records.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        AttackRecord& r = report.records[i];
        r.x = x.row(i).transpose();
        r.x_tilde = x_tilde.row(i).transpose();
        r.z_clean = clean.row(i).transpose();
        r.y = y[i];
        r.y_pred_clean = pred[i];
        const Generated g = generate(theta_prime, state.phi, r.x, r.y, clf, cfg.eps_attack, cfg.max_tries, seeds(),
                                     cfg.adv_term);
        r.x_adv = g.x_adv;
        r.z_adv = g.z_adv;
        r.y_pred_adv = g.y_pred;
        r.rec_loss = g.rec;
        r.constraint_satisfied = g.constraint_satisfied;
        r.is_adversarial = g.is_adversarial;
        r.x_pgd = pgd_attack(r.x, r.y, clf, cfg.eps_attack, cfg.pgd_steps, cfg.pgd_step);
        r.y_pred_pgd = clf.predict(r.x_pgd);
        r.z_pgd = encode_posterior(theta, as_row(r.x_pgd), PosteriorMode::mean).z.row(0).transpose();
    }
    report.compute_aggregates(seed);
    return report;
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::pair<std::string, VectorXd AttackRecord::*>>& vector_columns() {
    static const std::vector<std::pair<std::string, VectorXd AttackRecord::*>> cols{
        {"x", &AttackRecord::x},         {"xt", &AttackRecord::x_tilde}, {"xa", &AttackRecord::x_adv},
        {"xp", &AttackRecord::x_pgd},    {"z", &AttackRecord::z_clean},  {"za", &AttackRecord::z_adv},
        {"zp", &AttackRecord::z_pgd}};
    return cols;
}

const char* const kScalarColumns[] = {"y", "y_pred_clean", "y_pred_adv", "y_pred_pgd", "rec_loss",
                                      "constraint_satisfied", "is_adversarial"};

}  // namespace

void write_report_csv(const AttackReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    if (!report.records.empty()) {
        const auto& first = report.records.front();
        for (const auto& [prefix, member] : vector_columns())
            for (Eigen::Index j = 0; j < (first.*member).size(); ++j) out << prefix << (j + 1) << ',';
    }
    for (std::size_t k = 0; k < std::size(kScalarColumns); ++k) out << kScalarColumns[k] << (k + 1 < std::size(kScalarColumns) ? "," : "\n");
    out << std::setprecision(17);
    for (const auto& r : report.records) {
        for (const auto& [prefix, member] : vector_columns())
            for (Eigen::Index j = 0; j < (r.*member).size(); ++j) out << (r.*member)[j] << ',';
        out << r.y << ',' << r.y_pred_clean << ',' << r.y_pred_adv << ',' << r.y_pred_pgd << ',' << r.rec_loss << ','
            << int(r.constraint_satisfied) << ',' << int(r.is_adversarial) << '\n';
    }
}

AttackReport read_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open report " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": missing header");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    // Column prefix -> count, in file order.
    std::map<std::string, int> width;
    for (const auto& h : header) {
        const auto digit = h.find_first_of("0123456789");
        if (digit != std::string::npos && digit > 0) ++width[h.substr(0, digit)];
    }
    const std::size_t expected_scalars = std::size(kScalarColumns);
    AttackReport report;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<double> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                cells.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw FormatError(path + ": bad number on row " + std::to_string(row));
            }
        }
        if (cells.size() != header.size()) throw FormatError(path + ": row " + std::to_string(row) + " has wrong width");
        AttackRecord r;
        std::size_t at = 0;
        for (const auto& [prefix, member] : vector_columns()) {
            const int w = width.count(prefix) ? width[prefix] : 0;
            r.*member = Eigen::Map<const VectorXd>(cells.data() + at, w);
            at += w;
        }
        if (cells.size() - at != expected_scalars) throw FormatError(path + ": unexpected columns");
        r.y = int(cells[at]);
        r.y_pred_clean = int(cells[at + 1]);
        r.y_pred_adv = int(cells[at + 2]);
        r.y_pred_pgd = int(cells[at + 3]);
        r.rec_loss = cells[at + 4];
        r.constraint_satisfied = cells[at + 5] != 0.0;
        r.is_adversarial = cells[at + 6] != 0.0;
        report.records.push_back(std::move(r));
    }
    report.compute_aggregates();
    return report;
}

}  // namespace madv
