#include "doctest.h"
#include "oracles.hpp"

#include "madv/attack.hpp"

using namespace madv;

namespace {

// One-input, two-class softmax whose logits are the biases: P(y=0) is fixed.
Classifier constant_classifier(double p0) {
    Classifier c{Mlpd({{1, 2}, HiddenActivation::tanh, OutputActivation::softmax}), true, 1.0};
    c.net.layers()[0].bias << std::log(p0), std::log1p(-p0);
    return c;
}

Classifier random_classifier(std::mt19937_64& rng, int in, int classes) {
    return {Mlpd::glorot(classifier_shape(in, classes), rng), true, 1.0};
}

VectorXd vec(std::initializer_list<double> v) {
    VectorXd out(Eigen::Index(v.size()));
    Eigen::Index i = 0;
    for (double e : v) out[i++] = e;
    return out;
}

RunConfig small_config() {
    RunConfig cfg;
    cfg.n = 400;
    cfg.epochs = 5;
    cfg.classifier_epochs = 100;
    cfg.svgd_step = 1e-5;
    return cfg;
}

}  // namespace

TEST_CASE("adversarial_term: examples") {
    const VectorXd x = vec({0.0});
    CHECK(adversarial_term(x, 0, constant_classifier(0.5)) == doctest::Approx(-std::log(0.5 + 1e-12)).epsilon(1e-12));
    CHECK(std::abs(adversarial_term(x, 0, constant_classifier(1e-300))) < 1e-11);
    CHECK(adversarial_term(x, 0, constant_classifier(1.0 - 1e-9)) > 20.0);
    // Smaller confidence in the true class gives a smaller term.
    CHECK(adversarial_term(x, 0, constant_classifier(0.3)) < adversarial_term(x, 0, constant_classifier(0.6)));
    CHECK(adversarial_term(x, 0, constant_classifier(0.5), AdvTermForm::literal) ==
          doctest::Approx(std::log(0.5 + 1e-12)).epsilon(1e-12));
}

TEST_CASE("total_loss: gate examples") {
    const Classifier clf = constant_classifier(0.5);
    const VectorXd x = vec({1.0});

    const TotalLoss same = total_loss(x, x, x, 0, clf, 0.3);
    CHECK(same.gate_open);
    CHECK(same.rec == 0.0);
    CHECK(same.adv == doctest::Approx(std::log(2.0)));

    const TotalLoss closed = total_loss(x, x, vec({1.6}), 0, clf, 0.3);
    CHECK_FALSE(closed.gate_open);
    CHECK(closed.adv == closed.rec);
    CHECK(closed.term == 0.0);

    const TotalLoss mid = total_loss(x, vec({1.1}), vec({1.2}), 0, clf, 0.3);
    CHECK(mid.clean == doctest::Approx(0.1));
    CHECK(mid.adv == doctest::Approx(0.2 - std::log(0.5 + 1e-12)).epsilon(1e-12));
}

TEST_CASE("adv_loss_grad: a closed gate leaves only the reconstruction gradient") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Classifier a = random_classifier(rng, 3, 4), b = random_classifier(rng, 3, 4);
        const VectorXd x = oracle::random_vector(rng, 3);
        VectorXd dir = oracle::random_vector(rng, 3);
        dir.normalize();
        const VectorXd xa = x + (0.31 + trial * 0.1) * dir;
        const ValueGrad ga = adv_loss_grad(x, xa, trial % 4, a, 0.3);
        const ValueGrad gb = adv_loss_grad(x, xa, trial % 4, b, 0.3);
        CHECK(ga.value == gb.value);
        CHECK(ga.grad == gb.grad);
        CHECK((ga.grad - (xa - x) / (xa - x).norm()).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("adversarial losses match finite differences") {
    std::mt19937_64 rng(2);
    for (auto form : {AdvTermForm::corrected, AdvTermForm::literal}) {
        for (int trial = 0; trial < 20; ++trial) {
            const Classifier clf = random_classifier(rng, 3, 4);
            const VectorXd x = oracle::random_vector(rng, 3);
            VectorXd dir = oracle::random_vector(rng, 3);
            dir.normalize();
            const double radius = trial % 2 ? 0.15 : 0.6;  // both sides of the gate
            const VectorXd xa = x + radius * dir;
            const int y = trial % 4;
            const ValueGrad vg = adv_loss_grad(x, xa, y, clf, 0.3, form);
            const VectorXd fd = finite_diff_grad(
                [&](const VectorXd& v) { return adv_loss_grad(x, v, y, clf, 0.3, form).value; }, xa, 1e-6);
            CHECK(gradient_mismatch(vg.grad, fd) < 1e-5);

            const ValueGrad tg = adversarial_term_grad(xa, y, clf, form);
            const VectorXd tfd =
                finite_diff_grad([&](const VectorXd& v) { return adversarial_term(v, y, clf, form); }, xa, 1e-6);
            CHECK(gradient_mismatch(tg.grad, tfd) < 1e-5);
        }
    }
}

TEST_CASE("classifier: softmax rows, loss gradients") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Classifier clf = random_classifier(rng, 3, 4);
        const MatrixXd x = oracle::random_matrix(rng, 10, 3, 3.0);
        const MatrixXd p = clf.proba(x);
        for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);

        std::vector<int> y(10);
        for (int i = 0; i < 10; ++i) y[i] = (i + trial) % 4;
        const ValueGrad vg = classifier_loss(clf.net, x, y);
        const MlpShape& s = clf.net.shape();
        const VectorXd fd = finite_diff_grad(
            [&](const VectorXd& w) { return classifier_loss(Mlpd(s, w), x, y).value; }, clf.net.flatten(), 1e-6);
        CHECK(gradient_mismatch(vg.grad, fd) < 1e-5);

        const VectorXd xi = x.row(0).transpose();
        const ValueGrad ig = cross_entropy_input_grad(clf, xi, y[0]);
        CHECK(ig.value == doctest::Approx(-std::log(p(0, y[0]))).epsilon(1e-12));
        const VectorXd ifd = finite_diff_grad(
            [&](const VectorXd& v) { return cross_entropy_input_grad(clf, v, y[0]).value; }, xi, 1e-6);
        CHECK(gradient_mismatch(ig.grad, ifd) < 1e-5);
    }
}

TEST_CASE("pgd_attack: zero steps and the L2 ball") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const Classifier clf = random_classifier(rng, 3, 4);
        const VectorXd x = oracle::random_vector(rng, 3);
        CHECK(pgd_attack(x, 1, clf, 0.3, 0, 0.05) == x);
        const VectorXd xa = pgd_attack(x, trial % 4, clf, 0.3, 40, 0.05 + 0.01 * trial);
        CHECK((xa - x).norm() <= 0.3 + 1e-12);
        CHECK(cross_entropy_input_grad(clf, xa, trial % 4).value >= cross_entropy_input_grad(clf, x, trial % 4).value);
    }
}

TEST_CASE("spectral_norm: examples and an independent SVD") {
    CHECK(noise_level(MatrixXd::Ones(5, 3), MatrixXd::Ones(5, 3)) == 0.0);
    MatrixXd rank1 = MatrixXd::Zero(4, 3);
    rank1.row(2) << 3.0, 0.0, -4.0;
    CHECK(spectral_norm(rank1).value == doctest::Approx(5.0).epsilon(1e-12));

    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> rows(1, 64), cols(1, 8);
    for (int trial = 0; trial < 200; ++trial) {
        const MatrixXd d = trial == 0 ? oracle::random_matrix(rng, 8, 2) : oracle::random_matrix(rng, rows(rng), cols(rng));
        const SpectralNorm s = spectral_norm(d);
        const auto sv = oracle::jacobi_singular_values(d);
        // Power iteration needs a spectral gap to meet the residual tolerance
        // within the iteration cap; the estimate is accurate either way.
        if (sv.size() < 2 || sv[1] < 0.9 * sv[0]) CHECK(s.converged);
        CHECK(std::abs(s.value - sv[0]) < 1e-8);
    }

    const MatrixXd clean = oracle::random_matrix(rng, 130, 2), adv = oracle::random_matrix(rng, 130, 2);
    const double batched = noise_level_batched(clean, adv, 64);
    const double expect = (spectral_norm(adv.topRows(64) - clean.topRows(64)).value +
                           spectral_norm(adv.middleRows(64, 64) - clean.middleRows(64, 64)).value +
                           spectral_norm(adv.bottomRows(2) - clean.bottomRows(2)).value) /
                          3.0;
    CHECK(batched == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("marginal_overlap: W1 examples") {
    std::mt19937_64 rng(6);
    const MatrixXd a = oracle::random_matrix(rng, 100, 2);
    const auto same = marginal_overlap(a, a);
    CHECK(same[0] == 0.0);
    CHECK(same[1] == 0.0);

    MatrixXd shifted = a;
    shifted.col(0).array() += 0.7;
    shifted.col(1).array() -= 2.0;
    const auto w = marginal_overlap(a, shifted);
    CHECK(w[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(2.0).epsilon(1e-12));

    MatrixXd g0 = oracle::random_matrix(rng, 10000, 1), g1 = oracle::random_matrix(rng, 10000, 1);
    g1.array() += 0.5;
    const double w1 = marginal_overlap(g0, g1)[0];
    CHECK(w1 >= 0.45);
    CHECK(w1 <= 0.55);

    // Unequal sizes are subsampled reproducibly.
    const MatrixXd big = oracle::random_matrix(rng, 300, 2);
    CHECK(marginal_overlap(a, big, 4) == marginal_overlap(a, big, 4));
    CHECK_THROWS_AS(marginal_overlap(a.topRows(29), a), ConfigError);
}

TEST_CASE("mean_nn_distance") {
    MatrixXd ref(3, 1), pts(2, 1);
    ref << 0.0, 1.0, 3.0;
    pts << 0.25, 2.5;
    CHECK(mean_nn_distance(pts, ref, false) == doctest::Approx(0.375));
    CHECK(mean_nn_distance(ref, ref, true) == doctest::Approx((1.0 + 1.0 + 2.0) / 3.0));
    CHECK(mean_nn_distance(ref, ref, false) == 0.0);
}

TEST_CASE("AttackReport: success rate counts constraint-satisfying, clean-correct examples only") {
    AttackReport rep;
    auto add = [&](int y, int clean, int adv, bool in_ball) {
        AttackRecord r;
        r.x = r.x_tilde = r.x_adv = r.x_pgd = VectorXd::Zero(3);
        r.z_clean = r.z_adv = r.z_pgd = VectorXd::Zero(2);
        r.y = y;
        r.y_pred_clean = clean;
        r.y_pred_adv = adv;
        r.y_pred_pgd = clean;
        r.constraint_satisfied = in_ball;
        r.is_adversarial = in_ball && adv != y;
        rep.records.push_back(r);
    };
    add(0, 0, 1, true);   // counted, fooled
    add(0, 0, 0, true);   // counted, not fooled
    add(1, 1, 2, false);  // outside the ball
    add(2, 3, 1, true);   // misclassified before the attack
    rep.compute_aggregates();
    CHECK(rep.asr_denominator == 2);
    CHECK(rep.asr == 0.5);
    CHECK(rep.adversarial_count == 2);
    CHECK(rep.classifier_accuracy == 0.75);
    CHECK(rep.found_rate == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("generate: flagged examples pass an independent re-check") {
    RunConfig cfg = small_config();
    const TrainState st = init_state(cfg, 3);
    std::mt19937_64 rng(7);
    const Classifier clf = random_classifier(rng, 3, 4);
    const ParticleSet tp = st.theta_prime();
    int flagged = 0;
    for (int i = 0; i < 40; ++i) {
        const VectorXd x = oracle::random_vector(rng, 3);
        const int y = i % 4;
        for (double eps : {0.3, 50.0}) {
            const Generated g = generate(tp, st.phi, x, y, clf, eps, 5, 100 + i);
            const double rec = (x - g.x_adv).norm();
            const VectorXd p = mlp_forward(clf.net, g.x_adv);
            Eigen::Index arg;
            p.maxCoeff(&arg);
            CHECK(g.constraint_satisfied == (rec <= eps));
            CHECK(g.is_adversarial == (rec <= eps && int(arg) != y));
            CHECK(g.tries >= 1);
            CHECK(g.tries <= 5);
            flagged += g.is_adversarial;
        }
    }
    CHECK(flagged > 0);
}

TEST_CASE("init_state: reproducible from the seed; perturbing net starts as a copy") {
    RunConfig cfg = small_config();
    const TrainState a = init_state(cfg, 3), b = init_state(cfg, 3);
    CHECK(a.eta.net.flatten() == b.eta.net.flatten());
    CHECK(a.phi.flatten() == b.phi.flatten());
    CHECK(a.codes.codes == b.codes.codes);
    CHECK(a.eta_prime.net.flatten() == a.eta.net.flatten());
    CHECK(a.eta_prime.role == HyperRole::perturbing);
    CHECK(a.delta.isZero(0.0));
    cfg.seed_init = 99;
    CHECK(init_state(cfg, 3).eta.net.flatten() != a.eta.net.flatten());
}

TEST_CASE("inner_training: zero rates leave the state unchanged") {
    RunConfig cfg = small_config();
    TrainState st = init_state(cfg, 3);
    const TrainState before = st;
    cfg.svgd_step = cfg.gbsm_step = cfg.beta = cfg.beta_prime = 0.0;
    const LabeledDataset data = gen_swiss_roll(400, 4, 0.1, 1);
    std::mt19937_64 rng(8);
    inner_training(st, st.theta(), st.theta_prime(), data.rows(data.train).topRows(64), cfg, rng);
    CHECK(st.eta.net.flatten() == before.eta.net.flatten());
    CHECK(st.eta_prime.net.flatten() == before.eta_prime.net.flatten());
    CHECK(st.delta == before.delta);
    CHECK(st.phi.flatten() == before.phi.flatten());
}

TEST_CASE("train: untrained classifier is refused; five-epoch smoke run descends") {
    RunConfig cfg = small_config();
    const LabeledDataset data = gen_swiss_roll(cfg.n, cfg.classes, cfg.noise_sd, cfg.seed_data);
    TrainState st = init_state(cfg, 3);
    std::mt19937_64 rng(1);
    const Classifier raw{Mlpd::glorot(classifier_shape(3, 4), rng), false, 0.0};
    CHECK_THROWS_AS(train(st, data, raw, cfg), ContractError);

    const Classifier clf = train_classifier(data, cfg, cfg.seed_init);
    std::vector<EpochMetrics> seen;
    train(st, data, clf, cfg, [&](const EpochMetrics& m, const TrainState&) { seen.push_back(m); });
    REQUIRE(seen.size() == 5);
    for (const auto& m : seen) {
        CHECK(std::isfinite(m.L_rec_clean));
        CHECK(std::isfinite(m.L_rec_adv));
        CHECK(std::isfinite(m.adv_term));
        CHECK(std::isfinite(m.match_loss_eta));
        CHECK(m.delta_norms.size() == std::size_t(cfg.M));
    }
    CHECK(seen.back().L_rec_clean < seen.front().L_rec_clean);
    CHECK(st.epoch == 5);
}

TEST_CASE("train: a non-finite loss names the epoch and batch") {
    RunConfig cfg = small_config();
    cfg.lr_phi = 1e300;
    const LabeledDataset data = gen_swiss_roll(cfg.n, cfg.classes, cfg.noise_sd, cfg.seed_data);
    cfg.classifier_epochs = 5;
    const Classifier clf = train_classifier(data, cfg, 1);
    TrainState st = init_state(cfg, 3);
    try {
        train(st, data, clf, cfg);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        const std::string what = e.what();
        CHECK(what.find("epoch 0") != std::string::npos);
        CHECK(what.find("batch") != std::string::npos);
    }
}
