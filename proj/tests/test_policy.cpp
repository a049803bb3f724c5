#include <doctest.h>

#include <cmath>

#include "dataset.hpp"
#include "fd.hpp"
#include "policy.hpp"

using namespace dht;

namespace {

LabeledDataset tiny_pool(std::uint64_t seed, int n = 40) {
    return gen_halfmoon(n, 0.2, seed).lifted();
}

TransformPolicy make_policy(PolicyLayout layout, const LabeledDataset& pool,
                            const std::vector<int>& hidden, Rng& rng) {
    TransformPolicy policy;
    policy.layout = layout;
    const int data_dim = pool.examples.front().first.free_dim();
    std::vector<int> dims{TransformPolicy::input_dim(layout, pool.dim, data_dim)};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(data_dim);
    policy.net = TinyMlp(dims, Activation::Relu, 0.0, rng);
    return policy;
}

Vector random_vec(Rng& rng, int n) {
    Vector v(n);
    for (double& x : v)
        x = rng.normal();
    return v;
}

}  // namespace

TEST_CASE("unrolled outer gradient matches finite differences (v=1, alpha=0)") {
    Rng rng(3);
    const LabeledDataset pool = tiny_pool(1, 30);
    TransformPolicy policy = make_policy(PolicyLayout::Omniscient, pool, {}, rng);
    const Vector w0 = random_vec(rng, 3);
    const Vector w_star = random_vec(rng, 3);
    UnrollConfig cfg;
    cfg.v = 1;
    cfg.alpha = 0.0;

    auto outer_value = [&](const Vector& flat) {
        TransformPolicy probe = policy;
        probe.net.set_params(flat);
        Rng sample_rng(77);
        UnrollGraph g = build_unroll_graph(probe, w0, 0.05, LossKind::LR, pool, w_star, cfg,
                                           sample_rng);
        return g.tape.scalar(g.outer_node);
    };

    Rng sample_rng(77);
    UnrollGraph g =
        build_unroll_graph(policy, w0, 0.05, LossKind::LR, pool, w_star, cfg, sample_rng);
    g.tape.backward(g.outer_node);
    const Vector grad = policy.net.collect_grad(g.tape, g.params);
    const Vector fd = testing::fd_grad(outer_value, policy.net.flatten_params(), 1e-6);
    CHECK(testing::rel_err(grad, fd) <= 1e-4);
}

TEST_CASE("unrolled gradients match finite differences up to v=3") {
    Rng rng(5);
    const LabeledDataset pool = tiny_pool(2, 30);
    TransformPolicy policy = make_policy(PolicyLayout::Omniscient, pool, {4}, rng);
    REQUIRE(policy.net.param_count() <= 50);
    const Vector w0 = random_vec(rng, 3);
    const Vector w_star = random_vec(rng, 3);
    for (int v : {2, 3}) {
        UnrollConfig cfg;
        cfg.v = v;
        cfg.alpha = 1.0;
        // The stop-gradient objective treats the auxiliary-term weights as
        // constants; freeze them from the base rollout so the oracle
        // differentiates exactly the same function as the tape.
        Rng base_rng(123);
        UnrollGraph base =
            build_unroll_graph(policy, w0, 0.05, LossKind::LR, pool, w_star, cfg, base_rng);
        std::vector<Vector> frozen;
        for (int sg : base.sg_w)
            frozen.emplace_back(base.tape.value(sg).begin(), base.tape.value(sg).end());

        auto outer_value = [&](const Vector& flat) {
            TransformPolicy probe = policy;
            probe.net.set_params(flat);
            Rng sample_rng(123);
            UnrollGraph g = build_unroll_graph(probe, w0, 0.05, LossKind::LR, pool, w_star, cfg,
                                               sample_rng, nullptr, &frozen);
            return g.tape.scalar(g.outer_node);
        };
        base.tape.backward(base.outer_node);
        const Vector grad = policy.net.collect_grad(base.tape, base.params);
        CHECK(testing::rel_err(grad, testing::fd_grad(outer_value, policy.net.flatten_params(),
                                                      1e-6)) <= 1e-4);
    }
}

TEST_CASE("identity policy with alpha=0 reproduces the plain-SGD distance") {
    const LabeledDataset pool = tiny_pool(3, 24);
    Rng rng(7);
    TransformPolicy policy = make_policy(PolicyLayout::Omniscient, pool, {}, rng);
    // Single linear layer copying the x block of concat(w, w - w*, x, y).
    Matrix w(2, policy.net.input_dim());
    w(0, 6) = 1.0;
    w(1, 7) = 1.0;
    policy.net.weight(0) = w;
    policy.net.bias(0) = Vector(2, 0.0);

    const Vector w0{0.2, -0.1, 0.05};
    const Vector w_star{1.0, 1.0, -0.5};
    UnrollConfig cfg;
    cfg.v = 12;
    cfg.alpha = 0.0;
    Rng sample_rng(55);
    UnrollGraph g =
        build_unroll_graph(policy, w0, 0.03, LossKind::LR, pool, w_star, cfg, sample_rng);

    LinearLearner manual;
    manual.loss_kind = LossKind::LR;
    manual.eta = 0.03;
    manual.w = w0;
    Rng replay(55);
    for (int i = 0; i < cfg.v; ++i) {
        const auto& [x, y] = pool.examples[replay.choice(pool.examples.size())];
        manual.sgd_update(x, y);
    }
    CHECK(g.tape.scalar(g.outer_node) ==
          doctest::Approx(sqnorm(sub(manual.w, w_star))).epsilon(1e-12));
}

TEST_CASE("auxiliary term sends no gradient into the live learner chain") {
    Rng rng(11);
    const LabeledDataset pool = tiny_pool(4, 20);
    TransformPolicy policy = make_policy(PolicyLayout::Omniscient, pool, {6}, rng);
    const Vector w0 = random_vec(rng, 3);
    const Vector w_star = random_vec(rng, 3);
    UnrollConfig cfg;
    cfg.v = 5;
    cfg.alpha = 1.0;
    Rng sample_rng(9);
    UnrollGraph g =
        build_unroll_graph(policy, w0, 0.05, LossKind::LR, pool, w_star, cfg, sample_rng);

    // Backward from the auxiliary sum alone: every live w node must stay at
    // exactly zero adjoint while the policy parameters still receive signal.
    g.tape.backward(g.aux_sum_node);
    for (int w_node : g.live_w)
        for (double adj : g.tape.adjoint(w_node))
            CHECK(adj == 0.0);
    double policy_grad_norm = 0.0;
    for (double v : policy.net.collect_grad(g.tape, g.params))
        policy_grad_norm += v * v;
    CHECK(policy_grad_norm > 0.0);

    // And with the full outer loss, the live-chain adjoints are identical to
    // a distance-only backward.
    g.tape.backward(g.outer_node);
    std::vector<Vector> adj_outer;
    for (int w_node : g.live_w)
        adj_outer.emplace_back(g.tape.adjoint(w_node).begin(), g.tape.adjoint(w_node).end());
    g.tape.backward(g.dist_node);
    for (std::size_t i = 0; i < g.live_w.size(); ++i) {
        auto adj_dist = g.tape.adjoint(g.live_w[i]);
        for (std::size_t j = 0; j < adj_dist.size(); ++j)
            CHECK(adj_outer[i][j] == adj_dist[j]);
    }
}

TEST_CASE("short policy training already improves on random teaching") {
    const LabeledDataset data = gen_halfmoon(300, 0.2, 21);
    const auto parts = split(data, {0.8, 0.2}, 2);
    const LabeledDataset train = parts[0].lifted(), test = parts[1].lifted();
    const TargetWeights target = fit_target(train, LossKind::LR, {0.1, 20000, 1e-7});

    Rng rng(31);
    TransformPolicy policy = make_policy(PolicyLayout::Omniscient, train, {32, 16}, rng);
    UnrollConfig cfg;
    cfg.v = 10;
    cfg.outer_iters = 150;
    const Vector w0 = random_vec(rng, 3);
    AdamState opt(policy.net.param_count(), cfg.teacher_opt);
    Rng train_rng(41);
    for (int i = 0; i < cfg.outer_iters; ++i)
        unrolled_teacher_update(policy, opt, w0, 0.01, LossKind::LR, train, target.w_star, cfg,
                                train_rng);

    LinearLearner learner;
    learner.loss_kind = LossKind::LR;
    learner.eta = 0.01;
    learner.w = w0;
    TransformPolicyTeacher taught(policy, train, target.w_star);
    RandomTeacher random_teacher(train);
    const TeachingTrace a = teach_episode(taught, learner, train, test, target.w_star, 100, 5);
    const TeachingTrace b =
        teach_episode(random_teacher, learner, train, test, target.w_star, 100, 5);
    CHECK(a.rows.back().w_dist_sq < b.rows.back().w_dist_sq);

    // Synthesized bias coordinate is always exactly 1.
    Rng probe_rng(3);
    for (int i = 0; i < 50; ++i) {
        const TeachingAction act = taught.propose(learner, i, probe_rng);
        CHECK(act.x.values.back() == 1.0);
    }
}

TEST_CASE("black-box graph: identity policy on train==val is ERM descent") {
    const LabeledDataset pool = tiny_pool(6, 24);
    Rng rng(13);
    TransformPolicy policy = make_policy(PolicyLayout::BlackBox, pool, {}, rng);
    Matrix w(2, policy.net.input_dim());
    w(0, 3) = 1.0;  // x block of concat(w, x, y)
    w(1, 4) = 1.0;
    policy.net.weight(0) = w;
    policy.net.bias(0) = Vector(2, 0.0);

    const Vector w0{0.1, 0.1, 0.1};
    UnrollConfig cfg;
    cfg.v = 8;
    Rng sample_rng(71);
    UnrollGraph g = build_blackbox_graph(policy, w0, 0.05, LossKind::LR, pool, pool, cfg,
                                         sample_rng);

    LinearLearner manual;
    manual.loss_kind = LossKind::LR;
    manual.eta = 0.05;
    manual.w = w0;
    Rng replay(71);
    for (int i = 0; i < cfg.v; ++i) {
        const auto& [x, y] = pool.examples[replay.choice(pool.examples.size())];
        manual.sgd_update(x, y);
    }
    CHECK(g.tape.scalar(g.outer_node) ==
          doctest::Approx(evaluate(manual, pool).mean_loss).epsilon(1e-12));
}

TEST_CASE("black-box outer gradient matches finite differences (v=2)") {
    Rng rng(17);
    const LabeledDataset pool = tiny_pool(8, 16);
    TransformPolicy policy = make_policy(PolicyLayout::BlackBox, pool, {4}, rng);
    const Vector w0 = random_vec(rng, 3);
    UnrollConfig cfg;
    cfg.v = 2;
    auto outer_value = [&](const Vector& flat) {
        TransformPolicy probe = policy;
        probe.net.set_params(flat);
        Rng sample_rng(19);
        UnrollGraph g =
            build_blackbox_graph(probe, w0, 0.05, LossKind::LR, pool, pool, cfg, sample_rng);
        return g.tape.scalar(g.outer_node);
    };
    Rng sample_rng(19);
    UnrollGraph g =
        build_blackbox_graph(policy, w0, 0.05, LossKind::LR, pool, pool, cfg, sample_rng);
    g.tape.backward(g.outer_node);
    CHECK(testing::rel_err(policy.net.collect_grad(g.tape, g.params),
                           testing::fd_grad(outer_value, policy.net.flatten_params(), 1e-6)) <=
          1e-4);
}

TEST_CASE("vae pretraining reconstructs better than the variance floor") {
    const LabeledDataset pool = gen_halfmoon(200, 0.2, 41);  // raw 2-D
    VaePretrainOptions opts;
    opts.epochs = 20;
    opts.enc_hidden = {32, 32};
    opts.dec_hidden = {32, 32};
    Rng rng(51);
    const VaeTeacher teacher = pretrain_vae(pool, opts, rng);

    double var = 0.0;
    Vector mean(2, 0.0);
    for (const auto& [x, y] : pool.examples)
        axpy(mean, 1.0 / pool.examples.size(), x.values);
    for (const auto& [x, y] : pool.examples)
        var += sqnorm(sub(x.values, mean)) / pool.examples.size();
    Rng eval_rng(3);
    const double mse = vae_recon_mse(teacher, pool, eval_rng);
    CHECK(mse < var);

    // Decoded prior samples stay within 3x the data bounding box.
    Vector center(2), half(2);
    for (int i = 0; i < 2; ++i) {
        center[i] = 0.5 * (pool.box_lo[i] + pool.box_hi[i]);
        half[i] = 0.5 * (pool.box_hi[i] - pool.box_lo[i]);
    }
    Rng prior_rng(7);
    for (int i = 0; i < 200; ++i) {
        Vector u(teacher.latent_dim);
        for (double& v : u)
            v = prior_rng.normal();
        const SoftLabel y = SoftLabel::from_sign(prior_rng.bernoulli(0.5) ? 1 : -1);
        const FeatureVector x = decode_example(teacher, u, y, false);
        for (int d = 0; d < 2; ++d)
            CHECK(std::abs(x.values[d] - center[d]) <= 3.0 * half[d] + 1e-9);
    }
}

TEST_CASE("vae teacher: zero policy output gives zero KL and a frozen decoder") {
    const LabeledDataset pool = tiny_pool(9, 30);
    VaePretrainOptions opts;
    opts.epochs = 3;
    opts.enc_hidden = {16};
    opts.dec_hidden = {16};
    Rng rng(61);
    LabeledDataset raw = gen_halfmoon(60, 0.2, 9);
    VaeTeacher teacher = pretrain_vae(raw, opts, rng);

    const int data_dim = 2;
    std::vector<int> dims{2 * 3 + data_dim + 1, 8, teacher.latent_dim};
    teacher.policy = TinyMlp(dims, Activation::Relu, 0.0, rng);
    Vector zeros(teacher.policy.param_count(), 0.0);
    teacher.policy.set_params(zeros);

    const Vector dec_before = teacher.decoder.flatten_params();
    AdamState opt(teacher.policy.param_count(), {0.002, 0.9, 0.999, 1e-8});
    UnrollConfig cfg;
    cfg.v = 4;
    Rng urng(71);
    const VaeUpdateResult res = vae_teacher_update(teacher, opt, Vector{0.1, 0.2, 0.3}, 0.05,
                                                   LossKind::LR, pool, Vector{1.0, -1.0, 0.5},
                                                   cfg, urng);
    CHECK(res.kl_term == 0.0);
    const Vector dec_after = teacher.decoder.flatten_params();
    CHECK(dec_before == dec_after);

    // More updates, still bit-identical decoder weights.
    for (int i = 0; i < 10; ++i)
        vae_teacher_update(teacher, opt, Vector{0.1, 0.2, 0.3}, 0.05, LossKind::LR, pool,
                           Vector{1.0, -1.0, 0.5}, cfg, urng);
    CHECK(teacher.decoder.flatten_params() == dec_before);
}

TEST_CASE("frozen generator lets the discriminator drive its loss down") {
    const LabeledDataset pool = tiny_pool(10, 40);
    Rng rng(81);
    GanTeacher teacher;
    teacher.noise_dim = 2;
    teacher.generator = TinyMlp({2 + 2 * 3 + 1, 8, 2}, Activation::Relu, 0.0, rng);
    // Push generated points far from the data so the classes separate.
    teacher.generator.bias(1) = Vector{25.0, 25.0};
    teacher.discriminator = TinyMlp({4, 8, 1}, Activation::LeakyRelu, 0.0, rng);
    AdamState gen_opt(teacher.generator.param_count(), {0.0, 0.9, 0.999, 1e-8});  // frozen
    AdamState disc_opt(teacher.discriminator.param_count(), {0.01, 0.9, 0.999, 1e-8});
    UnrollConfig cfg;
    cfg.v = 16;
    Rng grng(91);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 60; ++i) {
        const GanUpdateResult r = gan_teacher_update(teacher, gen_opt, disc_opt, Vector{0.1, 0.1, 0.1},
                                                     0.05, LossKind::LR, pool,
                                                     Vector{1.0, -1.0, 0.5}, cfg, grng);
        if (i == 0)
            first = r.d_loss;
        last = r.d_loss;
    }
    CHECK(last < first);
    CHECK(last < 0.2);  // - log D(x) - log(1 - D(x~)) approaches 0 when D is sharp
}

TEST_CASE("privacy penalty: hinge geometry and the set extension") {
    const LabeledDataset pool = gen_halfmoon(80, 0.2, 33);
    const PrivacyConstraint pc = make_privacy_constraint(pool, 10, 0.3, 2.5, 3);

    const FeatureVector& x = pool.examples[0].first;
    CHECK(privacy_penalty(x, x, pc) == doctest::Approx(2.5 * 0.3).epsilon(1e-12));

    FeatureVector far(Vector{500.0, -400.0});
    CHECK(privacy_penalty(far, x, pc) == 0.0);

    // Tape extension equals the manual sum of pairwise hinges.
    const ObjectiveExtension ext = make_privacy_extension(pc);
    Tape tape;
    const int x_node = tape.leaf(pool.examples[5].first.values);
    const int pen = ext(tape, x_node);
    double manual = 0.0;
    for (const FeatureVector& p : pc.privacy_set)
        manual += privacy_penalty(pool.examples[5].first, p, pc);
    CHECK(tape.scalar(pen) == doctest::Approx(manual).epsilon(1e-9));
}
