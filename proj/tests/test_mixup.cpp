#include <doctest.h>

#include <cmath>

#include "fd.hpp"
#include "mixup.hpp"

using namespace dht;

namespace {

// The toy mixup task: overlapping blobs plus label noise, split
// train/val. Constant-lambda sweeps establish the ground truth ordering
// before any policy training.
struct MixupTask {
    LabeledDataset train, val;
    LinearLearner learner0;
};

MixupTask make_task(std::uint64_t seed) {
    LabeledDataset data = gen_blobs(800, 24, 2.0, seed);
    apply_label_noise(data, 0.2, Rng::derive_seed(seed, "noise"));
    auto parts = split(data, {0.75, 0.25}, seed + 5);
    MixupTask task;
    task.train = parts[0].lifted();
    task.val = parts[1].lifted();
    task.learner0.loss_kind = LossKind::LR;
    task.learner0.eta = 0.05;
    Rng rng(Rng::derive_seed(seed, "w0"));
    task.learner0.w.resize(25);
    for (double& v : task.learner0.w)
        v = rng.normal(0.0, 0.1);
    return task;
}

}  // namespace

TEST_CASE("mixup_compose identities") {
    const FeatureVector x1(Vector{1.0, 2.0, 1.0}, true);
    const FeatureVector x2(Vector{-3.0, 4.0, 1.0}, true);
    const SoftLabel a = SoftLabel::from_sign(+1), b = SoftLabel::from_sign(-1);

    const auto [xe, ye] = mixup_compose(x1, a, x2, b, 1.0);
    CHECK(xe.values == x1.values);
    CHECK(ye.y[0] == 1.0);
    CHECK(ye.y[1] == 0.0);

    const auto [xm, ym] = mixup_compose(x1, a, x2, b, 0.5);
    CHECK(ym.y[0] == 0.5);
    CHECK(ym.y[1] == 0.5);
    CHECK(xm.values[0] == doctest::Approx(-1.0));
    CHECK(xm.values[2] == 1.0);  // bias re-pinned

    for (double lam : {0.0, 0.3, 0.8, 1.0}) {
        const auto [xs, ys] = mixup_compose(x1, a, x1, a, lam);
        CHECK(xs.values == x1.values);
    }
    CHECK_THROWS_AS(mixup_compose(x1, a, x2, b, 1.5), std::invalid_argument);
}

TEST_CASE("mixed labels stay nonnegative with conserved mass") {
    Rng rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
        SoftLabel a, b;
        a.y[0] = rng.uniform();
        a.y[1] = rng.uniform();
        b.y[0] = rng.uniform();
        b.y[1] = rng.uniform();
        const double lam = rng.uniform();
        const FeatureVector x(Vector{rng.normal(), rng.normal()});
        const auto [xm, ym] = mixup_compose(x, a, x, b, lam);
        CHECK(ym.y[0] >= 0.0);
        CHECK(ym.y[1] >= 0.0);
        const double want = lam * (a.y[0] + a.y[1]) + (1.0 - lam) * (b.y[0] + b.y[1]);
        CHECK(ym.y[0] + ym.y[1] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("forced lambda=1 episode equals the plain ERM stream") {
    const MixupTask task = make_task(3);
    MixupPolicy dummy;
    Rng rng(5);
    dummy.net = TinyMlp({3, 4, 3}, Activation::Relu, 0.0, rng);
    MixupEpisodeOptions opts;
    opts.epochs_per_episode = 1;

    Rng episode_rng(17);
    const EpisodeLog log =
        reinforce_episode(dummy, task.learner0, task.train, task.val, opts, episode_rng, 2);

    LinearLearner manual = task.learner0;
    Rng replay(17);
    const long total = static_cast<long>(task.train.examples.size());
    long val_evals = 0;
    for (long t = 0; t < total; ++t) {
        if (t > 0 && t % opts.best_val_refresh == 0)
            ++val_evals;  // the episode path consumes no rng here, just track
        const auto& [x1, y1] = task.train.examples[replay.choice(task.train.examples.size())];
        const auto& [x2, y2] = task.train.examples[replay.choice(task.train.examples.size())];
        manual.sgd_update(x1, y1);
    }
    CHECK(log.reward == doctest::Approx(evaluate(manual, task.val).accuracy).epsilon(1e-15));
}

TEST_CASE("episodes are deterministic in the seed") {
    const MixupTask task = make_task(4);
    MixupPolicy policy;
    Rng rng(6);
    policy.net = TinyMlp({3, 16, 3}, Activation::Relu, 0.0, rng);
    MixupEpisodeOptions opts;
    opts.epochs_per_episode = 1;
    Rng r1(9), r2(9);
    const EpisodeLog a = reinforce_episode(policy, task.learner0, task.train, task.val, opts, r1);
    const EpisodeLog b = reinforce_episode(policy, task.learner0, task.train, task.val, opts, r2);
    REQUIRE(a.steps.size() == b.steps.size());
    CHECK(a.reward == b.reward);
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        CHECK(a.steps[i].action == b.steps[i].action);
        CHECK(a.steps[i].log_prob == b.steps[i].log_prob);
    }
}

TEST_CASE("constant-policy brute force: mixing at 0.5 wins on the noisy task") {
    double mean_reward[3] = {0.0, 0.0, 0.0};
    const int seeds = 10;
    for (int action = 0; action < 3; ++action) {
        for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
            const MixupTask task = make_task(seed);
            MixupPolicy dummy;
            Rng rng(1);
            dummy.net = TinyMlp({3, 4, 3}, Activation::Relu, 0.0, rng);
            MixupEpisodeOptions opts;
            Rng episode_rng(Rng::derive_seed(seed, "episode"));
            mean_reward[action] += reinforce_episode(dummy, task.learner0, task.train, task.val,
                                                     opts, episode_rng, action)
                                       .reward /
                                   seeds;
        }
    }
    CHECK(mean_reward[1] > mean_reward[0]);
    CHECK(mean_reward[1] > mean_reward[2]);
}

TEST_CASE("reinforce_update: zero advantage leaves the policy untouched") {
    MixupPolicy policy;
    Rng rng(8);
    policy.net = TinyMlp({3, 8, 3}, Activation::Relu, 0.0, rng);
    const Vector before = policy.net.flatten_params();
    EpisodeLog log;
    log.reward = 0.7;
    log.steps.push_back({RlState{0.1, 0.5, 0.4}, 1, -1.0});
    AdamState opt(policy.net.param_count(), {0.01, 0.9, 0.999, 1e-8});
    double baseline = 0.7;  // R == baseline for every episode
    reinforce_update(policy, opt, {log}, baseline);
    CHECK(policy.net.flatten_params() == before);
}

TEST_CASE("bandit sanity: the rewarded action saturates") {
    MixupPolicy policy;
    Rng rng(10);
    policy.net = TinyMlp({3, 8, 3}, Activation::Relu, 0.0, rng);
    AdamState opt(policy.net.param_count(), {0.01, 0.9, 0.999, 1e-8});
    const RlState state{0.5, 0.5, 0.5};
    double baseline = 0.0;
    Rng sample_rng(11);
    for (int update = 0; update < 500; ++update) {
        const Vector probs = policy.action_probs(state.to_vector());
        const double u = sample_rng.uniform();
        int action = 2;
        double acc = 0.0;
        for (int a = 0; a < 3; ++a) {
            acc += probs[a];
            if (u < acc) {
                action = a;
                break;
            }
        }
        EpisodeLog log;
        log.steps.push_back({state, action, std::log(probs[action])});
        log.reward = action == 1 ? 1.0 : 0.0;
        reinforce_update(policy, opt, {log}, baseline);
    }
    CHECK(policy.action_probs(state.to_vector())[1] >= 0.95);
}

TEST_CASE("log-softmax policy gradient matches finite differences") {
    MixupPolicy policy;
    Rng rng(12);
    policy.net = TinyMlp({3, 8, 3}, Activation::Relu, 0.0, rng);
    const Vector state{0.3, 1.2, -0.4};
    const int action = 2;

    auto f = [&](const Vector& flat) {
        MixupPolicy probe = policy;
        probe.net.set_params(flat);
        return std::log(probe.action_probs(state)[action]);
    };

    // Same computation through the tape as reinforce_update performs.
    Tape tape;
    const auto params = policy.net.register_params(tape);
    const int logits = policy.net.forward_tape(tape, params, tape.constant(state));
    auto z = tape.value(logits);
    const double m = *std::max_element(z.begin(), z.end());
    const int m_c = tape.constant_scalar(m);
    const int lse = tape.add(m_c, tape.log_(tape.sum(tape.exp_(tape.sub_scalar(logits, m_c)))));
    const int lp = tape.sub(tape.slice(logits, action, 1), lse);
    tape.backward(lp);
    CHECK(testing::rel_err(policy.net.collect_grad(tape, params),
                           testing::fd_grad(f, policy.net.flatten_params(), 1e-6)) <= 1e-5);
}

TEST_CASE("score function has zero mean under the policy") {
    MixupPolicy policy;
    Rng rng(14);
    policy.net = TinyMlp({3, 8, 3}, Activation::Relu, 0.0, rng);
    const Vector state{0.2, 0.4, 0.9};
    const Vector probs = policy.action_probs(state);
    // grad_logits log pi(a) = onehot(a) - p; its mean under a ~ pi is 0.
    Vector mean(3, 0.0);
    const int n = 10000;
    Rng sample_rng(15);
    for (int i = 0; i < n; ++i) {
        const double u = sample_rng.uniform();
        int action = 2;
        double acc = 0.0;
        for (int a = 0; a < 3; ++a) {
            acc += probs[a];
            if (u < acc) {
                action = a;
                break;
            }
        }
        for (int a = 0; a < 3; ++a)
            mean[a] += ((a == action ? 1.0 : 0.0) - probs[a]) / n;
    }
    for (int a = 0; a < 3; ++a) {
        const double stderr_a = std::sqrt(probs[a] * (1.0 - probs[a]) / n);
        CHECK(std::abs(mean[a]) <= 3.0 * stderr_a + 1e-12);
    }
}

TEST_CASE("unrolled mixup: lambda pinned to 1 reduces to the SGD validation loss") {
    const MixupTask task = make_task(6);
    MixupPolicy policy;
    Rng rng(16);
    policy.net = TinyMlp({3, 1}, Activation::Relu, 0.0, rng);
    policy.discrete = false;
    Vector flat = policy.net.flatten_params();
    std::fill(flat.begin(), flat.end(), 0.0);
    flat.back() = 500.0;  // output bias: sigmoid(500) == 1 in double precision
    policy.net.set_params(flat);

    UnrollConfig cfg;
    cfg.v = 6;
    AdamState opt(policy.net.param_count(), {0.0, 0.9, 0.999, 1e-8});
    Rng u_rng(21);
    const double outer =
        mixup_unrolled_update(policy, opt, task.learner0, task.train, task.val, cfg, u_rng);

    LinearLearner manual = task.learner0;
    Rng replay(21);
    for (int i = 0; i < cfg.v; ++i) {
        const auto& [x1, y1] = task.train.examples[replay.choice(task.train.examples.size())];
        const auto& [x2, y2] = task.train.examples[replay.choice(task.train.examples.size())];
        manual.sgd_update(x1, y1);
    }
    CHECK(outer == doctest::Approx(evaluate(manual, task.val).mean_loss).epsilon(1e-12));
}

TEST_CASE("first-order unrolled gradient matches finite differences at v=1") {
    // At v=1 the first-order objective coincides with the exact one (the
    // only inner weight is the theta-independent w0), so the tape gradient
    // must match plain finite differences of the returned objective.
    const MixupTask task = make_task(7);
    MixupPolicy policy;
    Rng rng(18);
    policy.net = TinyMlp({3, 2, 1}, Activation::Tanh, 0.0, rng);
    policy.discrete = false;
    REQUIRE(policy.net.param_count() <= 12);

    UnrollConfig cfg;
    cfg.v = 1;
    auto f = [&](const Vector& flat) {
        MixupPolicy probe = policy;
        probe.net.set_params(flat);
        Rng u_rng(33);
        MixupUnrollGraph g =
            build_mixup_unroll_graph(probe, task.learner0, task.train, task.val, cfg, u_rng);
        return g.tape.scalar(g.outer_node);
    };
    Rng u_rng(33);
    MixupUnrollGraph g =
        build_mixup_unroll_graph(policy, task.learner0, task.train, task.val, cfg, u_rng);
    g.tape.backward(g.outer_node);
    CHECK(testing::rel_err(policy.net.collect_grad(g.tape, g.params),
                           testing::fd_grad(f, policy.net.flatten_params(), 1e-6)) <= 1e-3);
}
