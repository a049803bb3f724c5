#include "mixup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dht {

namespace {

Vector softmax(const Vector& z) {
    const double m = *std::max_element(z.begin(), z.end());
    Vector p(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - m);
        total += p[i];
    }
    for (double& v : p)
        v /= total;
    return p;
}

// log softmax(z)[action] as a tape node; the max shift is a constant, which
// leaves both the value and the gradient of log-sum-exp exact.
int log_prob_node(Tape& tape, int logits, int action) {
    auto z = tape.value(logits);
    const double m = *std::max_element(z.begin(), z.end());
    const int m_c = tape.constant_scalar(m);
    const int shifted = tape.sub_scalar(logits, m_c);
    const int lse = tape.add(m_c, tape.log_(tape.sum(tape.exp_(shifted))));
    return tape.sub(tape.slice(logits, action, 1), lse);
}

}  // namespace

Vector MixupPolicy::action_probs(const Vector& state) const {
    if (!discrete)
        throw std::logic_error("action_probs: continuous head");
    return softmax(net.forward(state));
}

double MixupPolicy::continuous_lambda(const Vector& state) const {
    if (discrete)
        throw std::logic_error("continuous_lambda: discrete head");
    const double z = net.forward(state)[0];
    return 1.0 / (1.0 + std::exp(-z));
}

std::pair<FeatureVector, SoftLabel> mixup_compose(const FeatureVector& x1, const SoftLabel& y1,
                                                  const FeatureVector& x2, const SoftLabel& y2,
                                                  double lambda) {
    if (lambda < 0.0 || lambda > 1.0)
        throw std::invalid_argument("mixup_compose: lambda must be in [0, 1]");
    if (x1.values.size() != x2.values.size())
        throw std::invalid_argument("mixup_compose: dimension mismatch");
    FeatureVector x = x1;
    for (std::size_t i = 0; i < x.values.size(); ++i)
        x.values[i] = lambda * x1.values[i] + (1.0 - lambda) * x2.values[i];
    x.pin_bias();
    SoftLabel y;
    y.y[0] = lambda * y1.y[0] + (1.0 - lambda) * y2.y[0];
    y.y[1] = lambda * y1.y[1] + (1.0 - lambda) * y2.y[1];
    return {std::move(x), y};
}

EpisodeLog reinforce_episode(const MixupPolicy& policy, LinearLearner learner,
                             const LabeledDataset& train, const LabeledDataset& val,
                             const MixupEpisodeOptions& opts, Rng& rng, int forced_action) {
    const long total = static_cast<long>(opts.epochs_per_episode) *
                       static_cast<long>(train.examples.size());
    EpisodeLog log;
    log.steps.reserve(total);
    double loss_sum = 0.0;
    double best_val = evaluate(learner, val).mean_loss;

    for (long t = 0; t < total; ++t) {
        if (t > 0 && t % opts.best_val_refresh == 0)
            best_val = std::min(best_val, evaluate(learner, val).mean_loss);
        RlState state;
        state.iteration_frac = static_cast<double>(t) / static_cast<double>(total);
        state.avg_train_loss = t == 0 ? 0.0 : loss_sum / static_cast<double>(t);
        state.best_val_loss = best_val;

        const auto& [x1, y1] = train.examples[rng.choice(train.examples.size())];
        const auto& [x2, y2] = train.examples[rng.choice(train.examples.size())];

        int action = forced_action;
        double log_prob = 0.0;
        if (action < 0) {
            const Vector probs = policy.action_probs(state.to_vector());
            const double u = rng.uniform();
            double acc = 0.0;
            action = static_cast<int>(probs.size()) - 1;
            for (std::size_t a = 0; a < probs.size(); ++a) {
                acc += probs[a];
                if (u < acc) {
                    action = static_cast<int>(a);
                    break;
                }
            }
            log_prob = std::log(std::max(probs[action], 1e-300));
        }

        const auto [xm, ym] = mixup_compose(x1, y1, x2, y2, MixupPolicy::kActions[action]);
        loss_sum += learner.loss(xm, ym);
        learner.sgd_update(xm, ym);
        log.steps.push_back({state, action, log_prob});
    }
    log.mean_train_loss = total > 0 ? loss_sum / static_cast<double>(total) : 0.0;
    log.reward = evaluate(learner, val).accuracy;
    return log;
}

void reinforce_update(MixupPolicy& policy, AdamState& opt, const std::vector<EpisodeLog>& logs,
                      double& baseline, double baseline_decay) {
    if (logs.empty())
        throw std::invalid_argument("reinforce_update: no episodes");
    Tape tape;
    const auto params = policy.net.register_params(tape);
    int objective = tape.constant_scalar(0.0);
    for (const EpisodeLog& log : logs) {
        const double advantage = log.reward - baseline;
        if (advantage == 0.0)
            continue;
        for (const EpisodeStep& step : log.steps) {
            const int logits =
                policy.net.forward_tape(tape, params, tape.constant(step.state.to_vector()));
            const int lp = log_prob_node(tape, logits, step.action);
            // Gradient ascent on log-prob * advantage = descent on the negation.
            objective = tape.add(objective, tape.scale(lp, -advantage));
        }
    }
    const int loss = tape.scale(objective, 1.0 / static_cast<double>(logs.size()));
    tape.backward(loss);
    Vector flat = policy.net.flatten_params();
    opt.step(flat, policy.net.collect_grad(tape, params));
    policy.net.set_params(flat);

    double mean_reward = 0.0;
    for (const EpisodeLog& log : logs)
        mean_reward += log.reward;
    mean_reward /= static_cast<double>(logs.size());
    baseline = baseline_decay * baseline + (1.0 - baseline_decay) * mean_reward;
}

MixupUnrollGraph build_mixup_unroll_graph(const MixupPolicy& policy, const LinearLearner& learner0,
                                          const LabeledDataset& train, const LabeledDataset& val,
                                          const UnrollConfig& cfg, Rng& rng) {
    if (policy.discrete)
        throw std::invalid_argument("mixup_unrolled_update: needs the continuous head");
    MixupUnrollGraph g;
    Tape& tape = g.tape;
    g.params = policy.net.register_params(tape);
    const auto& params = g.params;
    int w_node = tape.constant(learner0.w);
    const double init_val_loss = evaluate(learner0, val).mean_loss;

    double loss_sum = 0.0;
    for (int i = 0; i < cfg.v; ++i) {
        const auto& [x1, y1] = train.examples[rng.choice(train.examples.size())];
        const auto& [x2, y2] = train.examples[rng.choice(train.examples.size())];

        RlState state;
        state.iteration_frac = static_cast<double>(i) / static_cast<double>(cfg.v);
        state.avg_train_loss = i == 0 ? 0.0 : loss_sum / static_cast<double>(i);
        state.best_val_loss = init_val_loss;

        const int lam =
            tape.sigmoid(policy.net.forward_tape(tape, params, tape.constant(state.to_vector())));
        const int one_minus = tape.sub(tape.constant_scalar(1.0), lam);
        const int x_m = tape.add(tape.smul(lam, tape.constant(x1.values)),
                                 tape.smul(one_minus, tape.constant(x2.values)));
        const int y_m = tape.add(tape.smul(lam, tape.constant(Vector{y1.y[0], y1.y[1]})),
                                 tape.smul(one_minus, tape.constant(Vector{y2.y[0], y2.y[1]})));

        // First-order step: the weights inside the per-step gradient are
        // detached, so gradients reach theta only through (x~, y~).
        auto wspan = tape.value(w_node);
        const Vector w_now(wspan.begin(), wspan.end());
        const int w_detached = tape.constant(w_now);
        const int s = tape.dot(w_detached, x_m);
        const int gm = gamma_node(tape, learner0.loss_kind, s, y_m);
        w_node = tape.sub(w_node, tape.scale(tape.smul(gm, x_m), learner0.eta));

        LinearLearner probe = learner0;
        probe.w = w_now;
        loss_sum += probe.loss(x1, y1);
    }

    int val_sum = tape.constant_scalar(0.0);
    for (const auto& [xv, yv] : val.examples) {
        const int sv = tape.dot(w_node, tape.constant(xv.values));
        val_sum = tape.add(val_sum,
                           loss_node(tape, learner0.loss_kind, sv,
                                     tape.constant(Vector{yv.y[0], yv.y[1]})));
    }
    g.outer_node = tape.scale(val_sum, 1.0 / static_cast<double>(val.examples.size()));
    return g;
}

double mixup_unrolled_update(MixupPolicy& policy, AdamState& opt, const LinearLearner& learner0,
                             const LabeledDataset& train, const LabeledDataset& val,
                             const UnrollConfig& cfg, Rng& rng) {
    MixupUnrollGraph g = build_mixup_unroll_graph(policy, learner0, train, val, cfg, rng);
    const double outer_val = g.tape.scalar(g.outer_node);
    if (!std::isfinite(outer_val))
        throw std::runtime_error("mixup unrolled update: non-finite outer loss");
    g.tape.backward(g.outer_node);
    Vector flat = policy.net.flatten_params();
    opt.step(flat, policy.net.collect_grad(g.tape, g.params));
    policy.net.set_params(flat);
    return outer_val;
}

MixupPolicy train_mixup_policy_pg(const LinearLearner& learner0, const LabeledDataset& train,
                                  const LabeledDataset& val, const MixupPgOptions& opts,
                                  std::uint64_t seed, std::vector<EpisodeLog>* episode_log) {
    Rng rng(Rng::derive_seed(seed, "mixup_pg"));
    MixupPolicy policy;
    std::vector<int> dims{3};
    dims.insert(dims.end(), opts.hidden.begin(), opts.hidden.end());
    dims.push_back(3);
    policy.net = TinyMlp(dims, Activation::Relu, opts.dropout, rng);
    policy.discrete = true;

    AdamState opt(policy.net.param_count(), opts.policy_opt);
    double baseline = 0.0;
    bool baseline_primed = false;
    for (int e = 0; e < opts.episodes; ++e) {
        std::vector<EpisodeLog> logs;
        logs.push_back(reinforce_episode(policy, learner0, train, val, opts.episode, rng));
        if (!baseline_primed) {
            // Seed the moving average so the first advantages are centered.
            baseline = logs.front().reward;
            baseline_primed = true;
        }
        reinforce_update(policy, opt, logs, baseline, opts.baseline_decay);
        if (episode_log)
            episode_log->push_back(std::move(logs.front()));
    }
    return policy;
}

}  // namespace dht
