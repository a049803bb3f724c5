#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dataset.hpp"
#include "greedy.hpp"
#include "policy.hpp"

namespace dht {

// Learner-conditioned mixup coefficients. The discrete head is a
// classifier over {0, 0.5, 1}; the continuous head emits a sigmoid scalar.
struct MixupPolicy {
    static constexpr std::array<double, 3> kActions{0.0, 0.5, 1.0};

    TinyMlp net;  // 3 -> 128 -> (3 or 1)
    bool discrete = true;

    Vector action_probs(const Vector& state) const;
    double continuous_lambda(const Vector& state) const;
};

// Teaching state visible to the policy: normalized iteration, running
// average training loss, best validation loss so far (refreshed every
// `best_val_refresh` learner iterations).
struct RlState {
    double iteration_frac = 0.0;
    double avg_train_loss = 0.0;
    double best_val_loss = 0.0;
    Vector to_vector() const { return {iteration_frac, avg_train_loss, best_val_loss}; }
};

struct EpisodeStep {
    RlState state;
    int action = 0;
    double log_prob = 0.0;
};

struct EpisodeLog {
    std::vector<EpisodeStep> steps;
    double reward = 0.0;  // terminal validation accuracy
    double mean_train_loss = 0.0;
};

// x~ = lambda x1 + (1 - lambda) x2, label mixed the same way; bias
// coordinate re-pinned. lambda outside [0, 1] is rejected.
std::pair<FeatureVector, SoftLabel> mixup_compose(const FeatureVector& x1, const SoftLabel& y1,
                                                  const FeatureVector& x2, const SoftLabel& y2,
                                                  double lambda);

struct MixupEpisodeOptions {
    int epochs_per_episode = 2;
    int best_val_refresh = 100;
};

// Trains the learner through one episode, sampling the mixup coefficient
// per step from the policy (or a forced constant action when
// forced_action >= 0). Reward is the final validation accuracy.
EpisodeLog reinforce_episode(const MixupPolicy& policy, LinearLearner learner,
                             const LabeledDataset& train, const LabeledDataset& val,
                             const MixupEpisodeOptions& opts, Rng& rng, int forced_action = -1);

// Ascends sum_t grad log pi(a_t|s_t) * (R - baseline); the baseline is an
// exponential moving average of episode rewards (decay 0.9).
void reinforce_update(MixupPolicy& policy, AdamState& opt, const std::vector<EpisodeLog>& logs,
                      double& baseline, double baseline_decay = 0.9);

struct MixupUnrollGraph {
    Tape tape;
    TinyMlp::TapeParams params;
    int outer_node = -1;
};

// First-order unrolled mixup objective: v learner steps with the step
// weights treated as constants inside each per-step gradient; outer loss
// is the validation loss at w^v.
MixupUnrollGraph build_mixup_unroll_graph(const MixupPolicy& policy, const LinearLearner& learner0,
                                          const LabeledDataset& train, const LabeledDataset& val,
                                          const UnrollConfig& cfg, Rng& rng);

double mixup_unrolled_update(MixupPolicy& policy, AdamState& opt, const LinearLearner& learner0,
                             const LabeledDataset& train, const LabeledDataset& val,
                             const UnrollConfig& cfg, Rng& rng);

struct MixupPgOptions {
    int episodes = 300;
    MixupEpisodeOptions episode;
    AdamConfig policy_opt{0.002, 0.9, 0.999, 1e-8};
    double baseline_decay = 0.9;
    std::vector<int> hidden{128};
    double dropout = 0.1;
};

// Full policy-gradient training loop; per-episode rewards are appended to
// reward_log when provided.
MixupPolicy train_mixup_policy_pg(const LinearLearner& learner0, const LabeledDataset& train,
                                  const LabeledDataset& val, const MixupPgOptions& opts,
                                  std::uint64_t seed, std::vector<EpisodeLog>* episode_log = nullptr);

}  // namespace dht
