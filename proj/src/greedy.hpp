#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>

#include "dataset.hpp"
#include "learner.hpp"
#include "mlp.hpp"
#include "trace.hpp"

namespace dht {

// One-step teaching objective state: learner rate and current/target
// weights. The objective below satisfies
//   ||w - eta*grad - w*||^2 = ||w - w*||^2 + objective
// exactly.
struct GreedyObjectiveParams {
    double eta = 0.001;
    Vector w;
    Vector w_star;
};

double greedy_objective(const FeatureVector& x, const SoftLabel& y,
                        const GreedyObjectiveParams& p, LossKind kind);

struct ImtPick {
    std::size_t index = 0;
    double objective = 0.0;
};

// Exhaustive argmin of the greedy objective over the pool; ties broken by
// lowest index.
ImtPick imt_select(const LabeledDataset& pool, const GreedyObjectiveParams& p, LossKind kind);

struct SynthesisConstraints {
    Vector box_lo, box_hi;  // full example dim; bias coordinate excluded from optimization
    double label_norm_cap = 2.0;
    double label_floor = 1e-4;

    static SynthesisConstraints from_box(const LabeledDataset& pool) {
        SynthesisConstraints c;
        c.box_lo = pool.box_lo;
        c.box_hi = pool.box_hi;
        return c;
    }
};

struct SynthesisOptions {
    AdamConfig adam{0.02, 0.8, 0.999, 1e-8};
    int steps = 300;
    double early_stop_tol = 1e-9;
    int early_stop_window = 10;
};

// Extra differentiable loss attached to the synthesis objective (the
// privacy penalty plugs in here). Receives the tape and the full
// synthesized-example node, returns a scalar node.
using ObjectiveExtension = std::function<int(Tape&, int x_node)>;

// Projected Adam on the input: clamp to the box after every step, bias
// pinned; returns the iterate with the lowest objective seen. Early-stops
// once the objective change over the trailing window drops below tol.
FeatureVector dht_synthesize(const SoftLabel& y, const GreedyObjectiveParams& p, LossKind kind,
                             const SynthesisConstraints& c, const SynthesisOptions& opt,
                             const FeatureVector& init,
                             const ObjectiveExtension& extra = nullptr);

// Adam on the two-component label at fixed input; components clamped to
// >= label_floor and the result projected onto the norm ball.
SoftLabel synthesize_label(const FeatureVector& x, const GreedyObjectiveParams& p, LossKind kind,
                           const SynthesisConstraints& c, int steps = 300, double lr = 0.001);

// Same, starting from an explicit label value.
SoftLabel synthesize_label_from(const FeatureVector& x, const GreedyObjectiveParams& p,
                                LossKind kind, const SynthesisConstraints& c, Vector y,
                                int steps = 300, double lr = 0.001);

struct UnachievableBeta : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Finds beta > 0 with grad(beta*x, y) = target * grad(x, y). LSR has a
// closed form (smallest positive root); LR is solved by scan + bisection
// on (0, beta_max]. Throws UnachievableBeta when no positive solution
// exists in range.
double solve_beta(const FeatureVector& x, const SoftLabel& y, const LinearLearner& learner,
                  double target_multiplier, double beta_max);

// w <- w - eta * c1 * ||w - w*|| * grad(x, y | w); the update analyzed by
// the exponential-teachability bound.
void scaled_gradient_step(LinearLearner& learner, const FeatureVector& x, const SoftLabel& y,
                          double c1, const Vector& w_star);

// What a teacher feeds the learner this iteration. grad_multiplier scales
// the gradient (1 for plain examples; the scaling teacher uses
// c1*||w - w*||).
struct TeachingAction {
    FeatureVector x;
    SoftLabel y;
    double grad_multiplier = 1.0;
};

class Teacher {
public:
    virtual ~Teacher() = default;
    virtual TeachingAction propose(const LinearLearner& learner, int iter, Rng& rng) = 0;
};

// Uniform pool stream, reshuffled each epoch: identical to plain SGD on
// shuffled data.
class RandomTeacher : public Teacher {
public:
    explicit RandomTeacher(const LabeledDataset& pool) : pool_(&pool) {}
    TeachingAction propose(const LinearLearner& learner, int iter, Rng& rng) override;

private:
    const LabeledDataset* pool_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

class ImtTeacher : public Teacher {
public:
    ImtTeacher(const LabeledDataset& pool, Vector w_star, bool label_synth = false,
               SynthesisConstraints constraints = {}, int label_steps = 300,
               double label_lr = 0.001)
        : pool_(&pool), w_star_(std::move(w_star)), label_synth_(label_synth),
          constraints_(std::move(constraints)), label_steps_(label_steps), label_lr_(label_lr) {}
    TeachingAction propose(const LinearLearner& learner, int iter, Rng& rng) override;

private:
    const LabeledDataset* pool_;
    Vector w_star_;
    bool label_synth_;
    SynthesisConstraints constraints_;
    int label_steps_;
    double label_lr_;
};

// Random pool stream with label synthesis on top (the SGD+Label baseline).
class RandomLabelTeacher : public Teacher {
public:
    RandomLabelTeacher(const LabeledDataset& pool, Vector w_star, SynthesisConstraints constraints,
                       int label_steps = 300, double label_lr = 0.001)
        : inner_(pool), w_star_(std::move(w_star)), constraints_(std::move(constraints)),
          label_steps_(label_steps), label_lr_(label_lr) {}
    TeachingAction propose(const LinearLearner& learner, int iter, Rng& rng) override;

private:
    RandomTeacher inner_;
    Vector w_star_;
    SynthesisConstraints constraints_;
    int label_steps_;
    double label_lr_;
};

class DhtGreedyTeacher : public Teacher {
public:
    DhtGreedyTeacher(const LabeledDataset& pool, Vector w_star, SynthesisConstraints constraints,
                     SynthesisOptions options = {}, bool label_synth = false,
                     ObjectiveExtension extra = nullptr, int label_steps = 300,
                     double label_lr = 0.001)
        : pool_(&pool), w_star_(std::move(w_star)), constraints_(std::move(constraints)),
          options_(options), label_synth_(label_synth), extra_(std::move(extra)),
          label_steps_(label_steps), label_lr_(label_lr) {
        for (std::size_t i = 0; i < pool.examples.size(); ++i)
            (pool.examples[i].second.scalar() >= 0.0 ? pos_ : neg_).push_back(i);
        if (pos_.empty() || neg_.empty())
            throw std::invalid_argument("DhtGreedyTeacher: pool must contain both classes");
    }
    TeachingAction propose(const LinearLearner& learner, int iter, Rng& rng) override;

private:
    const LabeledDataset* pool_;
    Vector w_star_;
    SynthesisConstraints constraints_;
    SynthesisOptions options_;
    bool label_synth_;
    ObjectiveExtension extra_;
    int label_steps_;
    double label_lr_;
    std::vector<std::size_t> pos_, neg_;
};

// Realizes the Theorem-1 update directly through the gradient multiplier.
class ScalingTeacher : public Teacher {
public:
    ScalingTeacher(const LabeledDataset& pool, Vector w_star, double c1)
        : pool_(&pool), w_star_(std::move(w_star)), c1_(c1) {}
    TeachingAction propose(const LinearLearner& learner, int iter, Rng& rng) override;

private:
    const LabeledDataset* pool_;
    Vector w_star_;
    double c1_;
};

using EpisodeObserver =
    std::function<void(int iter, const TeachingAction&, const LinearLearner&)>;

// Runs T teaching iterations, logging ||w - w*||^2, train loss and test
// accuracy after every update.
TeachingTrace teach_episode(Teacher& teacher, LinearLearner learner, const LabeledDataset& train,
                            const LabeledDataset& test, const Vector& w_star, int T,
                            std::uint64_t seed, const EpisodeObserver& observer = nullptr);

}  // namespace dht
