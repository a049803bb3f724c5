#pragma once

#include <cstdint>
#include <vector>

#include "greedy.hpp"

namespace dht {

enum class PolicyLayout { Omniscient, BlackBox };

// Learner-conditioned data transformation policy. Input layout is
// concat(w, w - w*, x, y) in the omniscient setting and concat(w, x, y)
// without the target in the black-box setting; the output is the data part
// of the teaching example (bias re-pinned afterwards).
struct TransformPolicy {
    TinyMlp net;
    PolicyLayout layout = PolicyLayout::Omniscient;

    static int input_dim(PolicyLayout layout, int w_dim, int data_dim) {
        return (layout == PolicyLayout::Omniscient ? 2 * w_dim : w_dim) + data_dim + 1;
    }

    Vector make_input(const Vector& w, const Vector* w_star, std::span<const double> x_data,
                      double y_scalar) const;
    FeatureVector synthesize(const Vector& w, const Vector* w_star, const FeatureVector& x,
                             const SoftLabel& y) const;
};

struct UnrollConfig {
    int v = 40;
    double alpha = 1.0;
    AdamConfig teacher_opt{0.002, 0.9, 0.999, 1e-8};
    int outer_iters = 1000;
    double kl_weight = 1.0;   // VAE teacher latent penalty
    double adv_weight = 1.0;  // GAN teacher adversarial term
};

// Node bookkeeping of one unrolled graph, kept around so tests can check
// gradient flow (in particular that the auxiliary term sends nothing into
// the live learner-weight chain).
struct UnrollGraph {
    Tape tape;
    TinyMlp::TapeParams params;
    std::vector<int> live_w;    // w^0 .. w^v (w^0 is a constant)
    std::vector<int> sg_w;      // detached leaves feeding the auxiliary term
    int dist_node = -1;
    int aux_sum_node = -1;      // sum over steps, before the alpha weight
    int outer_node = -1;
};

// frozen_sg, when given, pins the detached auxiliary-term weights to the
// supplied values instead of the live rollout values; the finite-difference
// oracle uses this to differentiate the stop-gradient objective exactly.
UnrollGraph build_unroll_graph(const TransformPolicy& policy, const Vector& w0, double eta,
                               LossKind kind, const LabeledDataset& data, const Vector& w_star,
                               const UnrollConfig& cfg, Rng& rng,
                               const ObjectiveExtension& extra = nullptr,
                               const std::vector<Vector>* frozen_sg = nullptr);

// One outer iteration: unroll v learner steps from w0, backprop the outer
// loss, Adam-step the policy. Returns the outer loss. Throws (with the
// iteration index) if the unrolled graph goes non-finite.
double unrolled_teacher_update(TransformPolicy& policy, AdamState& opt, const Vector& w0,
                               double eta, LossKind kind, const LabeledDataset& data,
                               const Vector& w_star, const UnrollConfig& cfg, Rng& rng,
                               const ObjectiveExtension& extra = nullptr);

// Black-box variant: the outer loss is the mean validation loss at w^v and
// the policy never sees w*.
UnrollGraph build_blackbox_graph(const TransformPolicy& policy, const Vector& w0, double eta,
                                 LossKind kind, const LabeledDataset& train,
                                 const LabeledDataset& val, const UnrollConfig& cfg, Rng& rng);
double blackbox_unrolled_update(TransformPolicy& policy, AdamState& opt, const Vector& w0,
                                double eta, LossKind kind, const LabeledDataset& train,
                                const LabeledDataset& val, const UnrollConfig& cfg, Rng& rng);

// VAE-based teacher: frozen pretrained decoder, policy emits latent codes.
struct VaeTeacher {
    TinyMlp encoder;  // (x, y one-hot) -> (mu, logvar)
    TinyMlp decoder;  // (u, y one-hot) -> x, frozen after pretraining
    TinyMlp policy;   // (w, w - w*, x, y) -> u
    int latent_dim = 2;
};

struct VaePretrainOptions {
    int latent_dim = 2;
    int epochs = 30;
    double beta_kl = 1.0;
    int batch = 16;
    double lr = 0.001;
    std::vector<int> enc_hidden{128, 256, 128};
    std::vector<int> dec_hidden{128, 256, 128};
};

// Maximizes the ELBO with Gaussian reparameterization and squared-error
// reconstruction; the returned decoder is frozen from here on.
VaeTeacher pretrain_vae(const LabeledDataset& data, const VaePretrainOptions& opts, Rng& rng);

double vae_recon_mse(const VaeTeacher& teacher, const LabeledDataset& data, Rng& rng);

struct VaeUpdateResult {
    double outer_loss = 0.0;
    double kl_term = 0.0;
};
VaeUpdateResult vae_teacher_update(VaeTeacher& teacher, AdamState& opt, const Vector& w0,
                                   double eta, LossKind kind, const LabeledDataset& data,
                                   const Vector& w_star, const UnrollConfig& cfg, Rng& rng);

// GAN-based teacher: generator conditioned on noise, learner state and the
// label; discriminator scores (x, y one-hot) pairs.
struct GanTeacher {
    TinyMlp generator;      // (z, w, w - w*, y) -> x
    TinyMlp discriminator;  // (x, y one-hot) -> logit
    int noise_dim = 2;
};

struct GanUpdateResult {
    double outer_loss = 0.0;
    double adv_term = 0.0;
    double d_loss = 0.0;
};
// Alternating update: one discriminator ascent step on real-vs-synthesized
// batches, then one generator step on the full outer loss with a
// non-saturating adversarial term.
GanUpdateResult gan_teacher_update(GanTeacher& teacher, AdamState& gen_opt, AdamState& disc_opt,
                                   const Vector& w0, double eta, LossKind kind,
                                   const LabeledDataset& data, const Vector& w_star,
                                   const UnrollConfig& cfg, Rng& rng);

// Frozen perceptual embedder with a privacy set; synthesized samples are
// pushed at least sqrt(eps) away from every member in embedding space.
struct PrivacyConstraint {
    TinyMlp phi;  // frozen
    std::vector<FeatureVector> privacy_set;
    double eps_priv = 0.1;
    double lambda_priv = 1.0;
};

PrivacyConstraint make_privacy_constraint(const LabeledDataset& data, int set_size, double eps,
                                          double lambda, std::uint64_t seed);

// Hinge penalty for one reference sample, lambda * max(0, eps - ||phi(xt) - phi(x)||^2).
double privacy_penalty(const FeatureVector& x_tilde, const FeatureVector& x,
                       const PrivacyConstraint& pc);

// Differentiable penalty summed over the whole privacy set, pluggable into
// any synthesis objective or outer teaching loss.
ObjectiveExtension make_privacy_extension(const PrivacyConstraint& pc);

// Smallest squared embedding distance from x_tilde to the privacy set.
double min_perceptual_distance(const FeatureVector& x_tilde, const PrivacyConstraint& pc);

// Episode-time teachers backed by trained policies.
class TransformPolicyTeacher : public Teacher {
public:
    TransformPolicyTeacher(const TransformPolicy& policy, const LabeledDataset& pool,
                           Vector w_star)
        : policy_(&policy), pool_(&pool), w_star_(std::move(w_star)) {}
    TeachingAction propose(const LinearLearner& learner, int iter, Rng& rng) override;

private:
    const TransformPolicy* policy_;
    const LabeledDataset* pool_;
    Vector w_star_;  // empty for the black-box layout
};

class VaePolicyTeacher : public Teacher {
public:
    VaePolicyTeacher(const VaeTeacher& teacher, const LabeledDataset& pool, Vector w_star)
        : teacher_(&teacher), pool_(&pool), w_star_(std::move(w_star)) {}
    TeachingAction propose(const LinearLearner& learner, int iter, Rng& rng) override;

private:
    const VaeTeacher* teacher_;
    const LabeledDataset* pool_;
    Vector w_star_;
};

class GanPolicyTeacher : public Teacher {
public:
    GanPolicyTeacher(const GanTeacher& teacher, const LabeledDataset& pool, Vector w_star)
        : teacher_(&teacher), pool_(&pool), w_star_(std::move(w_star)) {}
    TeachingAction propose(const LinearLearner& learner, int iter, Rng& rng) override;

private:
    const GanTeacher* teacher_;
    const LabeledDataset* pool_;
    Vector w_star_;
};

// Helper shared by the generative teachers: decode a latent code to a
// lifted teaching example.
FeatureVector decode_example(const VaeTeacher& teacher, const Vector& u, const SoftLabel& y,
                             bool lifted);

}  // namespace dht
