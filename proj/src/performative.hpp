#pragma once

#include <cstdint>
#include <vector>

#include "dataset.hpp"
#include "mlp.hpp"
#include "trace.hpp"

namespace dht {

// Neural learner split into an encoder and a last-layer linear classifier;
// teaching happens in the representation space between them.
struct EncoderClassifier {
    TinyMlp encoder;  // input -> feature (k)
    Matrix w;         // C x k classifier
    int n_classes = 0;

    int feature_dim() const { return encoder.output_dim(); }
    Vector features(const Vector& input) const { return encoder.forward(input); }
    Vector logits_from_features(const Vector& feat) const { return matvec(w, feat); }
};

EncoderClassifier make_encoder_classifier(int input_dim, const std::vector<int>& hidden,
                                          int feature_dim, int n_classes, std::uint64_t seed);

struct PerformativeConfig {
    int n_w = 5;          // classifier-only steps to estimate w*
    int feat_steps = 15;  // greedy feature-update steps
    double eps = 0.1;     // angular neighborhood (chord distance)
    int batch_m = 32;
    double feat_lr = 0.02;
    double lr = 0.05;          // network SGD rate
    double target_lr = -1.0;   // w*-estimation rate; defaults to lr
};

Vector softmax_probs(const Vector& logits);
double cross_entropy(const Vector& logits, int label);

// Buffers w, runs n_w classifier-only SGD steps against fresh training
// batches (encoder frozen), returns the resulting weights as w*(t) and
// restores the buffered w exactly.
Matrix estimate_target_classifier(EncoderClassifier& model, const MulticlassDataset& train,
                                  const PerformativeConfig& cfg, Rng& rng_teach);

// Projected gradient descent on the one-step teaching objective over the
// feasible set {||x~|| = ||x||, chord(x~, x) <= eps}; returns the best
// feasible iterate. eps = 0 returns x unchanged.
Vector hallucinate_feature(const Vector& x, int label, const Matrix& w, const Matrix& w_star,
                           const PerformativeConfig& cfg, double eta,
                           double* objective_out = nullptr);

// Objective value at a fixed point (used by the oracle tests).
double hallucination_objective(const Vector& x, int label, const Matrix& w, const Matrix& w_star,
                               double eta);

// Uniform sample on the spherical cap of chord radius eps around x
// (norm preserved).
Vector sample_cap_uniform(const Vector& x, double eps, Rng& rng);

enum class PerformativePolicy { None, RandomCap, Dht };

// Algorithm: per iteration extract batch features, snapshot w*(t),
// perturb each feature inside the epsilon-cap (per the policy), then take
// one SGD step of the whole network with the perturbations applied as
// detached offsets on the encoder output. With eps = 0 the run is
// bit-identical to vanilla SGD.
TeachingTrace performative_train(EncoderClassifier model, const MulticlassDataset& train,
                                 const MulticlassDataset& test, const PerformativeConfig& cfg,
                                 PerformativePolicy policy, int iters, std::uint64_t seed,
                                 std::vector<double>* hallu_objectives = nullptr);

double multiclass_accuracy(const EncoderClassifier& model, const MulticlassDataset& data);

}  // namespace dht
