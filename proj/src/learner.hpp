#pragma once

#include <iosfwd>
#include <string>

#include "tape.hpp"
#include "vec.hpp"

namespace dht {

struct LabeledDataset;

enum class LossKind { LSR, LR };

std::string loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);

// Two-component class weights. Component 0 weights class +1, component 1
// weights class -1; a hard label is exactly one-hot. The scalar view
// y[0] - y[1] recovers the +-1 convention used by the scalar loss formulas.
struct SoftLabel {
    double y[2] = {0.0, 0.0};

    static SoftLabel from_sign(int sign) {
        SoftLabel l;
        l.y[sign > 0 ? 0 : 1] = 1.0;
        return l;
    }
    double scalar() const { return y[0] - y[1]; }
    bool is_hard() const {
        return (y[0] == 1.0 && y[1] == 0.0) || (y[0] == 0.0 && y[1] == 1.0);
    }
    double norm() const { return std::sqrt(y[0] * y[0] + y[1] * y[1]); }
};

struct TargetWeights {
    enum class Provenance { Fitted, Loaded };
    Vector w_star;
    Provenance provenance = Provenance::Fitted;
    bool converged = false;
    double final_loss = 0.0;
};

// Gradient scale of the per-sample loss: grad_w = gamma(s, y) * x with
// s = <w, x>.
double loss_gamma(LossKind kind, double s, const SoftLabel& y);

struct LinearLearner {
    Vector w;
    LossKind loss_kind = LossKind::LR;
    double eta = 0.001;

    double margin(const FeatureVector& x) const { return dot(w, x.values); }
    double loss(const FeatureVector& x, const SoftLabel& y) const;
    Vector grad_w(const FeatureVector& x, const SoftLabel& y) const;

    // w <- w - eta * multiplier * grad_w(x, y); throws if the update is
    // not finite.
    void sgd_update(const FeatureVector& x, const SoftLabel& y, double multiplier = 1.0);

    void save(std::ostream& os) const;
    static LinearLearner load(std::istream& is);
};

// Tape expressions for the per-sample loss and its gradient scale, used by
// the synthesis objectives and the unrolled teachers. `y` is a 2-component
// node (live or constant).
int loss_node(Tape& tape, LossKind kind, int s, int y);
int gamma_node(Tape& tape, LossKind kind, int s, int y);

struct EvalResult {
    double mean_loss = 0.0;
    double accuracy = 0.0;
};

// Mean loss and sign-match accuracy over a dataset; throws on empty input.
EvalResult evaluate(const LinearLearner& learner, const LabeledDataset& data);

struct FitOptions {
    double eta = 0.001;
    long max_iters = 200000;
    double tol = 1e-8;  // on the full-batch gradient norm
};

// Full-batch gradient descent until the gradient norm drops below tol.
// Non-convergence returns the best iterate with converged = false.
TargetWeights fit_target(const LabeledDataset& data, LossKind kind, const FitOptions& opts = {},
                         const Vector* w_init = nullptr);

}  // namespace dht
