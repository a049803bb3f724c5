#include "learner.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "dataset.hpp"

namespace dht {

namespace {

double sigmoid(double z) {
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

std::string loss_kind_name(LossKind k) { return k == LossKind::LSR ? "lsr" : "lr"; }

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "lsr")
        return LossKind::LSR;
    if (name == "lr")
        return LossKind::LR;
    throw std::invalid_argument("unknown loss kind: " + name);
}

double loss_gamma(LossKind kind, double s, const SoftLabel& y) {
    if (kind == LossKind::LSR)
        return s - y.scalar();
    return y.y[1] * sigmoid(s) - y.y[0] * sigmoid(-s);
}

double LinearLearner::loss(const FeatureVector& x, const SoftLabel& y) const {
    const double s = margin(x);
    if (loss_kind == LossKind::LSR) {
        const double r = s - y.scalar();
        return 0.5 * r * r;
    }
    return y.y[0] * softplus(-s) + y.y[1] * softplus(s);
}

Vector LinearLearner::grad_w(const FeatureVector& x, const SoftLabel& y) const {
    const double g = loss_gamma(loss_kind, margin(x), y);
    Vector grad(x.values.size());
    for (std::size_t i = 0; i < grad.size(); ++i)
        grad[i] = g * x.values[i];
    return grad;
}

void LinearLearner::sgd_update(const FeatureVector& x, const SoftLabel& y, double multiplier) {
    const double g = loss_gamma(loss_kind, margin(x), y);
    const double c = -eta * multiplier * g;
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] += c * x.values[i];
    if (!all_finite(w))
        throw std::runtime_error("sgd_update produced a non-finite weight");
}

void LinearLearner::save(std::ostream& os) const {
    os.precision(17);
    os << loss_kind_name(loss_kind) << " " << eta << " " << w.size();
    for (double v : w)
        os << " " << v;
    os << "\n";
}

LinearLearner LinearLearner::load(std::istream& is) {
    std::string kind;
    double eta = 0.0;
    std::size_t d = 0;
    is >> kind >> eta >> d;
    if (!is)
        throw std::runtime_error("learner load: bad header");
    LinearLearner l;
    l.loss_kind = loss_kind_from_name(kind);
    l.eta = eta;
    l.w.resize(d);
    for (double& v : l.w)
        is >> v;
    if (!is)
        throw std::runtime_error("learner load: truncated weights");
    return l;
}

int loss_node(Tape& tape, LossKind kind, int s, int y) {
    const int y1 = tape.slice(y, 0, 1);
    const int y2 = tape.slice(y, 1, 1);
    if (kind == LossKind::LSR) {
        const int r = tape.sub(s, tape.sub(y1, y2));
        return tape.scale(tape.sqnorm_(r), 0.5);
    }
    const int neg_s = tape.scale(s, -1.0);
    return tape.add(tape.mul(y1, tape.softplus(neg_s)), tape.mul(y2, tape.softplus(s)));
}

int gamma_node(Tape& tape, LossKind kind, int s, int y) {
    const int y1 = tape.slice(y, 0, 1);
    const int y2 = tape.slice(y, 1, 1);
    if (kind == LossKind::LSR)
        return tape.sub(s, tape.sub(y1, y2));
    const int neg_s = tape.scale(s, -1.0);
    return tape.sub(tape.mul(y2, tape.sigmoid(s)), tape.mul(y1, tape.sigmoid(neg_s)));
}

EvalResult evaluate(const LinearLearner& learner, const LabeledDataset& data) {
    if (data.examples.empty())
        throw std::invalid_argument("evaluate: empty dataset");
    EvalResult r;
    long correct = 0;
    for (const auto& [x, y] : data.examples) {
        r.mean_loss += learner.loss(x, y);
        const int pred = learner.margin(x) >= 0.0 ? 1 : -1;
        const int truth = y.scalar() >= 0.0 ? 1 : -1;
        if (pred == truth)
            ++correct;
    }
    r.mean_loss /= static_cast<double>(data.examples.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(data.examples.size());
    return r;
}

TargetWeights fit_target(const LabeledDataset& data, LossKind kind, const FitOptions& opts,
                         const Vector* w_init) {
    if (data.examples.empty())
        throw std::invalid_argument("fit_target: empty dataset");
    const std::size_t d = data.examples.front().first.values.size();
    LinearLearner learner;
    learner.loss_kind = kind;
    learner.eta = opts.eta;
    learner.w = w_init ? *w_init : Vector(d, 0.0);

    TargetWeights out;
    out.provenance = TargetWeights::Provenance::Fitted;
    Vector best_w = learner.w;
    double best_grad_norm = std::numeric_limits<double>::infinity();

    const double inv_n = 1.0 / static_cast<double>(data.examples.size());
    Vector grad(d);
    for (long it = 0; it < opts.max_iters; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& [x, y] : data.examples) {
            const double g = loss_gamma(kind, dot(learner.w, x.values), y);
            axpy(grad, g * inv_n, x.values);
        }
        const double gn = norm(grad);
        if (gn < best_grad_norm) {
            best_grad_norm = gn;
            best_w = learner.w;
        }
        if (gn <= opts.tol) {
            out.converged = true;
            break;
        }
        axpy(learner.w, -opts.eta, grad);
    }
    learner.w = best_w;
    out.w_star = std::move(best_w);
    double total = 0.0;
    for (const auto& [x, y] : data.examples)
        total += learner.loss(x, y);
    out.final_loss = total * inv_n;
    return out;
}

}  // namespace dht
