#include "performative.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tape.hpp"

namespace dht {

namespace {

// Chord distance eps between unit vectors corresponds to this angle.
double cap_angle(double eps) { return 2.0 * std::asin(std::clamp(eps / 2.0, 0.0, 1.0)); }

// Spherical projection of the unit vector v onto the cap of angular radius
// theta_max around the unit pole u.
Vector slerp_to_cap(const Vector& u, const Vector& v, double theta_max) {
    const double c = std::clamp(dot(u, v), -1.0, 1.0);
    const double theta = std::acos(c);
    if (theta <= theta_max)
        return v;
    // Tangential component of v at u.
    Vector t(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        t[i] = v[i] - c * u[i];
    const double tn = norm(t);
    if (tn < 1e-15) {
        // Antipodal or identical; nothing tangential to move along.
        return u;
    }
    Vector out(v.size());
    const double ct = std::cos(theta_max), st = std::sin(theta_max);
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = ct * u[i] + st * t[i] / tn;
    return out;
}

// Feasible-set projection for Eq.-style hallucination: rescale to the
// original norm, then pull back onto the chord-eps cap if needed.
Vector project_feasible(const Vector& x_ref, const Vector& cand, double eps) {
    const double rn = norm(x_ref);
    Vector u(x_ref);
    for (double& v : u)
        v /= rn;
    Vector c(cand);
    const double cn = norm(c);
    if (cn < 1e-15)
        return x_ref;
    for (double& v : c)
        v /= cn;
    c = slerp_to_cap(u, c, cap_angle(eps));
    for (double& v : c)
        v *= rn;
    return c;
}

struct ObjectiveGraph {
    Tape tape;
    int x_node = -1;
    int obj = -1;
};

ObjectiveGraph build_objective(const Vector& x, int label, const Matrix& w, const Matrix& w_star,
                               double eta) {
    ObjectiveGraph g;
    Tape& tape = g.tape;
    g.x_node = tape.leaf(x);
    const int w_c = tape.constant_matrix(w);
    Matrix diff(w.rows, w.cols);
    for (std::size_t i = 0; i < w.data.size(); ++i)
        diff.data[i] = w.data[i] - w_star.data[i];
    const int diff_c = tape.constant_matrix(diff);

    const int z = tape.matvec(w_c, g.x_node);
    auto zv = tape.value(z);
    const double m = *std::max_element(zv.begin(), zv.end());
    const int m_c = tape.constant_scalar(m);
    const int shifted = tape.sub_scalar(z, m_c);
    const int lse = tape.add(m_c, tape.log_(tape.sum(tape.exp_(shifted))));
    const int p = tape.exp_(tape.sub_scalar(z, lse));
    Vector onehot(w.rows, 0.0);
    onehot[label] = 1.0;
    const int resid = tape.sub(p, tape.constant(onehot));

    // grad_W CE = (p - e_y) x^T, so ||grad||_F^2 = ||p - e_y||^2 ||x||^2 and
    // <W - W*, grad>_F = (p - e_y)^T (W - W*) x.
    const int grad_sq = tape.mul(tape.sqnorm_(resid), tape.sqnorm_(g.x_node));
    const int cross = tape.dot(resid, tape.matvec(diff_c, g.x_node));
    g.obj = tape.add(tape.scale(grad_sq, eta * eta), tape.scale(cross, -2.0 * eta));
    return g;
}

}  // namespace

EncoderClassifier make_encoder_classifier(int input_dim, const std::vector<int>& hidden,
                                          int feature_dim, int n_classes, std::uint64_t seed) {
    Rng rng(seed);
    EncoderClassifier model;
    std::vector<int> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(feature_dim);
    model.encoder = TinyMlp(dims, Activation::Relu, 0.0, rng);
    model.n_classes = n_classes;
    model.w = Matrix(n_classes, feature_dim);
    const double stddev = std::sqrt(1.0 / feature_dim);
    for (double& v : model.w.data)
        v = rng.normal(0.0, stddev);
    return model;
}

Vector softmax_probs(const Vector& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    Vector p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        total += p[i];
    }
    for (double& v : p)
        v /= total;
    return p;
}

double cross_entropy(const Vector& logits, int label) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double z : logits)
        total += std::exp(z - m);
    return m + std::log(total) - logits[label];
}

Matrix estimate_target_classifier(EncoderClassifier& model, const MulticlassDataset& train,
                                  const PerformativeConfig& cfg, Rng& rng_teach) {
    const Matrix buffer = model.w;
    const double lr = cfg.target_lr > 0.0 ? cfg.target_lr : cfg.lr;
    // batch_m <= 0 selects deterministic full-batch steps over the whole
    // training set (no RNG consumed).
    const bool full_batch = cfg.batch_m <= 0;
    const std::size_t batch = full_batch ? train.examples.size()
                                         : static_cast<std::size_t>(cfg.batch_m);
    for (int step = 0; step < cfg.n_w; ++step) {
        Matrix grad(model.w.rows, model.w.cols);
        for (std::size_t j = 0; j < batch; ++j) {
            const auto& [x, label] =
                train.examples[full_batch ? j : rng_teach.choice(train.examples.size())];
            const Vector feat = model.features(x);
            const Vector p = softmax_probs(matvec(model.w, feat));
            for (int c = 0; c < model.w.rows; ++c) {
                const double coef = (p[c] - (c == label ? 1.0 : 0.0)) / static_cast<double>(batch);
                for (int k = 0; k < model.w.cols; ++k)
                    grad(c, k) += coef * feat[k];
            }
        }
        for (std::size_t i = 0; i < model.w.data.size(); ++i)
            model.w.data[i] -= lr * grad.data[i];
    }
    Matrix snapshot = model.w;
    model.w = buffer;
    return snapshot;
}

double hallucination_objective(const Vector& x, int label, const Matrix& w, const Matrix& w_star,
                               double eta) {
    ObjectiveGraph g = build_objective(x, label, w, w_star, eta);
    return g.tape.scalar(g.obj);
}

Vector hallucinate_feature(const Vector& x, int label, const Matrix& w, const Matrix& w_star,
                           const PerformativeConfig& cfg, double eta, double* objective_out) {
    const double xn = norm(x);
    if (xn < 1e-15)
        throw std::invalid_argument("hallucinate_feature: zero-norm feature");
    if (cfg.eps <= 0.0) {
        if (objective_out)
            *objective_out = hallucination_objective(x, label, w, w_star, eta);
        return x;
    }

    Vector cur = x;
    Vector best = x;
    double best_obj = hallucination_objective(x, label, w, w_star, eta);
    for (int step = 0; step < cfg.feat_steps; ++step) {
        ObjectiveGraph g = build_objective(cur, label, w, w_star, eta);
        g.tape.backward(g.obj);
        auto grad = g.tape.adjoint(g.x_node);
        for (std::size_t i = 0; i < cur.size(); ++i)
            cur[i] -= cfg.feat_lr * grad[i];
        cur = project_feasible(x, cur, cfg.eps);
        const double obj = hallucination_objective(cur, label, w, w_star, eta);
        if (obj < best_obj) {
            best_obj = obj;
            best = cur;
        }
    }
    if (objective_out)
        *objective_out = best_obj;
    return best;
}

Vector sample_cap_uniform(const Vector& x, double eps, Rng& rng) {
    const double xn = norm(x);
    if (xn < 1e-15)
        throw std::invalid_argument("sample_cap_uniform: zero-norm center");
    if (eps <= 0.0)
        return x;
    Vector u(x);
    for (double& v : u)
        v /= xn;
    // Tangent direction uniform in the orthogonal complement.
    Vector t(x.size());
    double tn = 0.0;
    do {
        for (double& v : t)
            v = rng.normal();
        const double proj = dot(t, u);
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] -= proj * u[i];
        tn = norm(t);
    } while (tn < 1e-12);
    for (double& v : t)
        v /= tn;
    // Small-cap area density: theta = theta_max * U^(1/(k-1)).
    const double theta_max = cap_angle(eps);
    const double k = static_cast<double>(x.size());
    const double theta = theta_max * std::pow(rng.uniform(), 1.0 / (k - 1.0));
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = xn * (std::cos(theta) * u[i] + std::sin(theta) * t[i]);
    return out;
}

double multiclass_accuracy(const EncoderClassifier& model, const MulticlassDataset& data) {
    long correct = 0;
    for (const auto& [x, label] : data.examples) {
        const Vector logits = model.logits_from_features(model.features(x));
        const int pred = static_cast<int>(
            std::max_element(logits.begin(), logits.end()) - logits.begin());
        if (pred == label)
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.examples.size());
}

TeachingTrace performative_train(EncoderClassifier model, const MulticlassDataset& train,
                                 const MulticlassDataset& test, const PerformativeConfig& cfg,
                                 PerformativePolicy policy, int iters, std::uint64_t seed,
                                 std::vector<double>* hallu_objectives) {
    // Separate streams: the data stream must be identical to a vanilla run
    // regardless of how much randomness the teaching machinery consumes.
    Rng rng_data(Rng::derive_seed(seed, "perf_data"));
    Rng rng_teach(Rng::derive_seed(seed, "perf_teach"));

    TeachingTrace trace;
    trace.rows.reserve(iters);

    for (int iter = 1; iter <= iters; ++iter) {
        std::vector<std::size_t> batch(cfg.batch_m);
        for (auto& idx : batch)
            idx = rng_data.choice(train.examples.size());

        const Matrix w_star = estimate_target_classifier(model, train, cfg, rng_teach);

        // Perturb each feature within the cap per the policy.
        std::vector<Vector> features, deltas;
        features.reserve(batch.size());
        deltas.reserve(batch.size());
        double obj_sum = 0.0;
        for (std::size_t idx : batch) {
            const auto& [x, label] = train.examples[idx];
            Vector feat = model.features(x);
            Vector perturbed;
            switch (policy) {
            case PerformativePolicy::None:
                perturbed = feat;
                break;
            case PerformativePolicy::RandomCap:
                perturbed = cfg.eps > 0.0 ? sample_cap_uniform(feat, cfg.eps, rng_teach) : feat;
                break;
            case PerformativePolicy::Dht: {
                double obj = 0.0;
                perturbed = hallucinate_feature(feat, label, model.w, w_star, cfg, cfg.lr, &obj);
                obj_sum += obj;
                break;
            }
            }
            Vector delta(feat.size());
            for (std::size_t i = 0; i < feat.size(); ++i)
                delta[i] = perturbed[i] - feat[i];
            features.push_back(std::move(feat));
            deltas.push_back(std::move(delta));
        }
        if (hallu_objectives)
            hallu_objectives->push_back(policy == PerformativePolicy::Dht
                                            ? obj_sum / static_cast<double>(batch.size())
                                            : 0.0);

        // Full-network step at the perturbed features; the perturbation is a
        // detached offset so encoder gradients follow the ordinary chain rule
        // evaluated at x~.
        Tape tape;
        const auto enc_params = model.encoder.register_params(tape);
        const int w_leaf = tape.leaf_matrix(model.w);
        int loss_sum = tape.constant_scalar(0.0);
        for (std::size_t j = 0; j < batch.size(); ++j) {
            const auto& [x, label] = train.examples[batch[j]];
            const int feat = model.encoder.forward_tape(tape, enc_params, tape.constant(x));
            const int shifted_feat = tape.add(feat, tape.constant(deltas[j]));
            const int z = tape.matvec(w_leaf, shifted_feat);
            auto zv = tape.value(z);
            const double m = *std::max_element(zv.begin(), zv.end());
            const int m_c = tape.constant_scalar(m);
            const int lse = tape.add(m_c, tape.log_(tape.sum(tape.exp_(tape.sub_scalar(z, m_c)))));
            loss_sum = tape.add(loss_sum, tape.sub(lse, tape.slice(z, label, 1)));
        }
        const int loss = tape.scale(loss_sum, 1.0 / static_cast<double>(batch.size()));
        const double loss_val = tape.scalar(loss);
        if (!std::isfinite(loss_val) || loss_val > 1e6) {
            trace.aborted = true;
            break;
        }
        tape.backward(loss);

        Vector enc_flat = model.encoder.flatten_params();
        const Vector enc_grad = model.encoder.collect_grad(tape, enc_params);
        for (std::size_t i = 0; i < enc_flat.size(); ++i)
            enc_flat[i] -= cfg.lr * enc_grad[i];
        model.encoder.set_params(enc_flat);
        auto w_grad = tape.adjoint(w_leaf);
        for (std::size_t i = 0; i < model.w.data.size(); ++i)
            model.w.data[i] -= cfg.lr * w_grad[i];

        TraceRow row;
        row.iter = iter;
        double dist = 0.0;
        for (std::size_t i = 0; i < model.w.data.size(); ++i) {
            const double dv = model.w.data[i] - w_star.data[i];
            dist += dv * dv;
        }
        row.w_dist_sq = dist;
        row.train_loss = loss_val;
        row.test_acc = multiclass_accuracy(model, test);
        trace.rows.push_back(row);
    }
    return trace;
}

}  // namespace dht
