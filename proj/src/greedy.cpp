#include "greedy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dht {

namespace {

// Builds the greedy objective on the tape as a function of the full
// example node x (size = dim of w) and a 2-component label node y.
int objective_node(Tape& tape, LossKind kind, int x_node, int y_node,
                   const GreedyObjectiveParams& p) {
    const int w = tape.constant(p.w);
    const int diff = tape.constant(sub(p.w, p.w_star));
    const int s = tape.dot(w, x_node);
    const int gamma = gamma_node(tape, kind, s, y_node);
    const int grad = tape.smul(gamma, x_node);
    const int quad = tape.scale(tape.sqnorm_(grad), p.eta * p.eta);
    const int cross = tape.scale(tape.dot(diff, grad), -2.0 * p.eta);
    return tape.add(quad, cross);
}

}  // namespace

double greedy_objective(const FeatureVector& x, const SoftLabel& y,
                        const GreedyObjectiveParams& p, LossKind kind) {
    if (x.values.size() != p.w.size() || p.w.size() != p.w_star.size())
        throw std::invalid_argument("greedy_objective: dimension mismatch");
    const double s = dot(p.w, x.values);
    const double g = loss_gamma(kind, s, y);
    const double grad_sq = g * g * sqnorm(x.values);
    double cross = 0.0;
    for (std::size_t i = 0; i < p.w.size(); ++i)
        cross += (p.w[i] - p.w_star[i]) * g * x.values[i];
    return p.eta * p.eta * grad_sq - 2.0 * p.eta * cross;
}

ImtPick imt_select(const LabeledDataset& pool, const GreedyObjectiveParams& p, LossKind kind) {
    if (pool.examples.empty())
        throw std::invalid_argument("imt_select: empty pool");
    ImtPick best;
    best.objective = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pool.examples.size(); ++i) {
        const double obj = greedy_objective(pool.examples[i].first, pool.examples[i].second, p, kind);
        if (obj < best.objective) {
            best.objective = obj;
            best.index = i;
        }
    }
    return best;
}

FeatureVector dht_synthesize(const SoftLabel& y, const GreedyObjectiveParams& p, LossKind kind,
                             const SynthesisConstraints& c, const SynthesisOptions& opt,
                             const FeatureVector& init, const ObjectiveExtension& extra) {
    if (opt.steps <= 0)
        throw std::invalid_argument("dht_synthesize: steps must be positive");
    const int dim = init.dim();
    const int free = init.free_dim();
    if (static_cast<int>(c.box_lo.size()) != dim || static_cast<int>(c.box_hi.size()) != dim)
        throw std::invalid_argument("dht_synthesize: box dimension mismatch");

    Vector ylab{y.y[0], y.y[1]};
    Vector xfree(init.values.begin(), init.values.begin() + free);
    for (int i = 0; i < free; ++i)
        xfree[i] = std::clamp(xfree[i], c.box_lo[i], c.box_hi[i]);

    auto eval_obj = [&](const Vector& xf, Vector* grad_out) {
        Tape tape;
        const int xfree_node = tape.leaf(xf);
        const int x_node = init.has_bias
                               ? tape.concat(xfree_node, tape.constant_scalar(1.0))
                               : xfree_node;
        const int ynode = tape.constant(ylab);
        int obj = objective_node(tape, kind, x_node, ynode, p);
        if (extra)
            obj = tape.add(obj, extra(tape, x_node));
        if (grad_out) {
            tape.backward(obj);
            auto adj = tape.adjoint(xfree_node);
            grad_out->assign(adj.begin(), adj.end());
        }
        return tape.scalar(obj);
    };

    Vector best_x = xfree;
    double best_obj = eval_obj(xfree, nullptr);
    AdamState adam(free, opt.adam);
    std::vector<double> recent;
    Vector grad(free);
    for (int step = 0; step < opt.steps; ++step) {
        const double obj = eval_obj(xfree, &grad);
        if (obj < best_obj) {
            best_obj = obj;
            best_x = xfree;
        }
        recent.push_back(obj);
        if (static_cast<int>(recent.size()) > opt.early_stop_window &&
            std::abs(obj - recent[recent.size() - 1 - opt.early_stop_window]) < opt.early_stop_tol)
            break;
        adam.step(xfree, grad);
        for (int i = 0; i < free; ++i)
            xfree[i] = std::clamp(xfree[i], c.box_lo[i], c.box_hi[i]);
    }
    const double final_obj = eval_obj(xfree, nullptr);
    if (final_obj < best_obj) {
        best_obj = final_obj;
        best_x = xfree;
    }

    FeatureVector out = init;
    std::copy(best_x.begin(), best_x.end(), out.values.begin());
    out.pin_bias();
    return out;
}

namespace {

// Exact Euclidean projection of a 2-component label onto
// {y >= floor, ||y|| <= cap}.
void project_label(Vector& y, double floor, double cap) {
    y[0] = std::max(y[0], floor);
    y[1] = std::max(y[1], floor);
    const double n = std::sqrt(y[0] * y[0] + y[1] * y[1]);
    if (n <= cap)
        return;
    const double s = cap / n;
    y[0] *= s;
    y[1] *= s;
    if (y[0] < floor) {
        y[0] = floor;
        y[1] = std::min(y[1], std::sqrt(cap * cap - floor * floor));
    } else if (y[1] < floor) {
        y[1] = floor;
        y[0] = std::min(y[0], std::sqrt(cap * cap - floor * floor));
    }
}

}  // namespace

SoftLabel synthesize_label(const FeatureVector& x, const GreedyObjectiveParams& p, LossKind kind,
                           const SynthesisConstraints& c, int steps, double lr) {
    Vector y{1.0, 0.0};
    {
        // Start from the hard label that matches the sample's class side is
        // the caller's job; default to the better of the two one-hot labels.
        const double obj_pos = greedy_objective(x, SoftLabel::from_sign(+1), p, kind);
        const double obj_neg = greedy_objective(x, SoftLabel::from_sign(-1), p, kind);
        if (obj_neg < obj_pos)
            y = {0.0, 1.0};
    }
    return synthesize_label_from(x, p, kind, c, y, steps, lr);
}

SoftLabel synthesize_label_from(const FeatureVector& x, const GreedyObjectiveParams& p,
                                LossKind kind, const SynthesisConstraints& c, Vector y, int steps,
                                double lr) {
    project_label(y, c.label_floor, c.label_norm_cap);

    auto eval_obj = [&](const Vector& yv, Vector* grad_out) {
        Tape tape;
        const int ynode = tape.leaf(yv);
        const int xnode = tape.constant(x.values);
        const int obj = objective_node(tape, kind, xnode, ynode, p);
        if (grad_out) {
            tape.backward(obj);
            auto adj = tape.adjoint(ynode);
            grad_out->assign(adj.begin(), adj.end());
        }
        return tape.scalar(obj);
    };

    Vector best_y = y;
    double best_obj = eval_obj(y, nullptr);
    AdamConfig cfg;
    cfg.step_size = lr;
    AdamState adam(2, cfg);
    Vector grad(2);
    for (int step = 0; step < steps; ++step) {
        eval_obj(y, &grad);
        adam.step(y, grad);
        project_label(y, c.label_floor, c.label_norm_cap);
        const double obj = eval_obj(y, nullptr);
        if (obj < best_obj) {
            best_obj = obj;
            best_y = y;
        }
    }
    SoftLabel out;
    out.y[0] = best_y[0];
    out.y[1] = best_y[1];
    return out;
}

double solve_beta(const FeatureVector& x, const SoftLabel& y, const LinearLearner& learner,
                  double target_multiplier, double beta_max) {
    if (target_multiplier <= 0.0)
        throw std::invalid_argument("solve_beta: target must be positive");
    const double s = dot(learner.w, x.values);
    const double g0 = loss_gamma(learner.loss_kind, s, y);
    if (g0 == 0.0)
        throw std::invalid_argument("solve_beta: zero gradient at x");

    if (learner.loss_kind == LossKind::LSR) {
        // beta * (beta*s - yhat) = target * (s - yhat), smallest positive root.
        const double yhat = y.scalar();
        const double rhs = target_multiplier * (s - yhat);
        if (s == 0.0) {
            const double beta = rhs / -yhat;
            if (beta > 0.0 && beta <= beta_max)
                return beta;
            throw UnachievableBeta("solve_beta: no positive root (degenerate LSR)");
        }
        const double disc = yhat * yhat + 4.0 * s * rhs;
        if (disc < 0.0)
            throw UnachievableBeta("solve_beta: negative discriminant");
        const double sq = std::sqrt(disc);
        double best = std::numeric_limits<double>::infinity();
        for (double root : {(yhat + sq) / (2.0 * s), (yhat - sq) / (2.0 * s)})
            if (root > 0.0 && root <= beta_max)
                best = std::min(best, root);
        if (!std::isfinite(best))
            throw UnachievableBeta("solve_beta: no positive LSR root within range");
        return best;
    }

    // LR: effective multiplier r(beta) = beta * gamma(beta*s) / gamma(s);
    // dense scan for the first bracket, then bisection.
    auto r = [&](double beta) {
        return beta * loss_gamma(LossKind::LR, beta * s, y) / g0;
    };
    auto bisect = [&](double lo, double hi) {
        double flo = r(lo) - target_multiplier;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double fm = r(mid) - target_multiplier;
            if (std::abs(fm) <= 1e-10)
                return mid;
            if ((fm < 0.0) == (flo < 0.0)) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    };

    const int kScan = 4096;
    double prev_beta = beta_max * 1e-12;
    double prev_f = r(prev_beta) - target_multiplier;
    double best_beta = prev_beta;
    double best_r = r(prev_beta);
    for (int i = 1; i <= kScan; ++i) {
        const double beta = beta_max * i / kScan;
        const double f = r(beta) - target_multiplier;
        if ((f >= 0.0) != (prev_f >= 0.0))
            return bisect(prev_beta, beta);
        if (r(beta) > best_r) {
            best_r = r(beta);
            best_beta = beta;
        }
        prev_beta = beta;
        prev_f = f;
    }
    // No sign change on the grid: refine around the best cell in case the
    // maximum peeks above the target between grid points.
    {
        double lo = std::max(beta_max * 1e-12, best_beta - beta_max / kScan);
        double hi = std::min(beta_max, best_beta + beta_max / kScan);
        const double phi = 0.6180339887498949;
        double a = lo, b = hi;
        double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
        for (int it = 0; it < 120; ++it) {
            if (r(x1) < r(x2)) {
                a = x1;
                x1 = x2;
                x2 = a + phi * (b - a);
            } else {
                b = x2;
                x2 = x1;
                x1 = b - phi * (b - a);
            }
        }
        const double peak = 0.5 * (a + b);
        if (r(peak) >= target_multiplier)
            return bisect(beta_max * 1e-12, peak);
    }
    throw UnachievableBeta("solve_beta: target multiplier not reachable on (0, beta_max]");
}

void scaled_gradient_step(LinearLearner& learner, const FeatureVector& x, const SoftLabel& y,
                          double c1, const Vector& w_star) {
    const double dist = norm(sub(learner.w, w_star));
    learner.sgd_update(x, y, c1 * dist);
}

TeachingAction RandomTeacher::propose(const LinearLearner&, int, Rng& rng) {
    if (cursor_ >= order_.size()) {
        order_.resize(pool_->examples.size());
        for (std::size_t i = 0; i < order_.size(); ++i)
            order_[i] = i;
        for (std::size_t i = order_.size(); i > 1; --i)
            std::swap(order_[i - 1], order_[rng.choice(i)]);
        cursor_ = 0;
    }
    const auto& [x, y] = pool_->examples[order_[cursor_++]];
    return {x, y, 1.0};
}

TeachingAction ImtTeacher::propose(const LinearLearner& learner, int, Rng&) {
    GreedyObjectiveParams p{learner.eta, learner.w, w_star_};
    const ImtPick pick = imt_select(*pool_, p, learner.loss_kind);
    const auto& [x, y] = pool_->examples[pick.index];
    TeachingAction action{x, y, 1.0};
    if (label_synth_) {
        Vector y0{y.y[0], y.y[1]};
        action.y = synthesize_label_from(x, p, learner.loss_kind, constraints_, y0, label_steps_,
                                         label_lr_);
    }
    return action;
}

TeachingAction RandomLabelTeacher::propose(const LinearLearner& learner, int iter, Rng& rng) {
    TeachingAction action = inner_.propose(learner, iter, rng);
    GreedyObjectiveParams p{learner.eta, learner.w, w_star_};
    Vector y0{action.y.y[0], action.y.y[1]};
    action.y = synthesize_label_from(action.x, p, learner.loss_kind, constraints_, y0, label_steps_,
                                     label_lr_);
    return action;
}

TeachingAction DhtGreedyTeacher::propose(const LinearLearner& learner, int, Rng& rng) {
    const int sign = rng.bernoulli(0.5) ? +1 : -1;
    const auto& bucket = sign > 0 ? pos_ : neg_;
    const auto& [x0, y0] = pool_->examples[bucket[rng.choice(bucket.size())]];
    const SoftLabel y = SoftLabel::from_sign(sign);
    GreedyObjectiveParams p{learner.eta, learner.w, w_star_};
    TeachingAction action;
    action.x = dht_synthesize(y, p, learner.loss_kind, constraints_, options_, x0, extra_);
    action.y = y;
    if (label_synth_) {
        Vector yv{y.y[0], y.y[1]};
        action.y = synthesize_label_from(action.x, p, learner.loss_kind, constraints_, yv,
                                         label_steps_, label_lr_);
    }
    return action;
}

TeachingAction ScalingTeacher::propose(const LinearLearner& learner, int, Rng& rng) {
    const auto& [x, y] = pool_->examples[rng.choice(pool_->examples.size())];
    TeachingAction action{x, y, 1.0};
    action.grad_multiplier = c1_ * norm(sub(learner.w, w_star_));
    return action;
}

TeachingTrace teach_episode(Teacher& teacher, LinearLearner learner, const LabeledDataset& train,
                            const LabeledDataset& test, const Vector& w_star, int T,
                            std::uint64_t seed, const EpisodeObserver& observer) {
    if (T < 1)
        throw std::invalid_argument("teach_episode: T must be >= 1");
    Rng rng(seed);
    TeachingTrace trace;
    trace.rows.reserve(T);
    for (int iter = 1; iter <= T; ++iter) {
        const TeachingAction action = teacher.propose(learner, iter, rng);
        learner.sgd_update(action.x, action.y, action.grad_multiplier);
        if (observer)
            observer(iter, action, learner);
        TraceRow row;
        row.iter = iter;
        row.w_dist_sq = sqnorm(sub(learner.w, w_star));
        row.train_loss = evaluate(learner, train).mean_loss;
        row.test_acc = evaluate(learner, test).accuracy;
        trace.rows.push_back(row);
    }
    return trace;
}

}  // namespace dht
