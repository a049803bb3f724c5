#include <doctest.h>

#include <cmath>

#include "dataset.hpp"
#include "greedy.hpp"

using namespace dht;

namespace {

GreedyObjectiveParams random_params(Rng& rng, int dim, double eta) {
    GreedyObjectiveParams p;
    p.eta = eta;
    p.w.resize(dim);
    p.w_star.resize(dim);
    for (int i = 0; i < dim; ++i) {
        p.w[i] = rng.normal();
        p.w_star[i] = rng.normal();
    }
    return p;
}

// Independent oracle: exhaustive scan of the box at grid resolution.
double grid_min_objective(const SoftLabel& y, const GreedyObjectiveParams& p, LossKind kind,
                          const SynthesisConstraints& c, int resolution) {
    double best = std::numeric_limits<double>::infinity();
    FeatureVector x(Vector{0.0, 0.0, 1.0}, true);
    for (int i = 0; i < resolution; ++i) {
        x.values[0] = c.box_lo[0] + (c.box_hi[0] - c.box_lo[0]) * i / (resolution - 1);
        for (int j = 0; j < resolution; ++j) {
            x.values[1] = c.box_lo[1] + (c.box_hi[1] - c.box_lo[1]) * j / (resolution - 1);
            best = std::min(best, greedy_objective(x, y, p, kind));
        }
    }
    return best;
}

}  // namespace

TEST_CASE("greedy objective: degenerate cases and the exact identity") {
    Rng rng(5);
    // w == w*: no useful teaching direction, objective is a pure quadratic.
    {
        GreedyObjectiveParams p = random_params(rng, 3, 0.1);
        p.w_star = p.w;
        FeatureVector x(Vector{0.4, -0.2, 1.0}, true);
        CHECK(greedy_objective(x, SoftLabel::from_sign(+1), p, LossKind::LR) >= 0.0);
    }
    // Interpolated sample: zero gradient, zero objective.
    {
        GreedyObjectiveParams p;
        p.eta = 0.2;
        p.w = {1.0, 1.0};
        p.w_star = {0.0, 3.0};
        FeatureVector x(Vector{1.0, 1.0});
        SoftLabel y;
        y.y[0] = 2.0;  // scalar 2 == <w, x>
        CHECK(greedy_objective(x, y, p, LossKind::LSR) == 0.0);
    }
    // || w - eta grad - w* ||^2 - || w - w* ||^2 == objective, to 1e-12.
    for (int trial = 0; trial < 200; ++trial) {
        const LossKind kind = trial % 2 ? LossKind::LR : LossKind::LSR;
        GreedyObjectiveParams p = random_params(rng, 4, 0.01 + rng.uniform());
        Vector xv(4);
        for (double& v : xv)
            v = rng.normal();
        FeatureVector x(xv);
        const SoftLabel y = SoftLabel::from_sign(rng.bernoulli(0.5) ? 1 : -1);
        LinearLearner l;
        l.loss_kind = kind;
        l.w = p.w;
        l.eta = p.eta;
        Vector moved = p.w;
        axpy(moved, -p.eta, l.grad_w(x, y));
        const double lhs = sqnorm(sub(moved, p.w_star)) - sqnorm(sub(p.w, p.w_star));
        CHECK(std::abs(lhs - greedy_objective(x, y, p, kind)) <= 1e-12);
    }
}

TEST_CASE("imt_select: exhaustive scan is the definition") {
    Rng rng(9);
    const LabeledDataset pool = gen_halfmoon(100, 0.2, 3).lifted();
    const GreedyObjectiveParams p{0.05, {0.3, -0.7, 0.1}, {1.2, 0.5, -0.3}};

    const ImtPick pick = imt_select(pool, p, LossKind::LR);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < pool.examples.size(); ++i) {
        const double obj =
            greedy_objective(pool.examples[i].first, pool.examples[i].second, p, LossKind::LR);
        if (obj < best) {
            best = obj;
            best_idx = i;
        }
    }
    CHECK(pick.index == best_idx);
    CHECK(pick.objective == best);
}

TEST_CASE("imt_select: pool of one and tie-breaking") {
    LabeledDataset pool;
    pool.dim = 2;
    SoftLabel y;
    y.y[0] = 1.0;  // scalar label equals <w, x>: zero gradient
    pool.examples.emplace_back(FeatureVector(Vector{1.0, 0.0}), y);
    const GreedyObjectiveParams p{0.1, {1.0, 0.0}, {-2.0, 1.0}};
    CHECK(imt_select(pool, p, LossKind::LSR).index == 0);

    // Duplicate the zero-gradient example; lowest index wins the tie.
    pool.examples.emplace_back(FeatureVector(Vector{1.0, 0.0}), y);
    pool.recompute_box();
    CHECK(imt_select(pool, p, LossKind::LSR).index == 0);
}

TEST_CASE("dht_synthesize: collapsed box returns the only feasible point") {
    SynthesisConstraints c;
    c.box_lo = {0.7, -0.3, 1.0};
    c.box_hi = {0.7, -0.3, 1.0};
    const GreedyObjectiveParams p{0.1, {0.5, 0.5, 0.0}, {0.0, 0.0, 0.0}};
    SynthesisOptions opt;
    opt.steps = 50;
    const FeatureVector init(Vector{0.0, 0.0, 1.0}, true);
    const FeatureVector out =
        dht_synthesize(SoftLabel::from_sign(+1), p, LossKind::LR, c, opt, init);
    CHECK(out.values[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(out.values[1] == doctest::Approx(-0.3).epsilon(1e-12));
    CHECK(out.values[2] == 1.0);
}

TEST_CASE("dht_synthesize beats the grid oracle on random half-moon states") {
    const LabeledDataset pool = gen_halfmoon(400, 0.2, 17).lifted();
    SynthesisConstraints c = SynthesisConstraints::from_box(pool);
    SynthesisOptions opt;  // 300 Adam steps, lr 0.02, betas (0.8, 0.999)
    Rng rng(23);
    int ok = 0;
    const int trials = 50;
    for (int trial = 0; trial < trials; ++trial) {
        GreedyObjectiveParams p = random_params(rng, 3, 0.001 + 0.2 * rng.uniform());
        const SoftLabel y = SoftLabel::from_sign(rng.bernoulli(0.5) ? +1 : -1);
        const auto& init = pool.examples[rng.choice(pool.examples.size())].first;
        const FeatureVector xt = dht_synthesize(y, p, LossKind::LR, c, opt, init);
        // Box feasibility with pinned bias, always.
        for (int i = 0; i < 3; ++i) {
            CHECK(xt.values[i] >= c.box_lo[i] - 1e-12);
            CHECK(xt.values[i] <= c.box_hi[i] + 1e-12);
        }
        CHECK(xt.values[2] == 1.0);
        const double got = greedy_objective(xt, y, p, LossKind::LR);
        const double oracle = grid_min_objective(y, p, LossKind::LR, c, 201);
        if (got <= oracle + std::max(std::abs(oracle) * 0.01, 1e-3))
            ++ok;
    }
    CHECK(ok >= 48);  // >= 95% of 50
}

TEST_CASE("dht_synthesize dominates the pool pick when seeded from it") {
    const LabeledDataset pool = gen_halfmoon(200, 0.2, 29).lifted();
    SynthesisConstraints c = SynthesisConstraints::from_box(pool);
    SynthesisOptions opt;
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        GreedyObjectiveParams p = random_params(rng, 3, 0.05);
        const ImtPick pick = imt_select(pool, p, LossKind::LR);
        const auto& [px, py] = pool.examples[pick.index];
        const FeatureVector xt = dht_synthesize(py, p, LossKind::LR, c, opt, px);
        CHECK(greedy_objective(xt, py, p, LossKind::LR) <= pick.objective + 1e-9);
    }
}

TEST_CASE("synthesize_label: fixed point, cap boundary, feasibility, descent") {
    SynthesisConstraints c;
    c.box_lo = c.box_hi = {};  // unused for label synthesis
    Rng rng(37);

    // Optimum beyond the norm cap lands on the boundary: LSR with a large
    // ideal gradient scale pushes the label outward.
    {
        GreedyObjectiveParams p{0.001, {2.0, 0.0, 0.5}, {-8.0, 0.0, 0.5}};
        const FeatureVector x(Vector{3.0, 0.0, 1.0}, true);
        const SoftLabel out = synthesize_label_from(x, p, LossKind::LSR, c, {1.0, 0.0}, 4000, 0.01);
        CHECK(out.norm() == doctest::Approx(2.0).epsilon(1e-9));
    }

    for (int trial = 0; trial < 50; ++trial) {
        GreedyObjectiveParams p = random_params(rng, 3, 0.001 + 0.1 * rng.uniform());
        Vector xv{rng.normal(), rng.normal(), 1.0};
        const FeatureVector x(xv, true);
        const LossKind kind = trial % 2 ? LossKind::LR : LossKind::LSR;
        const Vector y0 = trial % 2 ? Vector{1.0, 0.0} : Vector{0.0, 1.0};
        const double before =
            greedy_objective(x, [&] { SoftLabel s; s.y[0] = y0[0]; s.y[1] = y0[1]; return s; }(),
                             p, kind);
        const SoftLabel out = synthesize_label_from(x, p, kind, c, y0);
        CHECK(out.y[0] >= c.label_floor - 1e-15);
        CHECK(out.y[1] >= c.label_floor - 1e-15);
        CHECK(out.norm() <= c.label_norm_cap + 1e-12);
        CHECK(greedy_objective(x, out, p, kind) <= before + 1e-12);
    }
}

TEST_CASE("solve_beta: identity, lsr closed form, lr saturation") {
    LinearLearner lsr;
    lsr.loss_kind = LossKind::LSR;
    lsr.w = {1.0};
    const FeatureVector x(Vector{1.0});
    SoftLabel y0;
    y0.y[0] = 0.0;
    y0.y[1] = 0.0;  // scalar label 0

    // r(1) target -> beta = 1.
    {
        const double r1 = 1.0;  // r(1) = 1 by definition of the multiplier
        CHECK(solve_beta(x, y0, lsr, r1, 10.0) == doctest::Approx(1.0).epsilon(1e-9));
    }
    // w=(1), x=(1), y=0: r(beta) = beta^2, target 4 -> beta 2.
    CHECK(solve_beta(x, y0, lsr, 4.0, 10.0) == doctest::Approx(2.0).epsilon(1e-9));

    // LR with a saturated positive-margin sample: r has a finite sup.
    LinearLearner lr;
    lr.loss_kind = LossKind::LR;
    lr.w = {3.0};
    const SoftLabel ypos = SoftLabel::from_sign(+1);
    CHECK_THROWS_AS(solve_beta(x, ypos, lr, 1e6, 50.0), UnachievableBeta);

    // Achievable LR target: the scaled gradient matches to 1e-10. (The
    // multiplier r(beta) = beta (1 + e^s) / (1 + e^(beta s)) peaks around
    // 1.8 for s = 3, so 1.5 is reachable while 1e6 above is not.)
    {
        const double target = 1.5;
        const double beta = solve_beta(x, ypos, lr, target, 50.0);
        const double g0 = loss_gamma(LossKind::LR, 3.0, ypos);
        const double gb = beta * loss_gamma(LossKind::LR, beta * 3.0, ypos);
        CHECK(std::abs(gb / g0 - target) <= 1e-10);
    }
}

TEST_CASE("scaled_gradient_step: fixed point at w*, contraction, beta equivalence") {
    Rng rng(41);
    // w == w*: multiplier 0, no movement.
    {
        LinearLearner l;
        l.loss_kind = LossKind::LSR;
        l.eta = 0.5;
        l.w = {1.0, 2.0};
        const Vector w_star = l.w;
        scaled_gradient_step(l, FeatureVector(Vector{1.0, 0.0}), SoftLabel::from_sign(+1), 2.0,
                             w_star);
        CHECK(l.w == w_star);
    }

    // Interpolation regime: distance-to-target never increases.
    {
        Vector v{0.5, -0.25, 1.0};
        LabeledDataset data;
        data.dim = 3;
        for (int i = 0; i < 30; ++i) {
            Vector xv(3);
            for (double& a : xv)
                a = rng.normal();
            const double label = dot(v, xv);
            SoftLabel y;
            y.y[0] = std::max(label, 0.0);
            y.y[1] = std::max(-label, 0.0);
            data.examples.emplace_back(FeatureVector(std::move(xv)), y);
        }
        LinearLearner l;
        l.loss_kind = LossKind::LSR;
        l.eta = 1.0;
        l.w = v;
        l.w[0] += 1.0;
        const double c1 = 0.05;
        double dist = norm(sub(l.w, v));
        for (int t = 0; t < 500; ++t) {
            const auto& [x, y] = data.examples[rng.choice(data.examples.size())];
            scaled_gradient_step(l, x, y, c1, v);
            const double next = norm(sub(l.w, v));
            CHECK(next <= dist + 1e-12);
            dist = next;
        }
    }

    // The same update realized through beta*x (solvable LSR case).
    for (int trial = 0; trial < 30; ++trial) {
        LinearLearner a;
        a.loss_kind = LossKind::LSR;
        a.eta = 0.05;
        a.w = {rng.normal(), rng.normal()};
        Vector w_star{rng.normal(), rng.normal()};
        Vector xv{rng.normal() + 1.5, rng.normal()};
        SoftLabel y;
        y.y[0] = std::max(rng.normal(), 0.1);
        const FeatureVector x(xv);
        const double c1 = 0.4;
        const double target = c1 * norm(sub(a.w, w_star));
        double beta = 0.0;
        try {
            beta = solve_beta(x, y, a, target, 100.0);
        } catch (const UnachievableBeta&) {
            continue;  // fine: the teacher falls back to the direct update
        }
        LinearLearner b = a;
        scaled_gradient_step(a, x, y, c1, w_star);
        FeatureVector xb = x;
        for (double& val : xb.values)
            val *= beta;
        b.sgd_update(xb, y);
        CHECK(norm(sub(a.w, b.w)) <= 1e-9);
    }
}

TEST_CASE("teach_episode basics: one-iteration log and sgd equivalence") {
    const LabeledDataset data = gen_halfmoon(60, 0.2, 51).lifted();
    const auto parts = split(data, {0.8, 0.2}, 1);
    const LabeledDataset train = parts[0], test = parts[1];
    const TargetWeights t = fit_target(train, LossKind::LR, {0.1, 2000, 1e-6});

    LinearLearner l;
    l.loss_kind = LossKind::LR;
    l.eta = 0.01;
    l.w = Vector(3, 0.25);

    RandomTeacher teacher(train);
    const TeachingTrace one = teach_episode(teacher, l, train, test, t.w_star, 1, 99);
    CHECK(one.rows.size() == 1);
    CHECK(one.rows[0].iter == 1);

    // The random teacher is plain SGD on a shuffled stream: replay the
    // stream by hand and compare the traces bit for bit.
    RandomTeacher teacher2(train);
    const TeachingTrace a = teach_episode(teacher2, l, train, test, t.w_star, 40, 7);
    LinearLearner manual = l;
    Rng rng(7);
    std::vector<std::size_t> order(train.examples.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.choice(i)]);
    for (int iter = 0; iter < 40; ++iter) {
        const auto& [x, y] = train.examples[order[iter]];
        manual.sgd_update(x, y);
        CHECK(a.rows[iter].w_dist_sq == sqnorm(sub(manual.w, t.w_star)));
    }

    CHECK_THROWS_AS(teach_episode(teacher, l, train, test, t.w_star, 0, 1),
                    std::invalid_argument);
}
