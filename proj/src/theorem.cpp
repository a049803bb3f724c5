#include "theorem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dht {

BoundConstants estimate_constants(const LabeledDataset& data, LossKind kind, const Vector& w_star,
                                  const std::vector<Vector>& trajectory) {
    if (trajectory.empty())
        throw std::invalid_argument("estimate_constants: empty trajectory");
    BoundConstants out;
    LinearLearner probe;
    probe.loss_kind = kind;

    double mu_sum = 0.0;
    for (const auto& [x, y] : data.examples) {
        double l_i = 0.0;
        double mu_i = std::numeric_limits<double>::infinity();
        probe.w = w_star;
        const double loss_star = probe.loss(x, y);
        for (const Vector& w : trajectory) {
            probe.w = w;
            const Vector grad = probe.grad_w(x, y);
            l_i = std::max(l_i, norm(grad));
            const Vector diff = sub(w_star, w);
            const double dist = norm(diff);
            if (dist < 1e-12)
                continue;
            // loss(w*) >= loss(w) + <grad, w* - w> + (mu/2) ||w - w*||
            const double implied =
                2.0 * (loss_star - probe.loss(x, y) - dot(grad, diff)) / dist;
            mu_i = std::min(mu_i, implied);
        }
        if (!std::isfinite(mu_i))
            mu_i = 0.0;
        mu_sum += std::max(mu_i, 0.0);
        out.l_max = std::max(out.l_max, l_i);
    }
    out.mu_bar = mu_sum / static_cast<double>(data.examples.size());
    return out;
}

ContractionReport verify_contraction(const LabeledDataset& data, LossKind kind, const Vector& w0,
                                     const Vector& w_star, const BoundConstants& constants, int T,
                                     std::uint64_t seed, double eps_target, long iter_cap) {
    ContractionReport report;
    report.constants = constants;
    if (!constants.valid()) {
        report.flagged = true;
        report.flag_reason = "c0 outside (0, 1)";
    }
    {
        // Interpolation check: w* must minimize every per-sample loss.
        LinearLearner probe;
        probe.loss_kind = kind;
        probe.w = w_star;
        for (const auto& [x, y] : data.examples) {
            if (norm(probe.grad_w(x, y)) > 1e-6) {
                report.flagged = true;
                report.flag_reason = "dataset violates the interpolation assumption";
                break;
            }
        }
    }

    LinearLearner learner;
    learner.loss_kind = kind;
    learner.eta = constants.eta;
    learner.w = w0;
    Rng rng(seed);

    double dist_sq = sqnorm(sub(learner.w, w_star));
    report.initial_dist_sq = dist_sq;
    report.ratios.reserve(T);
    std::vector<double> log_dist;
    log_dist.reserve(T + 1);
    log_dist.push_back(std::log(dist_sq));

    long iter = 0;
    while (iter < iter_cap) {
        ++iter;
        const auto& [x, y] = data.examples[rng.choice(data.examples.size())];
        scaled_gradient_step(learner, x, y, constants.c1, w_star);
        const double next_sq = sqnorm(sub(learner.w, w_star));
        if (iter <= T) {
            report.ratios.push_back(dist_sq > 0.0 ? next_sq / dist_sq : 1.0);
            log_dist.push_back(std::log(std::max(next_sq, 1e-300)));
        }
        dist_sq = next_sq;
        if (dist_sq <= eps_target) {
            report.iters_to_eps = iter;
            break;
        }
    }

    if (!report.ratios.empty()) {
        report.max_ratio = *std::max_element(report.ratios.begin(), report.ratios.end());
        double below = 0.0, total = 0.0;
        for (double r : report.ratios) {
            total += r;
            if (r <= report.constants.c0 + 1e-9)
                below += 1.0;
        }
        report.mean_ratio = total / static_cast<double>(report.ratios.size());
        report.frac_below_c0 = below / static_cast<double>(report.ratios.size());
    }

    {
        // Least-squares line through (t, log dist_sq_t) over the window.
        const std::size_t n = log_dist.size();
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sx += static_cast<double>(i);
            sy += log_dist[i];
            sxx += static_cast<double>(i) * static_cast<double>(i);
            sxy += static_cast<double>(i) * log_dist[i];
        }
        const double denom = n * sxx - sx * sx;
        report.fit_slope = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
        const double intercept = (sy - report.fit_slope * sx) / n;
        double ss_res = 0.0, ss_tot = 0.0;
        const double mean_y = sy / n;
        for (std::size_t i = 0; i < n; ++i) {
            const double pred = intercept + report.fit_slope * static_cast<double>(i);
            ss_res += (log_dist[i] - pred) * (log_dist[i] - pred);
            ss_tot += (log_dist[i] - mean_y) * (log_dist[i] - mean_y);
        }
        report.fit_r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    }

    if (report.constants.valid()) {
        report.theoretical_bound = static_cast<long>(
            std::ceil(std::log(report.initial_dist_sq / eps_target) /
                      std::log(1.0 / report.constants.c0)));
    }
    return report;
}

InterpolationInstance make_interpolation_lsr(int n, int dim, double cone_spread, double w0_dist,
                                             std::uint64_t seed) {
    if (dim < 1 || n < 1)
        throw std::invalid_argument("make_interpolation_lsr: bad shape");
    Rng rng(seed);
    InterpolationInstance inst;
    // Cone axis along the first coordinate; inputs are unit-norm vectors in
    // a tight cone so per-sample constants stay comparable.
    inst.data.dim = dim;
    inst.data.name = "interp_lsr";
    Vector v(dim);
    for (double& x : v)
        x = rng.normal();
    inst.w_star = v;

    for (int i = 0; i < n; ++i) {
        Vector x(dim, 0.0);
        x[0] = 1.0;
        for (int j = 1; j < dim; ++j)
            x[j] = cone_spread * rng.normal();
        const double xn = norm(x);
        for (double& val : x)
            val /= xn;
        const double label = dot(v, x);
        SoftLabel y;
        y.y[0] = std::max(label, 0.0);
        y.y[1] = std::max(-label, 0.0);
        inst.data.examples.emplace_back(FeatureVector(std::move(x)), y);
    }
    inst.data.recompute_box();

    inst.w0 = v;
    inst.w0[0] += w0_dist;  // start along the cone axis
    return inst;
}

ContractionReport run_theorem_verification(const InterpolationInstance& instance, int T,
                                           std::uint64_t seed) {
    // Pilot: plain SGD down to the target accuracy; its iterates span the
    // ball the verification run will traverse, which is where the constants
    // must hold.
    LinearLearner pilot;
    pilot.loss_kind = LossKind::LSR;
    pilot.eta = 0.5;
    pilot.w = instance.w0;
    Rng rng(Rng::derive_seed(seed, "theorem_pilot"));
    std::vector<Vector> trajectory{pilot.w};
    for (long it = 0; it < 200000; ++it) {
        const auto& [x, y] =
            instance.data.examples[rng.choice(instance.data.examples.size())];
        pilot.sgd_update(x, y);
        trajectory.push_back(pilot.w);
        if (sqnorm(sub(pilot.w, instance.w_star)) <= 1e-6)
            break;
    }

    BoundConstants constants =
        estimate_constants(instance.data, LossKind::LSR, instance.w_star, trajectory);
    const double eta = 1.0;
    const double c1 = constants.mu_bar / (2.0 * constants.l_max * constants.l_max);
    constants.finalize(c1, eta);

    return verify_contraction(instance.data, LossKind::LSR, instance.w0, instance.w_star,
                              constants, T, Rng::derive_seed(seed, "theorem_verify"));
}

}  // namespace dht
