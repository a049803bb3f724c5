#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "greedy.hpp"

namespace dht {

// Empirical Lipschitz / order-1 strong convexity constants over a
// trajectory, and the contraction constant they imply. c0 uses the
// appendix form with L_max squared; the main-text form (L_max unsquared)
// is reported alongside.
struct BoundConstants {
    double mu_bar = 0.0;
    double l_max = 0.0;
    double c1 = 0.0;
    double eta = 1.0;
    double c0 = 1.0;
    double c0_main_text = 1.0;

    void finalize(double c1_in, double eta_in) {
        c1 = c1_in;
        eta = eta_in;
        const double a = c1 * eta;
        c0 = 1.0 - a * mu_bar + a * a * l_max * l_max;
        c0_main_text = 1.0 - a * mu_bar + a * a * l_max;
    }
    bool valid() const { return c0 > 0.0 && c0 < 1.0; }
};

// L_i as the max gradient norm over the iterates; mu_i from the order-1
// strong convexity inequality, infimum over iterates, floored at 0.
BoundConstants estimate_constants(const LabeledDataset& data, LossKind kind, const Vector& w_star,
                                  const std::vector<Vector>& trajectory);

struct ContractionReport {
    std::vector<double> ratios;  // per-step squared-distance ratios over the window
    double max_ratio = 0.0;
    double mean_ratio = 0.0;
    double frac_below_c0 = 0.0;
    double fit_slope = 0.0;
    double fit_r2 = 0.0;
    long iters_to_eps = -1;  // -1 when the cap was hit
    long theoretical_bound = 0;
    double initial_dist_sq = 0.0;
    BoundConstants constants;
    bool flagged = false;
    std::string flag_reason;
};

// Runs T scaled-gradient steps with uniformly sampled indices, then keeps
// stepping until the squared distance reaches eps_target (or the cap).
ContractionReport verify_contraction(const LabeledDataset& data, LossKind kind, const Vector& w0,
                                     const Vector& w_star, const BoundConstants& constants, int T,
                                     std::uint64_t seed, double eps_target = 1e-6,
                                     long iter_cap = 50000000);

struct InterpolationInstance {
    LabeledDataset data;
    Vector w_star;
    Vector w0;
};

// LSR with exactly linear labels: every per-sample loss is minimized at
// w*, so the interpolation assumption holds by construction. Inputs sit
// in a tight cone of equal norms to keep the strong convexity estimates
// uniform across samples.
InterpolationInstance make_interpolation_lsr(int n, int dim, double cone_spread, double w0_dist,
                                             std::uint64_t seed);

// Pilot run (plain SGD to convergence) -> constants -> c1*eta =
// mu_bar / (2 L_max^2) -> verification run.
ContractionReport run_theorem_verification(const InterpolationInstance& instance, int T,
                                           std::uint64_t seed);

}  // namespace dht
