#include "policy.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace dht {

namespace {

// Data part of a (possibly lifted) example.
std::span<const double> data_part(const FeatureVector& x) {
    return std::span<const double>(x.values.data(), static_cast<std::size_t>(x.free_dim()));
}

Vector label_pair(const SoftLabel& y) { return Vector{y.y[0], y.y[1]}; }

int scalar_zero(Tape& tape) { return tape.constant_scalar(0.0); }

}  // namespace

Vector TransformPolicy::make_input(const Vector& w, const Vector* w_star,
                                   std::span<const double> x_data, double y_scalar) const {
    Vector in;
    in.reserve(net.input_dim());
    in.insert(in.end(), w.begin(), w.end());
    if (layout == PolicyLayout::Omniscient) {
        if (!w_star)
            throw std::invalid_argument("omniscient policy needs w*");
        for (std::size_t i = 0; i < w.size(); ++i)
            in.push_back(w[i] - (*w_star)[i]);
    }
    in.insert(in.end(), x_data.begin(), x_data.end());
    in.push_back(y_scalar);
    return in;
}

FeatureVector TransformPolicy::synthesize(const Vector& w, const Vector* w_star,
                                          const FeatureVector& x, const SoftLabel& y) const {
    const Vector in = make_input(w, w_star, data_part(x), y.scalar());
    Vector out = net.forward(in);
    FeatureVector xt(std::move(out), false);
    if (x.has_bias) {
        xt.values.push_back(1.0);
        xt.has_bias = true;
    }
    return xt;
}

namespace {

// Shared unroll machinery. Builds the v-step learner rollout with the
// policy in the loop; when val is non-null the outer loss is the mean
// validation loss at w^v, otherwise distance-to-target plus the
// stop-gradient auxiliary term.
UnrollGraph build_graph_impl(const TransformPolicy& policy, const Vector& w0, double eta,
                             LossKind kind, const LabeledDataset& data, const Vector* w_star,
                             const LabeledDataset* val, const UnrollConfig& cfg, Rng& rng,
                             const ObjectiveExtension& extra,
                             const std::vector<Vector>* frozen_sg = nullptr) {
    UnrollGraph g;
    Tape& tape = g.tape;
    g.params = policy.net.register_params(tape);
    const bool omniscient = policy.layout == PolicyLayout::Omniscient;
    const int w_star_c = omniscient || !val ? tape.constant(*w_star) : -1;
    const int one_c = tape.constant_scalar(1.0);

    int w_node = tape.constant(w0);
    g.live_w.push_back(w_node);
    int aux_sum = scalar_zero(tape);
    int extra_sum = extra ? scalar_zero(tape) : -1;

    for (int i = 0; i < cfg.v; ++i) {
        const auto& [x, ylab] = data.examples[rng.choice(data.examples.size())];
        const int x_c = tape.constant(data_part(x));
        const int y1_c = tape.constant_scalar(ylab.scalar());
        const int y2_c = tape.constant(label_pair(ylab));

        auto policy_input = [&](int w_in) {
            int in_node = w_in;
            if (omniscient)
                in_node = tape.concat(in_node, tape.sub(w_in, w_star_c));
            return tape.concat(tape.concat(in_node, x_c), y1_c);
        };

        const int out = policy.net.forward_tape(tape, g.params, policy_input(w_node));
        const int x_t = x.has_bias ? tape.concat(out, one_c) : out;
        const int s = tape.dot(w_node, x_t);
        const int gm = gamma_node(tape, kind, s, y2_c);
        const int w_next = tape.sub(w_node, tape.scale(tape.smul(gm, x_t), eta));

        if (!val) {
            // Auxiliary loss at detached learner weights: fresh leaves carry
            // the same values but are cut off from the unrolled chain.
            auto wspan = tape.value(w_node);
            const Vector w_copy = frozen_sg ? (*frozen_sg)[i]
                                            : Vector(wspan.begin(), wspan.end());
            const int w_sg = tape.leaf(w_copy);
            g.sg_w.push_back(w_sg);
            const int out_sg = policy.net.forward_tape(tape, g.params, policy_input(w_sg));
            const int x_sg = x.has_bias ? tape.concat(out_sg, one_c) : out_sg;
            const int s_sg = tape.dot(w_sg, x_sg);
            aux_sum = tape.add(aux_sum, loss_node(tape, kind, s_sg, y2_c));
        }
        if (extra)
            extra_sum = tape.add(extra_sum, extra(tape, x_t));

        w_node = w_next;
        g.live_w.push_back(w_node);
    }

    if (val) {
        int loss_sum = scalar_zero(tape);
        for (const auto& [xv, yv] : val->examples) {
            const int sv = tape.dot(w_node, tape.constant(xv.values));
            loss_sum = tape.add(loss_sum, loss_node(tape, kind, sv, tape.constant(label_pair(yv))));
        }
        g.outer_node = tape.scale(loss_sum, 1.0 / static_cast<double>(val->examples.size()));
    } else {
        g.dist_node = tape.sqnorm_(tape.sub(w_node, w_star_c));
        g.aux_sum_node = aux_sum;
        g.outer_node = tape.add(g.dist_node, tape.scale(aux_sum, cfg.alpha));
    }
    if (extra)
        g.outer_node = tape.add(g.outer_node, extra_sum);
    return g;
}

double apply_teacher_step(TinyMlp& net, Tape& tape, const TinyMlp::TapeParams& params,
                          int outer_node, AdamState& opt) {
    const double outer = tape.scalar(outer_node);
    if (!std::isfinite(outer))
        throw std::runtime_error("unrolled teacher update: non-finite outer loss at t=" +
                                 std::to_string(opt.t() + 1));
    tape.backward(outer_node);
    Vector flat = net.flatten_params();
    const Vector grad = net.collect_grad(tape, params);
    opt.step(flat, grad);
    net.set_params(flat);
    return outer;
}

}  // namespace

UnrollGraph build_unroll_graph(const TransformPolicy& policy, const Vector& w0, double eta,
                               LossKind kind, const LabeledDataset& data, const Vector& w_star,
                               const UnrollConfig& cfg, Rng& rng, const ObjectiveExtension& extra,
                               const std::vector<Vector>* frozen_sg) {
    return build_graph_impl(policy, w0, eta, kind, data, &w_star, nullptr, cfg, rng, extra,
                            frozen_sg);
}

double unrolled_teacher_update(TransformPolicy& policy, AdamState& opt, const Vector& w0,
                               double eta, LossKind kind, const LabeledDataset& data,
                               const Vector& w_star, const UnrollConfig& cfg, Rng& rng,
                               const ObjectiveExtension& extra) {
    UnrollGraph g = build_unroll_graph(policy, w0, eta, kind, data, w_star, cfg, rng, extra);
    return apply_teacher_step(policy.net, g.tape, g.params, g.outer_node, opt);
}

UnrollGraph build_blackbox_graph(const TransformPolicy& policy, const Vector& w0, double eta,
                                 LossKind kind, const LabeledDataset& train,
                                 const LabeledDataset& val, const UnrollConfig& cfg, Rng& rng) {
    if (policy.layout != PolicyLayout::BlackBox)
        throw std::invalid_argument("black-box update needs a black-box layout policy");
    return build_graph_impl(policy, w0, eta, kind, train, nullptr, &val, cfg, rng, nullptr);
}

double blackbox_unrolled_update(TransformPolicy& policy, AdamState& opt, const Vector& w0,
                                double eta, LossKind kind, const LabeledDataset& train,
                                const LabeledDataset& val, const UnrollConfig& cfg, Rng& rng) {
    UnrollGraph g = build_blackbox_graph(policy, w0, eta, kind, train, val, cfg, rng);
    return apply_teacher_step(policy.net, g.tape, g.params, g.outer_node, opt);
}

namespace {

// -0.5 * sum(1 + logvar - mu^2 - exp(logvar))
int kl_to_standard_normal(Tape& tape, int mu, int logvar, int latent_dim) {
    const int k_c = tape.constant_scalar(static_cast<double>(latent_dim));
    const int pos = tape.add(k_c, tape.sum(logvar));
    const int neg = tape.add(tape.sqnorm_(mu), tape.sum(tape.exp_(logvar)));
    return tape.scale(tape.sub(pos, neg), -0.5);
}

}  // namespace

VaeTeacher pretrain_vae(const LabeledDataset& data, const VaePretrainOptions& opts, Rng& rng) {
    if (data.examples.empty())
        throw std::invalid_argument("pretrain_vae: empty dataset");
    const int d = data.examples.front().first.free_dim();
    const int k = opts.latent_dim;

    VaeTeacher teacher;
    teacher.latent_dim = k;
    std::vector<int> enc_dims{d + 2};
    enc_dims.insert(enc_dims.end(), opts.enc_hidden.begin(), opts.enc_hidden.end());
    enc_dims.push_back(2 * k);
    teacher.encoder = TinyMlp(enc_dims, Activation::Relu, 0.0, rng);
    std::vector<int> dec_dims{k + 2};
    dec_dims.insert(dec_dims.end(), opts.dec_hidden.begin(), opts.dec_hidden.end());
    dec_dims.push_back(d);
    teacher.decoder = TinyMlp(dec_dims, Activation::Relu, 0.0, rng);

    AdamConfig acfg;
    acfg.step_size = opts.lr;
    acfg.beta1 = 0.9;
    AdamState enc_opt(teacher.encoder.param_count(), acfg);
    AdamState dec_opt(teacher.decoder.param_count(), acfg);

    std::vector<std::size_t> order(data.examples.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.choice(i)]);
        for (std::size_t start = 0; start < order.size(); start += opts.batch) {
            const std::size_t stop = std::min(order.size(), start + opts.batch);
            Tape tape;
            const auto enc_params = teacher.encoder.register_params(tape);
            const auto dec_params = teacher.decoder.register_params(tape);
            int loss_sum = tape.constant_scalar(0.0);
            for (std::size_t j = start; j < stop; ++j) {
                const auto& [x, y] = data.examples[order[j]];
                const int x_c = tape.constant(data_part(x));
                const int y_c = tape.constant(label_pair(y));
                const int enc_out =
                    teacher.encoder.forward_tape(tape, enc_params, tape.concat(x_c, y_c));
                const int mu = tape.slice(enc_out, 0, k);
                const int logvar = tape.slice(enc_out, k, k);
                Vector eps(k);
                for (double& e : eps)
                    e = rng.normal();
                const int u = tape.add(
                    mu, tape.mul(tape.exp_(tape.scale(logvar, 0.5)), tape.constant(eps)));
                const int recon =
                    teacher.decoder.forward_tape(tape, dec_params, tape.concat(u, y_c));
                const int rec_loss = tape.sqnorm_(tape.sub(x_c, recon));
                const int kl = kl_to_standard_normal(tape, mu, logvar, k);
                loss_sum = tape.add(loss_sum, tape.add(rec_loss, tape.scale(kl, opts.beta_kl)));
            }
            const int loss = tape.scale(loss_sum, 1.0 / static_cast<double>(stop - start));
            tape.backward(loss);

            Vector enc_flat = teacher.encoder.flatten_params();
            enc_opt.step(enc_flat, teacher.encoder.collect_grad(tape, enc_params));
            teacher.encoder.set_params(enc_flat);
            Vector dec_flat = teacher.decoder.flatten_params();
            dec_opt.step(dec_flat, teacher.decoder.collect_grad(tape, dec_params));
            teacher.decoder.set_params(dec_flat);
        }
    }
    return teacher;
}

double vae_recon_mse(const VaeTeacher& teacher, const LabeledDataset& data, Rng& rng) {
    const int k = teacher.latent_dim;
    double total = 0.0;
    for (const auto& [x, y] : data.examples) {
        Vector in(data_part(x).begin(), data_part(x).end());
        in.push_back(y.y[0]);
        in.push_back(y.y[1]);
        const Vector enc = teacher.encoder.forward(in);
        Vector u(k);
        for (int i = 0; i < k; ++i)
            u[i] = enc[i] + std::exp(0.5 * enc[k + i]) * rng.normal();
        const FeatureVector recon = decode_example(teacher, u, y, false);
        double err = 0.0;
        for (int i = 0; i < static_cast<int>(recon.values.size()); ++i) {
            const double dv = recon.values[i] - x.values[i];
            err += dv * dv;
        }
        total += err;
    }
    return total / static_cast<double>(data.examples.size());
}

FeatureVector decode_example(const VaeTeacher& teacher, const Vector& u, const SoftLabel& y,
                             bool lifted) {
    Vector in(u);
    in.push_back(y.y[0]);
    in.push_back(y.y[1]);
    Vector out = teacher.decoder.forward(in);
    FeatureVector x(std::move(out), false);
    if (lifted) {
        x.values.push_back(1.0);
        x.has_bias = true;
    }
    return x;
}

VaeUpdateResult vae_teacher_update(VaeTeacher& teacher, AdamState& opt, const Vector& w0,
                                   double eta, LossKind kind, const LabeledDataset& data,
                                   const Vector& w_star, const UnrollConfig& cfg, Rng& rng) {
    Tape tape;
    const auto pol_params = teacher.policy.register_params(tape);
    const auto dec_consts = teacher.decoder.register_constants(tape);
    const int w_star_c = tape.constant(w_star);
    const int one_c = tape.constant_scalar(1.0);
    const bool lifted = data.examples.front().first.has_bias;

    int w_node = tape.constant(w0);
    int aux_sum = tape.constant_scalar(0.0);
    int kl_sum = tape.constant_scalar(0.0);

    for (int i = 0; i < cfg.v; ++i) {
        const auto& [x, ylab] = data.examples[rng.choice(data.examples.size())];
        const int x_c = tape.constant(data_part(x));
        const int y1_c = tape.constant_scalar(ylab.scalar());
        const int y2_c = tape.constant(label_pair(ylab));

        auto policy_input = [&](int w_in) {
            return tape.concat(tape.concat(tape.concat(w_in, tape.sub(w_in, w_star_c)), x_c), y1_c);
        };
        auto decode = [&](int u_node) {
            return teacher.decoder.forward_tape(tape, dec_consts, tape.concat(u_node, y2_c));
        };

        const int u = teacher.policy.forward_tape(tape, pol_params, policy_input(w_node));
        const int xt_data = decode(u);
        const int x_t = lifted ? tape.concat(xt_data, one_c) : xt_data;
        const int s = tape.dot(w_node, x_t);
        const int gm = gamma_node(tape, kind, s, y2_c);
        const int w_next = tape.sub(w_node, tape.scale(tape.smul(gm, x_t), eta));

        // Policy output treated as the mean of a unit-variance Gaussian:
        // KL to the standard-normal prior reduces to ||u||^2 / 2.
        kl_sum = tape.add(kl_sum, tape.scale(tape.sqnorm_(u), 0.5));

        auto wspan = tape.value(w_node);
        const Vector w_copy(wspan.begin(), wspan.end());
        const int w_sg = tape.leaf(w_copy);
        const int u_sg = teacher.policy.forward_tape(tape, pol_params, policy_input(w_sg));
        const int xsg_data = decode(u_sg);
        const int x_sg = lifted ? tape.concat(xsg_data, one_c) : xsg_data;
        const int s_sg = tape.dot(w_sg, x_sg);
        aux_sum = tape.add(aux_sum, loss_node(tape, kind, s_sg, y2_c));

        w_node = w_next;
    }

    const int dist = tape.sqnorm_(tape.sub(w_node, w_star_c));
    const int kl_mean = tape.scale(kl_sum, 1.0 / static_cast<double>(cfg.v));
    const int outer = tape.add(tape.add(dist, tape.scale(aux_sum, cfg.alpha)),
                               tape.scale(kl_mean, cfg.kl_weight));

    VaeUpdateResult res;
    res.kl_term = tape.scalar(kl_mean);
    res.outer_loss = apply_teacher_step(teacher.policy, tape, pol_params, outer, opt);
    return res;
}

GanUpdateResult gan_teacher_update(GanTeacher& teacher, AdamState& gen_opt, AdamState& disc_opt,
                                   const Vector& w0, double eta, LossKind kind,
                                   const LabeledDataset& data, const Vector& w_star,
                                   const UnrollConfig& cfg, Rng& rng) {
    GanUpdateResult res;
    const bool lifted = data.examples.front().first.has_bias;
    std::vector<Vector> fake_data;
    std::vector<SoftLabel> fake_labels;

    {  // generator pass on the unrolled outer loss
        Tape tape;
        const auto gen_params = teacher.generator.register_params(tape);
        const auto disc_consts = teacher.discriminator.register_constants(tape);
        const int w_star_c = tape.constant(w_star);
        const int one_c = tape.constant_scalar(1.0);

        int w_node = tape.constant(w0);
        int aux_sum = tape.constant_scalar(0.0);
        int adv_sum = tape.constant_scalar(0.0);

        for (int i = 0; i < cfg.v; ++i) {
            const SoftLabel ylab = data.examples[rng.choice(data.examples.size())].second;
            Vector z(teacher.noise_dim);
            for (double& v : z)
                v = rng.normal();
            const int z_c = tape.constant(z);
            const int y1_c = tape.constant_scalar(ylab.scalar());
            const int y2_c = tape.constant(label_pair(ylab));

            auto gen_input = [&](int w_in) {
                return tape.concat(tape.concat(tape.concat(z_c, w_in), tape.sub(w_in, w_star_c)),
                                   y1_c);
            };
            const int xt_data = teacher.generator.forward_tape(tape, gen_params, gen_input(w_node));
            const int x_t = lifted ? tape.concat(xt_data, one_c) : xt_data;
            const int s = tape.dot(w_node, x_t);
            const int gm = gamma_node(tape, kind, s, y2_c);
            const int w_next = tape.sub(w_node, tape.scale(tape.smul(gm, x_t), eta));

            // Non-saturating adversarial term -log D(x~).
            const int logit = teacher.discriminator.forward_tape(
                tape, disc_consts, tape.concat(xt_data, y2_c), true, &rng);
            adv_sum = tape.add(adv_sum, tape.softplus(tape.scale(logit, -1.0)));

            auto wspan = tape.value(w_node);
            const Vector w_copy(wspan.begin(), wspan.end());
            const int w_sg = tape.leaf(w_copy);
            const int xsg_data =
                teacher.generator.forward_tape(tape, gen_params, gen_input(w_sg));
            const int x_sg = lifted ? tape.concat(xsg_data, one_c) : xsg_data;
            aux_sum = tape.add(aux_sum, loss_node(tape, kind, tape.dot(w_sg, x_sg), y2_c));

            auto xt_span = tape.value(xt_data);
            fake_data.emplace_back(xt_span.begin(), xt_span.end());
            fake_labels.push_back(ylab);
            w_node = w_next;
        }

        const int dist = tape.sqnorm_(tape.sub(w_node, w_star_c));
        const int adv_mean = tape.scale(adv_sum, 1.0 / static_cast<double>(cfg.v));
        const int outer = tape.add(tape.add(dist, tape.scale(aux_sum, cfg.alpha)),
                                   tape.scale(adv_mean, cfg.adv_weight));
        res.adv_term = tape.scalar(adv_mean);
        res.outer_loss = apply_teacher_step(teacher.generator, tape, gen_params, outer, gen_opt);
        if (std::isnan(res.outer_loss))
            throw std::runtime_error("gan generator loss is NaN");
    }

    {  // discriminator pass: ascend log D(x) + log(1 - D(x~))
        Tape tape;
        const auto disc_params = teacher.discriminator.register_params(tape);
        int loss_sum = tape.constant_scalar(0.0);
        for (std::size_t i = 0; i < fake_data.size(); ++i) {
            const auto& [xr, yr] = data.examples[rng.choice(data.examples.size())];
            const int real_logit = teacher.discriminator.forward_tape(
                tape, disc_params, tape.concat(tape.constant(data_part(xr)),
                                               tape.constant(label_pair(yr))),
                true, &rng);
            const int fake_logit = teacher.discriminator.forward_tape(
                tape, disc_params, tape.concat(tape.constant(fake_data[i]),
                                               tape.constant(label_pair(fake_labels[i]))),
                true, &rng);
            // -log D(real) - log(1 - D(fake))
            loss_sum = tape.add(loss_sum, tape.add(tape.softplus(tape.scale(real_logit, -1.0)),
                                                   tape.softplus(fake_logit)));
        }
        const int loss = tape.scale(loss_sum, 1.0 / static_cast<double>(fake_data.size()));
        res.d_loss = tape.scalar(loss);
        if (std::isnan(res.d_loss))
            throw std::runtime_error("gan discriminator loss is NaN");
        tape.backward(loss);
        Vector flat = teacher.discriminator.flatten_params();
        disc_opt.step(flat, teacher.discriminator.collect_grad(tape, disc_params));
        teacher.discriminator.set_params(flat);
    }
    return res;
}

PrivacyConstraint make_privacy_constraint(const LabeledDataset& data, int set_size, double eps,
                                          double lambda, std::uint64_t seed) {
    if (set_size <= 0 || static_cast<std::size_t>(set_size) > data.examples.size())
        throw std::invalid_argument("make_privacy_constraint: bad set size");
    PrivacyConstraint pc;
    pc.eps_priv = eps;
    pc.lambda_priv = lambda;
    Rng rng(seed);
    const int d = data.examples.front().first.free_dim();
    pc.phi = TinyMlp({d, 64, 16}, Activation::Relu, 0.0, rng);
    std::vector<std::size_t> idx(data.examples.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.choice(i)]);
    for (int i = 0; i < set_size; ++i)
        pc.privacy_set.push_back(data.examples[idx[i]].first);
    return pc;
}

double privacy_penalty(const FeatureVector& x_tilde, const FeatureVector& x,
                       const PrivacyConstraint& pc) {
    const Vector et = pc.phi.forward(data_part(x_tilde));
    const Vector ex = pc.phi.forward(data_part(x));
    const double d2 = sqnorm(sub(et, ex));
    return pc.lambda_priv * std::max(0.0, pc.eps_priv - d2);
}

ObjectiveExtension make_privacy_extension(const PrivacyConstraint& pc) {
    // Embeddings of the privacy set are fixed; precompute them once.
    auto ref_embeds = std::make_shared<std::vector<Vector>>();
    for (const FeatureVector& p : pc.privacy_set)
        ref_embeds->push_back(pc.phi.forward(data_part(p)));
    const TinyMlp* phi = &pc.phi;
    const double eps = pc.eps_priv;
    const double lambda = pc.lambda_priv;
    const int d = pc.privacy_set.empty() ? 0 : pc.privacy_set.front().free_dim();

    return [phi, ref_embeds, eps, lambda, d](Tape& tape, int x_node) {
        const int x_data = static_cast<int>(tape.value(x_node).size()) > d
                               ? tape.slice(x_node, 0, d)
                               : x_node;
        const auto consts = phi->register_constants(tape);
        const int embed = phi->forward_tape(tape, consts, x_data);
        const int eps_c = tape.constant_scalar(eps);
        int total = tape.constant_scalar(0.0);
        for (const Vector& ref : *ref_embeds) {
            const int d2 = tape.sqnorm_(tape.sub(embed, tape.constant(ref)));
            total = tape.add(total, tape.relu(tape.sub(eps_c, d2)));
        }
        return tape.scale(total, lambda);
    };
}

double min_perceptual_distance(const FeatureVector& x_tilde, const PrivacyConstraint& pc) {
    const Vector et = pc.phi.forward(data_part(x_tilde));
    double best = std::numeric_limits<double>::infinity();
    for (const FeatureVector& p : pc.privacy_set)
        best = std::min(best, sqnorm(sub(et, pc.phi.forward(data_part(p)))));
    return best;
}

TeachingAction TransformPolicyTeacher::propose(const LinearLearner& learner, int, Rng& rng) {
    const auto& [x, y] = pool_->examples[rng.choice(pool_->examples.size())];
    TeachingAction action;
    action.x = policy_->synthesize(learner.w, w_star_.empty() ? nullptr : &w_star_, x, y);
    action.y = y;
    return action;
}

TeachingAction VaePolicyTeacher::propose(const LinearLearner& learner, int, Rng& rng) {
    const auto& [x, y] = pool_->examples[rng.choice(pool_->examples.size())];
    Vector in(learner.w);
    for (std::size_t i = 0; i < learner.w.size(); ++i)
        in.push_back(learner.w[i] - w_star_[i]);
    auto xd = data_part(x);
    in.insert(in.end(), xd.begin(), xd.end());
    in.push_back(y.scalar());
    const Vector u = teacher_->policy.forward(in);
    TeachingAction action;
    action.x = decode_example(*teacher_, u, y, x.has_bias);
    action.y = y;
    return action;
}

TeachingAction GanPolicyTeacher::propose(const LinearLearner& learner, int, Rng& rng) {
    const SoftLabel y = pool_->examples[rng.choice(pool_->examples.size())].second;
    Vector in;
    for (int i = 0; i < teacher_->noise_dim; ++i)
        in.push_back(rng.normal());
    in.insert(in.end(), learner.w.begin(), learner.w.end());
    for (std::size_t i = 0; i < learner.w.size(); ++i)
        in.push_back(learner.w[i] - w_star_[i]);
    in.push_back(y.scalar());
    Vector out = teacher_->generator.forward(in);
    TeachingAction action;
    action.x = FeatureVector(std::move(out), false);
    if (!pool_->examples.empty() && pool_->examples.front().first.has_bias) {
        action.x.values.push_back(1.0);
        action.x.has_bias = true;
    }
    action.y = y;
    return action;
}

}  // namespace dht
