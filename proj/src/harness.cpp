#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "greedy.hpp"
#include "mixup.hpp"
#include "performative.hpp"
#include "policy.hpp"

namespace fs = std::filesystem;

namespace dht {

namespace {

struct BinarySplits {
    LabeledDataset train, val, test;
    bool has_val = false;
};

BinarySplits build_binary_dataset(const RunConfig& cfg) {
    const std::string kind = cfg.get_string("dataset.kind", "halfmoon");
    const std::uint64_t seed = cfg.get_seed("dataset.seed", 7);
    LabeledDataset raw;
    if (kind == "halfmoon") {
        raw = gen_halfmoon(static_cast<int>(cfg.get_long("dataset.n", 1000)),
                           cfg.get_double("dataset.noise", 0.2), seed);
    } else if (kind == "blobs") {
        raw = gen_blobs(static_cast<int>(cfg.get_long("dataset.n", 1000)),
                        static_cast<int>(cfg.get_long("dataset.dim", 24)),
                        cfg.get_double("dataset.separation", 4.0), seed);
    } else if (kind == "csv") {
        raw = load_csv(cfg.require_string("dataset.path"));
    } else if (kind == "idx") {
        raw = load_idx(cfg.require_string("dataset.images"), cfg.require_string("dataset.labels"),
                       static_cast<int>(cfg.get_long("dataset.class_pos", 3)),
                       static_cast<int>(cfg.get_long("dataset.class_neg", 5)),
                       static_cast<int>(cfg.get_long("dataset.per_class_cap", 550)));
    } else {
        throw std::runtime_error("unknown dataset.kind '" + kind + "'");
    }

    const int project_dim = static_cast<int>(cfg.get_long("dataset.project_dim", 0));
    if (project_dim > 0) {
        const ProjectionMatrix p =
            make_projection(raw.dim, project_dim, cfg.get_seed("dataset.project_seed", seed + 1));
        raw = project_features(raw, p);
    }
    apply_label_noise(raw, cfg.get_double("dataset.label_noise", 0.0),
                      Rng::derive_seed(seed, "label_noise"));

    const std::vector<double> fracs = cfg.get_double_list("dataset.split", {0.8, 0.2});
    if (fracs.size() != 2 && fracs.size() != 3)
        throw std::runtime_error("dataset.split must have 2 or 3 fractions");
    std::vector<LabeledDataset> parts = split(raw, fracs, Rng::derive_seed(seed, "split"));

    BinarySplits out;
    out.train = parts[0].lifted();
    if (fracs.size() == 3) {
        out.val = parts[1].lifted();
        out.test = parts[2].lifted();
        out.has_val = true;
    } else {
        out.test = parts[1].lifted();
    }
    return out;
}

struct McSplits {
    MulticlassDataset train, test;
};

McSplits build_multiclass_dataset(const RunConfig& cfg) {
    const int n = static_cast<int>(cfg.get_long("dataset.n", 4500));
    const int dim = static_cast<int>(cfg.get_long("dataset.dim", 24));
    const int classes = static_cast<int>(cfg.get_long("dataset.classes", 3));
    const double sep = cfg.get_double("dataset.separation", 4.0);
    const std::uint64_t seed = cfg.get_seed("dataset.seed", 7);
    const MulticlassDataset all = gen_blobs_multiclass(n, dim, classes, sep, seed);
    const std::vector<double> fracs = cfg.get_double_list("dataset.split", {0.67, 0.33});
    const int n_train = static_cast<int>(std::lround(fracs[0] * n));
    McSplits out;
    out.train.dim = out.test.dim = dim;
    out.train.n_classes = out.test.n_classes = classes;
    // Classes are interleaved at generation, so a prefix split stays
    // stratified.
    for (int i = 0; i < n; ++i)
        (i < n_train ? out.train : out.test).examples.push_back(all.examples[i]);
    return out;
}

SynthesisOptions synthesis_options(const RunConfig& cfg) {
    SynthesisOptions opt;
    opt.steps = static_cast<int>(cfg.get_long("teacher.synth_steps", 300));
    opt.adam.step_size = cfg.get_double("teacher.synth_lr", 0.02);
    opt.adam.beta1 = cfg.get_double("teacher.synth_beta1", 0.8);
    opt.adam.beta2 = cfg.get_double("teacher.synth_beta2", 0.999);
    return opt;
}

SynthesisConstraints synthesis_constraints(const RunConfig& cfg, const LabeledDataset& train) {
    SynthesisConstraints c = SynthesisConstraints::from_box(train);
    c.label_norm_cap = cfg.get_double("teacher.label_cap", 2.0);
    c.label_floor = cfg.get_double("teacher.label_floor", 1e-4);
    return c;
}

UnrollConfig unroll_config(const RunConfig& cfg) {
    UnrollConfig u;
    u.v = static_cast<int>(cfg.get_long("teacher.unroll_v", 40));
    u.alpha = cfg.get_double("teacher.alpha", 1.0);
    u.outer_iters = static_cast<int>(cfg.get_long("teacher.outer_iters", 1000));
    u.teacher_opt.step_size = cfg.get_double("teacher.teacher_lr", 0.002);
    u.teacher_opt.beta1 = 0.9;
    u.kl_weight = cfg.get_double("teacher.kl_weight", 1.0);
    u.adv_weight = cfg.get_double("teacher.adv_weight", 1.0);
    return u;
}

PerformativeConfig performative_config(const RunConfig& cfg) {
    PerformativeConfig p;
    p.n_w = static_cast<int>(cfg.get_long("performative.n_w", 5));
    p.feat_steps = static_cast<int>(cfg.get_long("performative.feat_steps", 15));
    p.eps = cfg.get_double("performative.eps", 0.1);
    p.batch_m = static_cast<int>(cfg.get_long("performative.batch_m", 32));
    p.feat_lr = cfg.get_double("performative.feat_lr", 0.02);
    p.lr = cfg.get_double("performative.lr", 0.05);
    return p;
}

// Everything a single (teacher, seed) task needs, built once per config.
struct ExperimentContext {
    RunConfig cfg;
    std::string out_dir;
    BinarySplits data;
    McSplits mc;
    bool has_binary = false;
    bool has_mc = false;
    TargetWeights target;
    LossKind loss_kind = LossKind::LR;
    double eta = 0.001;
    double w0_scale = 1.0;
    int T = 300;
    SynthesisOptions synth;
    SynthesisConstraints constraints;
    UnrollConfig unroll;
    std::unique_ptr<VaeTeacher> vae_pretrained;
    std::unique_ptr<PrivacyConstraint> privacy;
};

bool is_performative_kind(const std::string& kind) {
    return kind.rfind("performative_", 0) == 0;
}

Vector draw_w0(const ExperimentContext& ctx, std::uint64_t seed) {
    Rng rng(Rng::derive_seed(seed, "w0"));
    Vector w0(ctx.data.train.dim);
    for (double& v : w0)
        v = rng.normal(0.0, ctx.w0_scale);
    return w0;
}

std::vector<int> policy_hidden(const RunConfig& cfg) {
    return cfg.get_int_list("teacher.policy_hidden", {32, 16});
}

TeachingTrace run_one(ExperimentContext& ctx, const std::string& kind, std::uint64_t seed) {
    const std::uint64_t episode_seed = Rng::derive_seed(seed, "episode");

    if (kind == "mixup_pg") {
        LinearLearner learner0;
        learner0.loss_kind = ctx.loss_kind;
        learner0.eta = ctx.eta;
        learner0.w = draw_w0(ctx, seed);
        if (!ctx.data.has_val)
            throw std::runtime_error("mixup_pg needs a 3-way dataset.split");
        MixupPgOptions opts;
        opts.episodes = static_cast<int>(ctx.cfg.get_long("teacher.mixup_episodes", 300));
        opts.episode.epochs_per_episode =
            static_cast<int>(ctx.cfg.get_long("teacher.mixup_epochs", 2));
        std::vector<EpisodeLog> logs;
        train_mixup_policy_pg(learner0, ctx.data.train, ctx.data.val, opts, seed, &logs);
        TeachingTrace trace;
        for (std::size_t e = 0; e < logs.size(); ++e) {
            TraceRow row;
            row.iter = static_cast<int>(e + 1);
            row.w_dist_sq = 0.0;  // not tracked for reward-driven episodes
            row.train_loss = logs[e].mean_train_loss;
            row.test_acc = logs[e].reward;
            trace.rows.push_back(row);
        }
        return trace;
    }

    if (is_performative_kind(kind)) {
        PerformativePolicy policy = PerformativePolicy::None;
        if (kind == "performative_random")
            policy = PerformativePolicy::RandomCap;
        else if (kind == "performative_dht")
            policy = PerformativePolicy::Dht;
        else if (kind != "performative_sgd")
            throw std::runtime_error("unknown performative teacher '" + kind + "'");
        const PerformativeConfig pcfg = performative_config(ctx.cfg);
        EncoderClassifier model = make_encoder_classifier(
            ctx.mc.train.dim, ctx.cfg.get_int_list("performative.encoder_hidden", {32}),
            static_cast<int>(ctx.cfg.get_long("performative.feature_dim", 16)),
            ctx.mc.train.n_classes, Rng::derive_seed(seed, "perf_model"));
        const int iters = static_cast<int>(ctx.cfg.get_long("performative.iters", 1500));
        std::vector<double> objectives;
        TeachingTrace trace = performative_train(model, ctx.mc.train, ctx.mc.test, pcfg, policy,
                                                 iters, seed, &objectives);
        if (policy == PerformativePolicy::Dht) {
            std::ostringstream name;
            name << kind << "_seed" << seed << ".hallu";
            std::ofstream os(fs::path(ctx.out_dir) / name.str());
            os << "iter,mean_hallu_objective\n";
            os.precision(17);
            for (std::size_t i = 0; i < objectives.size(); ++i)
                os << (i + 1) << "," << objectives[i] << "\n";
        }
        return trace;
    }

    LinearLearner learner;
    learner.loss_kind = ctx.loss_kind;
    learner.eta = ctx.eta;
    learner.w = draw_w0(ctx, seed);
    const Vector& w_star = ctx.target.w_star;
    const LabeledDataset& pool = ctx.data.train;

    std::unique_ptr<Teacher> teacher;
    const int label_steps = static_cast<int>(ctx.cfg.get_long("teacher.label_steps", 300));
    const double label_lr = ctx.cfg.get_double("teacher.label_lr", 0.001);

    if (kind == "sgd") {
        teacher = std::make_unique<RandomTeacher>(pool);
    } else if (kind == "imt") {
        teacher = std::make_unique<ImtTeacher>(pool, w_star);
    } else if (kind == "imt_label") {
        teacher = std::make_unique<ImtTeacher>(pool, w_star, true, ctx.constraints, label_steps,
                                               label_lr);
    } else if (kind == "sgd_label") {
        teacher = std::make_unique<RandomLabelTeacher>(pool, w_star, ctx.constraints, label_steps,
                                                       label_lr);
    } else if (kind == "dht_greedy") {
        teacher = std::make_unique<DhtGreedyTeacher>(pool, w_star, ctx.constraints, ctx.synth);
    } else if (kind == "dht_label") {
        teacher = std::make_unique<DhtGreedyTeacher>(pool, w_star, ctx.constraints, ctx.synth,
                                                     true, nullptr, label_steps, label_lr);
    } else if (kind == "dht_privacy") {
        teacher = std::make_unique<DhtGreedyTeacher>(pool, w_star, ctx.constraints, ctx.synth,
                                                     false, make_privacy_extension(*ctx.privacy));
    } else if (kind == "scaling") {
        teacher = std::make_unique<ScalingTeacher>(pool, w_star,
                                                   ctx.cfg.get_double("teacher.c1", 1.0));
    } else if (kind == "transform" || kind == "blackbox") {
        const PolicyLayout layout =
            kind == "transform" ? PolicyLayout::Omniscient : PolicyLayout::BlackBox;
        Rng rng(Rng::derive_seed(seed, "policy_train"));
        TransformPolicy policy;
        policy.layout = layout;
        const int data_dim = pool.examples.front().first.free_dim();
        std::vector<int> dims{TransformPolicy::input_dim(layout, pool.dim, data_dim)};
        for (int h : policy_hidden(ctx.cfg))
            dims.push_back(h);
        dims.push_back(data_dim);
        policy.net = TinyMlp(dims, Activation::Relu, 0.0, rng);
        AdamState opt(policy.net.param_count(), ctx.unroll.teacher_opt);
        if (layout == PolicyLayout::BlackBox && !ctx.data.has_val)
            throw std::runtime_error("blackbox teacher needs a 3-way dataset.split");
        for (int it = 0; it < ctx.unroll.outer_iters; ++it) {
            if (layout == PolicyLayout::Omniscient)
                unrolled_teacher_update(policy, opt, learner.w, ctx.eta, ctx.loss_kind, pool,
                                        w_star, ctx.unroll, rng);
            else
                blackbox_unrolled_update(policy, opt, learner.w, ctx.eta, ctx.loss_kind, pool,
                                         ctx.data.val, ctx.unroll, rng);
        }
        teacher = std::make_unique<TransformPolicyTeacher>(
            policy, pool, layout == PolicyLayout::Omniscient ? w_star : Vector{});
        return teach_episode(*teacher, learner, pool, ctx.data.test, w_star, ctx.T, episode_seed);
    } else if (kind == "vae") {
        Rng rng(Rng::derive_seed(seed, "vae_policy_train"));
        VaeTeacher teacher_net = *ctx.vae_pretrained;  // frozen decoder, fresh policy
        const int data_dim = pool.examples.front().first.free_dim();
        std::vector<int> dims{2 * pool.dim + data_dim + 1};
        for (int h : policy_hidden(ctx.cfg))
            dims.push_back(h);
        dims.push_back(teacher_net.latent_dim);
        teacher_net.policy = TinyMlp(dims, Activation::Relu, 0.0, rng);
        AdamState opt(teacher_net.policy.param_count(), ctx.unroll.teacher_opt);
        for (int it = 0; it < ctx.unroll.outer_iters; ++it)
            vae_teacher_update(teacher_net, opt, learner.w, ctx.eta, ctx.loss_kind, pool, w_star,
                               ctx.unroll, rng);
        VaePolicyTeacher episode_teacher(teacher_net, pool, w_star);
        return teach_episode(episode_teacher, learner, pool, ctx.data.test, w_star, ctx.T,
                             episode_seed);
    } else if (kind == "gan") {
        Rng rng(Rng::derive_seed(seed, "gan_train"));
        GanTeacher teacher_net;
        teacher_net.noise_dim = static_cast<int>(ctx.cfg.get_long("teacher.noise_dim", 2));
        const int data_dim = pool.examples.front().first.free_dim();
        std::vector<int> gdims{teacher_net.noise_dim + 2 * pool.dim + 1};
        for (int h : policy_hidden(ctx.cfg))
            gdims.push_back(h);
        gdims.push_back(data_dim);
        teacher_net.generator = TinyMlp(gdims, Activation::Relu, 0.0, rng);
        teacher_net.discriminator =
            TinyMlp({data_dim + 2, 8, 1}, Activation::LeakyRelu, 0.3, rng);
        AdamState gen_opt(teacher_net.generator.param_count(), ctx.unroll.teacher_opt);
        AdamState disc_opt(teacher_net.discriminator.param_count(), ctx.unroll.teacher_opt);
        for (int it = 0; it < ctx.unroll.outer_iters; ++it)
            gan_teacher_update(teacher_net, gen_opt, disc_opt, learner.w, ctx.eta, ctx.loss_kind,
                               pool, w_star, ctx.unroll, rng);
        GanPolicyTeacher episode_teacher(teacher_net, pool, w_star);
        return teach_episode(episode_teacher, learner, pool, ctx.data.test, w_star, ctx.T,
                             episode_seed);
    } else {
        throw std::runtime_error("unknown teacher kind '" + kind + "'");
    }
    return teach_episode(*teacher, learner, pool, ctx.data.test, w_star, ctx.T, episode_seed);
}

struct AssertionSpec {
    std::string teacher_a, teacher_b, metric;
    int iter = 0;
    double margin = 0.0;
    std::string raw;
};

std::vector<AssertionSpec> parse_assertions(const RunConfig& cfg) {
    std::vector<AssertionSpec> out;
    for (const std::string& key : cfg.keys_with_prefix("assert.")) {
        const std::string spec = cfg.require_string(key);
        std::stringstream ss(spec);
        std::string a, b, metric, iter_s, margin_s;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') ||
            !std::getline(ss, metric, ',') || !std::getline(ss, iter_s, ','))
            throw std::runtime_error("bad assertion '" + spec +
                                     "' (want a,b,metric,iter[,margin])");
        AssertionSpec as;
        as.teacher_a = a;
        as.teacher_b = b;
        as.metric = metric;
        as.iter = std::stoi(iter_s);
        as.margin = std::getline(ss, margin_s, ',') ? std::stod(margin_s) : 0.0;
        as.raw = spec;
        out.push_back(as);
    }
    return out;
}

}  // namespace

std::string resolve_out_dir(const std::string& dir) {
    const char* root = std::getenv("DHT_OUT_ROOT");
    fs::path p(dir);
    if (root && *root && p.is_relative())
        p = fs::path(root) / p;
    return p.string();
}

RunResult run_experiment(const RunConfig& config, const std::string& out_dir_arg, int jobs) {
    ExperimentContext ctx;
    ctx.cfg = config;
    ctx.out_dir = resolve_out_dir(!out_dir_arg.empty() ? out_dir_arg
                                                       : config.get_string("run.out_dir", "out"));
    fs::create_directories(ctx.out_dir);

    const std::vector<std::string> kinds = config.get_string_list("teacher.kinds");
    if (kinds.empty())
        throw std::runtime_error("teacher.kinds must list at least one teacher");
    std::vector<std::uint64_t> seeds = config.get_seed_list("run.seeds");
    if (seeds.empty())
        seeds = {1};

    ctx.loss_kind = loss_kind_from_name(config.get_string("learner.loss", "lr"));
    ctx.eta = config.get_double("learner.eta", 0.001);
    ctx.w0_scale = config.get_double("learner.w0_scale", 1.0);
    ctx.T = static_cast<int>(config.get_long("run.T", 300));
    ctx.synth = synthesis_options(config);
    ctx.unroll = unroll_config(config);

    bool need_binary = false, need_mc = false;
    for (const std::string& k : kinds)
        (is_performative_kind(k) ? need_mc : need_binary) = true;
    if (need_binary) {
        ctx.data = build_binary_dataset(config);
        ctx.has_binary = true;
        ctx.target = fit_target(ctx.data.train, ctx.loss_kind);
        ctx.constraints = synthesis_constraints(config, ctx.data.train);
    }
    if (need_mc) {
        ctx.mc = build_multiclass_dataset(config);
        ctx.has_mc = true;
    }

    for (const std::string& k : kinds) {
        if (k == "vae" && !ctx.vae_pretrained) {
            // Pretrained once per dataset and shared across seeds; only the
            // per-seed policy is trained against the learner.
            VaePretrainOptions vopts;
            vopts.latent_dim = static_cast<int>(config.get_long("teacher.latent_dim", 2));
            vopts.epochs = static_cast<int>(config.get_long("teacher.vae_epochs", 30));
            vopts.beta_kl = config.get_double("teacher.beta_kl", 1.0);
            Rng rng(Rng::derive_seed(config.get_seed("dataset.seed", 7), "vae_pretrain"));
            ctx.vae_pretrained =
                std::make_unique<VaeTeacher>(pretrain_vae(ctx.data.train, vopts, rng));
        }
        if (k == "dht_privacy" && !ctx.privacy) {
            ctx.privacy = std::make_unique<PrivacyConstraint>(make_privacy_constraint(
                ctx.data.train,
                static_cast<int>(config.get_long("teacher.privacy_set_size", 20)),
                config.get_double("teacher.privacy_eps", 0.1),
                config.get_double("teacher.privacy_lambda", 100.0),
                config.get_seed("teacher.privacy_seed", 30)));
        }
    }

    struct Task {
        std::string kind;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (const std::string& k : kinds)
        for (std::uint64_t s : seeds)
            tasks.push_back({k, s});

    RunResult result;
    std::vector<std::string> files(tasks.size());
    const std::string config_hash = config.hash();

    auto run_task = [&](std::size_t i) {
        const Task& task = tasks[i];
        TeachingTrace trace = run_one(ctx, task.kind, task.seed);
        trace.meta["teacher"] = task.kind;
        trace.meta["seed"] = std::to_string(task.seed);
        trace.meta["config"] = config_hash;
        std::ostringstream name;
        name << task.kind << "_seed" << task.seed << ".csv";
        const std::string path = (fs::path(ctx.out_dir) / name.str()).string();
        save_trace_csv(trace, path);
        files[i] = path;
    };

    if (jobs <= 0)
        jobs = static_cast<int>(config.get_long("run.jobs", 1));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i)
            run_task(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        std::mutex error_mutex;
        std::string first_error;
        for (int w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= tasks.size())
                        return;
                    try {
                        run_task(i);
                    } catch (const std::exception& e) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (first_error.empty())
                            first_error = e.what();
                    }
                }
            });
        }
        for (std::thread& t : workers)
            t.join();
        if (!first_error.empty())
            throw std::runtime_error(first_error);
    }
    result.trace_files = files;

    const std::vector<AssertionSpec> asserts = parse_assertions(config);
    if (!asserts.empty()) {
        const AggregateStats stats = aggregate_dir(ctx.out_dir);
        for (const AssertionSpec& spec : asserts) {
            const CompareResult cr = compare_stats(stats, spec.teacher_a, spec.teacher_b,
                                                   spec.iter, spec.metric, spec.margin);
            AssertionResult ar;
            ar.description = spec.raw;
            ar.passed = cr.verdict == CompareVerdict::ABetter;
            ar.mean_a = cr.mean_a;
            ar.mean_b = cr.mean_b;
            result.assertions.push_back(ar);
        }
    }
    return result;
}

AggregateStats aggregate_traces(const std::vector<TeachingTrace>& traces) {
    std::map<std::string, std::vector<const TeachingTrace*>> by_teacher;
    for (const TeachingTrace& t : traces) {
        const auto it = t.meta.find("teacher");
        by_teacher[it == t.meta.end() ? "unknown" : it->second].push_back(&t);
    }
    AggregateStats stats;
    for (const auto& [teacher, group] : by_teacher) {
        const std::size_t T = group.front()->rows.size();
        for (const TeachingTrace* t : group)
            if (t->rows.size() != T)
                throw std::runtime_error("aggregate: mismatched iteration counts for teacher '" +
                                         teacher + "'");
        std::vector<AggRow> rows(T);
        for (std::size_t i = 0; i < T; ++i) {
            AggRow& r = rows[i];
            r.iter = group.front()->rows[i].iter;
            r.n = static_cast<int>(group.size());
            double sums[3] = {0, 0, 0}, sqs[3] = {0, 0, 0};
            for (const TeachingTrace* t : group) {
                const TraceRow& row = t->rows[i];
                const double v[3] = {row.w_dist_sq, row.train_loss, row.test_acc};
                for (int m = 0; m < 3; ++m) {
                    sums[m] += v[m];
                    sqs[m] += v[m] * v[m];
                }
            }
            const double n = static_cast<double>(group.size());
            double means[3], stds[3] = {0, 0, 0};
            for (int m = 0; m < 3; ++m) {
                means[m] = sums[m] / n;
                if (group.size() >= 2) {
                    const double var =
                        std::max(0.0, (sqs[m] - n * means[m] * means[m]) / (n - 1.0));
                    stds[m] = std::sqrt(var);
                }
            }
            r.mean_w_dist_sq = means[0];
            r.std_w_dist_sq = stds[0];
            r.mean_train_loss = means[1];
            r.std_train_loss = stds[1];
            r.mean_test_acc = means[2];
            r.std_test_acc = stds[2];
        }
        stats[teacher] = std::move(rows);
    }
    return stats;
}

AggregateStats aggregate_dir(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file())
            continue;
        const std::string name = entry.path().filename().string();
        if (entry.path().extension() != ".csv" || name == "aggregate.csv")
            continue;
        paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty())
        throw std::runtime_error("aggregate: no trace files in " + dir);
    std::vector<TeachingTrace> traces;
    traces.reserve(paths.size());
    for (const std::string& p : paths)
        traces.push_back(load_trace_csv(p));
    return aggregate_traces(traces);
}

void save_aggregate_csv(const AggregateStats& stats, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os)
            throw std::runtime_error("cannot write " + tmp);
        os << "teacher,iter,n,mean_w_dist_sq,std_w_dist_sq,mean_train_loss,std_train_loss,"
              "mean_test_acc,std_test_acc\n";
        char buf[64];
        auto field = [&](double v, bool blank) {
            if (blank)
                return std::string();
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            return std::string(buf);
        };
        for (const auto& [teacher, rows] : stats) {
            for (const AggRow& r : rows) {
                const bool single = r.n < 2;
                os << teacher << "," << r.iter << "," << r.n << ","
                   << field(r.mean_w_dist_sq, false) << "," << field(r.std_w_dist_sq, single)
                   << "," << field(r.mean_train_loss, false) << ","
                   << field(r.std_train_loss, single) << "," << field(r.mean_test_acc, false)
                   << "," << field(r.std_test_acc, single) << "\n";
            }
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp);
}

AggregateStats load_aggregate_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open " + path);
    AggregateStats stats;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        while (cells.size() < 9)
            cells.push_back("");
        AggRow r;
        r.iter = std::stoi(cells[1]);
        r.n = std::stoi(cells[2]);
        r.mean_w_dist_sq = std::stod(cells[3]);
        r.std_w_dist_sq = cells[4].empty() ? 0.0 : std::stod(cells[4]);
        r.mean_train_loss = std::stod(cells[5]);
        r.std_train_loss = cells[6].empty() ? 0.0 : std::stod(cells[6]);
        r.mean_test_acc = std::stod(cells[7]);
        r.std_test_acc = cells[8].empty() ? 0.0 : std::stod(cells[8]);
        stats[cells[0]].push_back(r);
    }
    return stats;
}

namespace {

double metric_mean(const AggRow& r, const std::string& metric) {
    if (metric == "w_dist_sq")
        return r.mean_w_dist_sq;
    if (metric == "train_loss")
        return r.mean_train_loss;
    if (metric == "test_acc")
        return r.mean_test_acc;
    throw std::runtime_error("unknown metric '" + metric + "'");
}

double metric_std(const AggRow& r, const std::string& metric) {
    if (metric == "w_dist_sq")
        return r.std_w_dist_sq;
    if (metric == "train_loss")
        return r.std_train_loss;
    return r.std_test_acc;
}

bool metric_lower_better(const std::string& metric) { return metric != "test_acc"; }

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

void plot_svg(const AggregateStats& stats, const std::string& metric, bool log_scale,
              const std::string& path) {
    if (stats.empty())
        throw std::invalid_argument("plot_svg: empty stats");
    const double width = 720, height = 480;
    const double ml = 70, mr = 160, mt = 30, mb = 50;
    const double pw = width - ml - mr, ph = height - mt - mb;

    int min_iter = 0, max_iter = 0;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    auto transform = [&](double v) { return log_scale ? std::log10(std::max(v, 1e-300)) : v; };
    for (const auto& [teacher, rows] : stats) {
        for (const AggRow& r : rows) {
            const double m = transform(metric_mean(r, metric));
            const double s = r.n >= 2 ? metric_std(r, metric) : 0.0;
            const double vlo = log_scale ? m : m - s;
            const double vhi = log_scale ? m : m + s;
            if (first) {
                min_iter = max_iter = r.iter;
                lo = vlo;
                hi = vhi;
                first = false;
            } else {
                min_iter = std::min(min_iter, r.iter);
                max_iter = std::max(max_iter, r.iter);
                lo = std::min(lo, vlo);
                hi = std::max(hi, vhi);
            }
        }
    }
    const double span_x = max_iter > min_iter ? max_iter - min_iter : 1.0;
    const double span_y = hi > lo ? hi - lo : 1.0;
    auto px = [&](double it) { return ml + (it - min_iter) / span_x * pw; };
    auto py = [&](double v) { return mt + ph - (transform(v) - lo) / span_y * ph; };

    std::ofstream os(path + ".tmp");
    if (!os)
        throw std::runtime_error("cannot write " + path);
    os.precision(10);
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
       << "\" fill=\"white\"/>\n";
    os << "  <line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
       << mt + ph << "\" stroke=\"black\"/>\n";
    os << "  <line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    // Axis extremes label the exact data range.
    os << "  <text x=\"" << ml << "\" y=\"" << height - 20 << "\" font-size=\"12\">" << min_iter
       << "</text>\n";
    os << "  <text x=\"" << ml + pw - 10 << "\" y=\"" << height - 20 << "\" font-size=\"12\">"
       << max_iter << "</text>\n";
    os << "  <text x=\"8\" y=\"" << mt + ph << "\" font-size=\"12\">"
       << (log_scale ? std::pow(10.0, lo) : lo) << "</text>\n";
    os << "  <text x=\"8\" y=\"" << mt + 12 << "\" font-size=\"12\">"
       << (log_scale ? std::pow(10.0, hi) : hi) << "</text>\n";
    os << "  <text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
       << "\" font-size=\"12\" text-anchor=\"middle\">iteration</text>\n";
    os << "  <text x=\"16\" y=\"" << mt - 10 << "\" font-size=\"12\">" << metric
       << (log_scale ? " (log scale)" : "") << "</text>\n";

    int color_idx = 0;
    for (const auto& [teacher, rows] : stats) {
        const char* color = kPalette[color_idx % 10];
        if (!rows.empty() && rows.front().n >= 2 && !log_scale) {
            os << "  <polygon fill=\"" << color << "\" opacity=\"0.15\" points=\"";
            for (const AggRow& r : rows)
                os << px(r.iter) << "," << py(metric_mean(r, metric) + metric_std(r, metric))
                   << " ";
            for (auto it = rows.rbegin(); it != rows.rend(); ++it)
                os << px(it->iter) << ","
                   << py(metric_mean(*it, metric) - metric_std(*it, metric)) << " ";
            os << "\"/>\n";
        }
        os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const AggRow& r : rows)
            os << px(r.iter) << "," << py(metric_mean(r, metric)) << " ";
        os << "\"/>\n";
        const double ly = mt + 16 + 18 * color_idx;
        os << "  <line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\""
           << ml + pw + 36 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        os << "  <text x=\"" << ml + pw + 42 << "\" y=\"" << ly << "\" font-size=\"12\">"
           << teacher << "</text>\n";
        ++color_idx;
    }
    os << "</svg>\n";
    os.close();
    if (std::rename((path + ".tmp").c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename to " + path);
}

CompareResult compare_stats(const AggregateStats& stats, const std::string& teacher_a,
                            const std::string& teacher_b, int iter, const std::string& metric,
                            double margin) {
    auto find_row = [&](const std::string& teacher) -> const AggRow& {
        const auto it = stats.find(teacher);
        if (it == stats.end())
            throw std::runtime_error("compare: no traces for teacher '" + teacher + "'");
        for (const AggRow& r : it->second)
            if (r.iter == iter)
                return r;
        throw std::runtime_error("compare: teacher '" + teacher + "' has no iteration " +
                                 std::to_string(iter));
    };
    const AggRow& ra = find_row(teacher_a);
    const AggRow& rb = find_row(teacher_b);
    CompareResult out;
    out.mean_a = metric_mean(ra, metric);
    out.mean_b = metric_mean(rb, metric);
    if (out.mean_a == out.mean_b)
        return out;  // exact equality is a tie regardless of the margin
    if (metric_lower_better(metric)) {
        if (out.mean_a <= out.mean_b * (1.0 - margin))
            out.verdict = CompareVerdict::ABetter;
        else if (out.mean_b <= out.mean_a * (1.0 - margin))
            out.verdict = CompareVerdict::BBetter;
    } else {
        if (out.mean_b <= out.mean_a * (1.0 - margin))
            out.verdict = CompareVerdict::ABetter;
        else if (out.mean_a <= out.mean_b * (1.0 - margin))
            out.verdict = CompareVerdict::BBetter;
    }
    return out;
}

std::string verify_theorem_cmd(const RunConfig& config, const std::string& out_csv) {
    const InterpolationInstance instance = make_interpolation_lsr(
        static_cast<int>(config.get_long("theorem.n", 20)),
        static_cast<int>(config.get_long("theorem.dim", 3)),
        config.get_double("theorem.spread", 0.1), config.get_double("theorem.w0_dist", 1.0),
        config.get_seed("theorem.seed", 1));
    const int T = static_cast<int>(config.get_long("theorem.T", 1000));
    const ContractionReport report =
        run_theorem_verification(instance, T, config.get_seed("theorem.seed", 1));

    if (!out_csv.empty()) {
        const std::string resolved = resolve_out_dir(out_csv);
        std::ofstream os(resolved);
        if (!os)
            throw std::runtime_error("cannot write " + resolved);
        os.precision(17);
        os << "step,ratio\n";
        for (std::size_t i = 0; i < report.ratios.size(); ++i)
            os << (i + 1) << "," << report.ratios[i] << "\n";
    }

    std::ostringstream ss;
    ss.precision(6);
    ss << "constants: mu_bar=" << report.constants.mu_bar << " L_max=" << report.constants.l_max
       << " c1=" << report.constants.c1 << " eta=" << report.constants.eta << "\n";
    ss << "c0 (appendix, L_max^2) = " << report.constants.c0
       << "; c0 (main text, L_max) = " << report.constants.c0_main_text << "\n";
    ss << "window: steps=" << report.ratios.size() << " max_ratio=" << report.max_ratio
       << " mean_ratio=" << report.mean_ratio
       << " frac(ratio<=c0)=" << report.frac_below_c0 << "\n";
    ss << "log-distance fit: slope=" << report.fit_slope << " R2=" << report.fit_r2 << "\n";
    ss << "iterations to 1e-6: " << report.iters_to_eps
       << " (theoretical bound " << report.theoretical_bound << ", 2x bound "
       << 2 * report.theoretical_bound << ")\n";
    if (report.flagged)
        ss << "FLAGGED: " << report.flag_reason << "\n";
    return ss.str();
}

}  // namespace dht
