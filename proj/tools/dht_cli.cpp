// Command-line front end over the shared-library C API.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "dht/dht.h"

namespace {

int report_error(const char* what, dht_status status) {
    std::fprintf(stderr, "%s: %s: %s\n", what, dht_status_name(status), dht_last_error());
    return 1;
}

struct ConfigHandle {
    dht_config* cfg = nullptr;
    ~ConfigHandle() { dht_config_free(cfg); }
};

struct ReportHandle {
    dht_report* rep = nullptr;
    ~ReportHandle() { dht_report_free(rep); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"data hallucination teaching experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir, metric = "w_dist_sq", out_file, teacher_a, teacher_b;
    std::string trace_dir;
    int jobs = 0, iter = 300;
    double margin = 0.0;
    bool log_scale = false;

    auto* run = app.add_subcommand("run", "execute the teachers declared in a config");
    run->add_option("config", config_path, "config file (key=value lines)")->required();
    run->add_option("-o,--out", out_dir, "output directory (overrides run.out_dir)");
    run->add_option("-j,--jobs", jobs, "parallel worker count");

    auto* agg = app.add_subcommand("aggregate", "mean/std across seeds per teacher");
    agg->add_option("dir", trace_dir, "directory with trace CSVs")->required();
    agg->add_option("-o,--out", out_file, "output CSV (default <dir>/aggregate.csv)");

    auto* plot = app.add_subcommand("plot", "render convergence curves as SVG");
    plot->add_option("dir", trace_dir, "directory with trace CSVs")->required();
    plot->add_option("--metric", metric, "w_dist_sq | train_loss | test_acc");
    plot->add_flag("--log", log_scale, "log10 y-axis");
    plot->add_option("-o,--out", out_file, "output SVG (default <dir>/plot.svg)");

    auto* cmp = app.add_subcommand("compare", "compare two teachers at an iteration");
    cmp->add_option("dir", trace_dir, "directory with trace CSVs")->required();
    cmp->add_option("--a", teacher_a, "first teacher")->required();
    cmp->add_option("--b", teacher_b, "second teacher")->required();
    cmp->add_option("--iter", iter, "iteration to compare at");
    cmp->add_option("--metric", metric, "w_dist_sq | train_loss | test_acc");
    cmp->add_option("--margin", margin, "relative margin required for a win");

    auto* thm = app.add_subcommand("verify-theorem", "contraction-bound verification");
    thm->add_option("config", config_path, "config with theorem.* keys")->required();
    thm->add_option("-o,--out", out_file, "per-step ratio CSV");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        ConfigHandle cfg;
        dht_status st = dht_config_load(config_path.c_str(), &cfg.cfg);
        if (st != DHT_OK)
            return report_error("run", st);
        ReportHandle rep;
        st = dht_run(cfg.cfg, out_dir.empty() ? nullptr : out_dir.c_str(), jobs, &rep.rep);
        if (rep.rep)
            std::fputs(dht_report_text(rep.rep), stdout);
        if (st != DHT_OK)
            return report_error("run", st);
        return 0;
    }
    if (agg->parsed()) {
        const std::string out = out_file.empty() ? trace_dir + "/aggregate.csv" : out_file;
        const dht_status st = dht_aggregate(trace_dir.c_str(), out.c_str());
        if (st != DHT_OK)
            return report_error("aggregate", st);
        std::printf("wrote %s\n", out.c_str());
        return 0;
    }
    if (plot->parsed()) {
        const std::string out = out_file.empty() ? trace_dir + "/plot.svg" : out_file;
        const dht_status st = dht_plot(trace_dir.c_str(), metric.c_str(), log_scale, out.c_str());
        if (st != DHT_OK)
            return report_error("plot", st);
        std::printf("wrote %s\n", out.c_str());
        return 0;
    }
    if (cmp->parsed()) {
        int verdict = 0;
        double mean_a = 0.0, mean_b = 0.0;
        const dht_status st = dht_compare(trace_dir.c_str(), teacher_a.c_str(), teacher_b.c_str(),
                                          iter, metric.c_str(), margin, &verdict, &mean_a, &mean_b);
        if (st != DHT_OK)
            return report_error("compare", st);
        const char* verdict_name =
            verdict > 0 ? "a_better" : (verdict < 0 ? "b_better" : "tie");
        std::printf("%s: %s=%.6g %s=%.6g (metric %s @ iter %d, margin %g)\n", verdict_name,
                    teacher_a.c_str(), mean_a, teacher_b.c_str(), mean_b, metric.c_str(), iter,
                    margin);
        return 0;
    }
    if (thm->parsed()) {
        ConfigHandle cfg;
        dht_status st = dht_config_load(config_path.c_str(), &cfg.cfg);
        if (st != DHT_OK)
            return report_error("verify-theorem", st);
        ReportHandle rep;
        st = dht_verify_theorem(cfg.cfg, out_file.empty() ? nullptr : out_file.c_str(), &rep.rep);
        if (st != DHT_OK)
            return report_error("verify-theorem", st);
        std::fputs(dht_report_text(rep.rep), stdout);
        return 0;
    }
    return 1;
}
