#include "dht/dht.h"

#include <cstring>
#include <sstream>
#include <string>

#include "config.hpp"
#include "harness.hpp"

struct dht_config {
    dht::RunConfig cfg;
};

struct dht_report {
    std::string text;
};

namespace {

thread_local std::string g_last_error;

dht_status fail(dht_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

template <typename Fn>
dht_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const std::invalid_argument& e) {
        return fail(DHT_ERR_INVALID_ARG, e.what());
    } catch (const std::exception& e) {
        return fail(DHT_ERR_RUNTIME, e.what());
    }
}

}  // namespace

extern "C" {

unsigned dht_version(void) { return 10000; /* 1.0.0 */ }

const char* dht_status_name(dht_status status) {
    switch (status) {
    case DHT_OK:
        return "ok";
    case DHT_ERR_INVALID_ARG:
        return "invalid argument";
    case DHT_ERR_PARSE:
        return "parse error";
    case DHT_ERR_IO:
        return "io error";
    case DHT_ERR_RUNTIME:
        return "runtime error";
    case DHT_ERR_ASSERTION:
        return "assertion failed";
    }
    return "unknown";
}

const char* dht_last_error(void) { return g_last_error.c_str(); }

dht_status dht_config_load(const char* path, dht_config** out) {
    if (!path || !out)
        return fail(DHT_ERR_INVALID_ARG, "null argument");
    *out = nullptr;
    try {
        auto* handle = new dht_config{dht::RunConfig::parse_file(path)};
        *out = handle;
        return DHT_OK;
    } catch (const std::exception& e) {
        return fail(DHT_ERR_PARSE, e.what());
    }
}

dht_status dht_config_parse(const char* text, dht_config** out) {
    if (!text || !out)
        return fail(DHT_ERR_INVALID_ARG, "null argument");
    *out = nullptr;
    try {
        auto* handle = new dht_config{dht::RunConfig::parse_text(text)};
        *out = handle;
        return DHT_OK;
    } catch (const std::exception& e) {
        return fail(DHT_ERR_PARSE, e.what());
    }
}

void dht_config_free(dht_config* config) { delete config; }

dht_status dht_config_hash(const dht_config* config, char* buf, size_t buflen) {
    if (!config || !buf)
        return fail(DHT_ERR_INVALID_ARG, "null argument");
    const std::string h = config->cfg.hash();
    if (buflen < h.size() + 1)
        return fail(DHT_ERR_INVALID_ARG, "hash buffer too small (need 17 bytes)");
    std::memcpy(buf, h.c_str(), h.size() + 1);
    return DHT_OK;
}

dht_status dht_run(const dht_config* config, const char* out_dir, int jobs, dht_report** report) {
    if (!config)
        return fail(DHT_ERR_INVALID_ARG, "null config");
    if (report)
        *report = nullptr;
    return guarded([&]() -> dht_status {
        const dht::RunResult result =
            dht::run_experiment(config->cfg, out_dir ? out_dir : "", jobs);
        std::ostringstream ss;
        ss << result.trace_files.size() << " trace file(s) written\n";
        for (const auto& a : result.assertions)
            ss << (a.passed ? "PASS" : "FAIL") << " assert " << a.description
               << " (a=" << a.mean_a << ", b=" << a.mean_b << ")\n";
        if (report)
            *report = new dht_report{ss.str()};
        if (!result.ok())
            return fail(DHT_ERR_ASSERTION, "declared assertions failed");
        return DHT_OK;
    });
}

dht_status dht_aggregate(const char* trace_dir, const char* out_csv) {
    if (!trace_dir || !out_csv)
        return fail(DHT_ERR_INVALID_ARG, "null argument");
    return guarded([&]() -> dht_status {
        dht::save_aggregate_csv(dht::aggregate_dir(trace_dir), out_csv);
        return DHT_OK;
    });
}

dht_status dht_plot(const char* trace_dir, const char* metric, int log_scale,
                    const char* out_svg) {
    if (!trace_dir || !metric || !out_svg)
        return fail(DHT_ERR_INVALID_ARG, "null argument");
    return guarded([&]() -> dht_status {
        dht::plot_svg(dht::aggregate_dir(trace_dir), metric, log_scale != 0, out_svg);
        return DHT_OK;
    });
}

dht_status dht_compare(const char* trace_dir, const char* teacher_a, const char* teacher_b,
                       int iter, const char* metric, double margin, int* verdict, double* mean_a,
                       double* mean_b) {
    if (!trace_dir || !teacher_a || !teacher_b || !metric || !verdict)
        return fail(DHT_ERR_INVALID_ARG, "null argument");
    return guarded([&]() -> dht_status {
        const dht::CompareResult r = dht::compare_stats(dht::aggregate_dir(trace_dir), teacher_a,
                                                        teacher_b, iter, metric, margin);
        *verdict = r.verdict == dht::CompareVerdict::ABetter
                       ? 1
                       : (r.verdict == dht::CompareVerdict::BBetter ? -1 : 0);
        if (mean_a)
            *mean_a = r.mean_a;
        if (mean_b)
            *mean_b = r.mean_b;
        return DHT_OK;
    });
}

dht_status dht_verify_theorem(const dht_config* config, const char* out_csv,
                              dht_report** report) {
    if (!config)
        return fail(DHT_ERR_INVALID_ARG, "null config");
    if (report)
        *report = nullptr;
    return guarded([&]() -> dht_status {
        const std::string text =
            dht::verify_theorem_cmd(config->cfg, out_csv ? out_csv : "");
        if (report)
            *report = new dht_report{text};
        return DHT_OK;
    });
}

const char* dht_report_text(const dht_report* report) {
    return report ? report->text.c_str() : "";
}

void dht_report_free(dht_report* report) { delete report; }

}  // extern "C"
