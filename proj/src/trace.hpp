#pragma once

#include <map>
#include <string>
#include <vector>

namespace dht {

struct TraceRow {
    int iter = 0;
    double w_dist_sq = 0.0;
    double train_loss = 0.0;
    double test_acc = 0.0;
};

// Per-iteration teaching record. Metadata is persisted as `# key=value`
// comment lines ahead of the fixed CSV header.
struct TeachingTrace {
    std::vector<TraceRow> rows;
    std::map<std::string, std::string> meta;
    bool aborted = false;
};

// Atomic write (temp file + rename); bytes are deterministic for a given
// trace.
void save_trace_csv(const TeachingTrace& trace, const std::string& path);
TeachingTrace load_trace_csv(const std::string& path);

}  // namespace dht
