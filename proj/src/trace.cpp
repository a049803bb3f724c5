#include "trace.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dht {

void save_trace_csv(const TeachingTrace& trace, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os)
            throw std::runtime_error("cannot write " + tmp);
        for (const auto& [k, v] : trace.meta)
            os << "# " << k << "=" << v << "\n";
        if (trace.aborted)
            os << "# aborted=1\n";
        os << "iter,w_dist_sq,train_loss,test_acc\n";
        char buf[160];
        for (const TraceRow& r : trace.rows) {
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", r.iter, r.w_dist_sq,
                          r.train_loss, r.test_acc);
            os << buf;
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

TeachingTrace load_trace_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open " + path);
    TeachingTrace trace;
    std::string line;
    bool header_seen = false;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        if (line[0] == '#') {
            std::size_t start = line.find_first_not_of("# ");
            if (start == std::string::npos)
                continue;
            const std::size_t eq = line.find('=', start);
            if (eq != std::string::npos) {
                const std::string key = line.substr(start, eq - start);
                const std::string val = line.substr(eq + 1);
                if (key == "aborted")
                    trace.aborted = val == "1";
                else
                    trace.meta[key] = val;
            }
            continue;
        }
        if (!header_seen) {
            if (line != "iter,w_dist_sq,train_loss,test_acc")
                throw std::runtime_error(path + ": unexpected header at line " +
                                         std::to_string(lineno));
            header_seen = true;
            continue;
        }
        TraceRow r;
        if (std::sscanf(line.c_str(), "%d,%lg,%lg,%lg", &r.iter, &r.w_dist_sq, &r.train_loss,
                        &r.test_acc) != 4)
            throw std::runtime_error(path + ": malformed row at line " + std::to_string(lineno));
        trace.rows.push_back(r);
    }
    if (!header_seen)
        throw std::runtime_error(path + ": missing header");
    return trace;
}

}  // namespace dht
