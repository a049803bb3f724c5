#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dht {

// Flat key=value configuration with dotted sections. Unknown keys are
// rejected at parse time; values are pulled with typed accessors that
// record defaults so the config hash covers exactly the declared surface.
class RunConfig {
public:
    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_text(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;
    std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;
    std::vector<std::uint64_t> get_seed_list(const std::string& key) const;
    std::vector<std::string> get_string_list(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

    // FNV-1a over the canonical key=value lines.
    std::string hash() const;

    const std::map<std::string, std::string>& values() const { return values_; }

    // Keys with the given prefix, in sorted order.
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

private:
    std::map<std::string, std::string> values_;
};

// Every key the harness understands; parse rejects anything else.
bool is_known_config_key(const std::string& key);

}  // namespace dht
