#include "config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dht {

namespace {

const char* kKnownKeys[] = {
    "dataset.kind",          "dataset.n",           "dataset.noise",
    "dataset.dim",           "dataset.separation",  "dataset.label_noise",
    "dataset.seed",          "dataset.split",       "dataset.path",
    "dataset.images",        "dataset.labels",      "dataset.class_pos",
    "dataset.class_neg",     "dataset.per_class_cap", "dataset.project_dim",
    "dataset.project_seed",  "dataset.classes",
    "learner.loss",          "learner.eta",         "learner.w0_scale",
    "teacher.kinds",         "teacher.synth_steps", "teacher.synth_lr",
    "teacher.synth_beta1",   "teacher.synth_beta2", "teacher.label_steps",
    "teacher.label_lr",      "teacher.label_cap",   "teacher.label_floor",
    "teacher.c1",            "teacher.unroll_v",    "teacher.alpha",
    "teacher.outer_iters",   "teacher.teacher_lr",  "teacher.latent_dim",
    "teacher.vae_epochs",    "teacher.beta_kl",     "teacher.kl_weight",
    "teacher.adv_weight",    "teacher.noise_dim",   "teacher.policy_hidden",
    "teacher.privacy_eps",   "teacher.privacy_lambda", "teacher.privacy_set_size",
    "teacher.privacy_seed",  "teacher.mixup_episodes", "teacher.mixup_epochs",
    "performative.n_w",      "performative.feat_steps", "performative.eps",
    "performative.batch_m",  "performative.feat_lr",    "performative.lr",
    "performative.iters",    "performative.encoder_hidden", "performative.feature_dim",
    "theorem.n",             "theorem.dim",         "theorem.spread",
    "theorem.w0_dist",       "theorem.T",           "theorem.seed",
    "run.T",                 "run.seeds",           "run.out_dir",
    "run.jobs",
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

bool is_known_config_key(const std::string& key) {
    if (key.rfind("assert.", 0) == 0)
        return true;
    for (const char* k : kKnownKeys)
        if (key == k)
            return true;
    return false;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_text(ss.str(), path);
}

RunConfig RunConfig::parse_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    long lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#')
            continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": expected key=value, got '" + t + "'");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (!is_known_config_key(key))
            throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": unknown key '" +
                                     key + "'");
        if (cfg.values_.count(key))
            throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                                     key + "'");
        cfg.values_[key] = value;
    }
    return cfg;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string RunConfig::require_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end())
        throw std::runtime_error("missing required config key '" + key + "'");
    return it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size())
            throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': not a number: '" + it->second + "'");
    }
}

long RunConfig::get_long(const std::string& key, long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    try {
        std::size_t pos = 0;
        const long v = std::stol(it->second, &pos);
        if (pos != it->second.size())
            throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': not an integer: '" + it->second + "'");
    }
}

std::uint64_t RunConfig::get_seed(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(it->second, &pos);
        if (pos != it->second.size())
            throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': not a seed: '" + it->second + "'");
    }
}

std::vector<std::string> RunConfig::get_string_list(const std::string& key) const {
    std::vector<std::string> out;
    const auto it = values_.find(key);
    if (it == values_.end())
        return out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty())
            out.push_back(t);
    }
    return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key,
                                               const std::vector<double>& fallback) const {
    if (!has(key))
        return fallback;
    std::vector<double> out;
    for (const std::string& item : get_string_list(key))
        out.push_back(std::stod(item));
    return out;
}

std::vector<std::uint64_t> RunConfig::get_seed_list(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const std::string& item : get_string_list(key))
        out.push_back(std::stoull(item));
    return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key,
                                         const std::vector<int>& fallback) const {
    if (!has(key))
        return fallback;
    std::vector<int> out;
    for (const std::string& item : get_string_list(key))
        out.push_back(std::stoi(item));
    return out;
}

std::string RunConfig::hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [k, v] : values_) {
        for (unsigned char c : k) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= '=';
        h *= 1099511628211ull;
        for (unsigned char c : v) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= '\n';
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::string> RunConfig::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
        if (k.rfind(prefix, 0) == 0)
            out.push_back(k);
    return out;
}

}  // namespace dht
