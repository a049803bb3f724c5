#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "dht/dht.h"

namespace fs = std::filesystem;

namespace {

const char* kTinyConfig =
    "dataset.kind=halfmoon\n"
    "dataset.n=80\n"
    "dataset.noise=0.2\n"
    "dataset.seed=5\n"
    "learner.loss=lr\n"
    "learner.eta=0.01\n"
    "teacher.kinds=sgd,imt\n"
    "run.T=10\n"
    "run.seeds=1,2\n";

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("c api: null arguments and parse failures are typed") {
    CHECK(dht_config_load(nullptr, nullptr) == DHT_ERR_INVALID_ARG);
    dht_config* cfg = nullptr;
    CHECK(dht_config_parse("bogus.key=1\n", &cfg) == DHT_ERR_PARSE);
    CHECK(cfg == nullptr);
    CHECK(std::string(dht_last_error()).find("unknown key") != std::string::npos);
    CHECK(std::string(dht_status_name(DHT_ERR_PARSE)) == "parse error");
    CHECK(dht_version() >= 10000);
}

TEST_CASE("c api: full pipeline over opaque handles") {
    TempDir dir("dht_capi");
    dht_config* cfg = nullptr;
    REQUIRE(dht_config_parse(kTinyConfig, &cfg) == DHT_OK);

    char hash[17];
    REQUIRE(dht_config_hash(cfg, hash, sizeof(hash)) == DHT_OK);
    CHECK(std::string(hash).size() == 16);
    char small[4];
    CHECK(dht_config_hash(cfg, small, sizeof(small)) == DHT_ERR_INVALID_ARG);

    dht_report* report = nullptr;
    REQUIRE(dht_run(cfg, dir.path.c_str(), 1, &report) == DHT_OK);
    REQUIRE(report != nullptr);
    CHECK(std::string(dht_report_text(report)).find("trace file(s) written") !=
          std::string::npos);
    dht_report_free(report);

    const std::string agg = (dir.path / "aggregate.csv").string();
    REQUIRE(dht_aggregate(dir.path.c_str(), agg.c_str()) == DHT_OK);
    CHECK(fs::exists(agg));

    const std::string svg = (dir.path / "plot.svg").string();
    REQUIRE(dht_plot(dir.path.c_str(), "w_dist_sq", 1, svg.c_str()) == DHT_OK);
    CHECK(fs::exists(svg));

    int verdict = 0;
    double mean_a = 0.0, mean_b = 0.0;
    REQUIRE(dht_compare(dir.path.c_str(), "imt", "sgd", 10, "w_dist_sq", 0.0, &verdict, &mean_a,
                        &mean_b) == DHT_OK);
    CHECK(verdict == 1);
    CHECK(mean_a < mean_b);

    CHECK(dht_compare(dir.path.c_str(), "imt", "nope", 10, "w_dist_sq", 0.0, &verdict, nullptr,
                      nullptr) == DHT_ERR_RUNTIME);

    dht_config_free(cfg);
}

TEST_CASE("c api: failed declared assertions surface as a status") {
    TempDir dir("dht_capi_assert");
    std::string text = kTinyConfig;
    text += "assert.1=sgd,imt,w_dist_sq,10,0\n";
    dht_config* cfg = nullptr;
    REQUIRE(dht_config_parse(text.c_str(), &cfg) == DHT_OK);
    dht_report* report = nullptr;
    CHECK(dht_run(cfg, dir.path.c_str(), 1, &report) == DHT_ERR_ASSERTION);
    REQUIRE(report != nullptr);
    CHECK(std::string(dht_report_text(report)).find("FAIL") != std::string::npos);
    dht_report_free(report);
    dht_config_free(cfg);
}

TEST_CASE("c api: theorem verification") {
    dht_config* cfg = nullptr;
    REQUIRE(dht_config_parse("theorem.n=10\ntheorem.T=200\ntheorem.seed=3\n", &cfg) == DHT_OK);
    dht_report* report = nullptr;
    REQUIRE(dht_verify_theorem(cfg, nullptr, &report) == DHT_OK);
    REQUIRE(report != nullptr);
    CHECK(std::string(dht_report_text(report)).find("c0 (appendix") != std::string::npos);
    dht_report_free(report);
    dht_config_free(cfg);
}
