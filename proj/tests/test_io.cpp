#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "ssflab/io.hpp"
#include "ssflab/manifest.hpp"

using namespace ssflab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const fs::path d = fs::temp_directory_path() / "ssflab_test_io";
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("potential JSON round trip is bit exact") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> pts{u(rng) * 1e-3 + 1.0};
        std::vector<double> vals;
        for (int i = 0; i < 1 + trial; ++i) {
            pts.push_back(pts.back() + std::ldexp(1.0 + u(rng), trial % 7 - 3));
            vals.push_back(u(rng) * std::pow(10.0, trial % 9 - 4));
        }
        const PiecewisePotential p = make_piecewise(pts, vals);
        const PiecewisePotential q = potential_from_json(json::parse(to_json(p).dump()));
        CHECK(p == q);
    }
    const PiecewisePotential zero = potential_from_json(json::parse(to_json(PiecewisePotential{}).dump()));
    CHECK(zero.empty());
}

TEST_CASE("barrier spec JSON round trip is bit exact") {
    const BarrierSpec s = build_vnw_potential(1.0, 2.0, 0.75, 50).spec;
    CHECK(barrier_spec_from_json(json::parse(to_json(s).dump())) == s);
    const json j = to_json(s);
    for (const char* key : {"lambda_star", "w", "s", "barriers", "boundary_h"}) CHECK(j.contains(key));
}

TEST_CASE("malformed potential JSON") {
    CHECK_THROWS_AS(potential_from_json(json::parse(R"({"values": [1]})")), ParameterError);
    CHECK_THROWS_AS(potential_from_json(json::parse(R"({"breakpoints": [0, 1], "values": ["a"]})")), ParameterError);
    CHECK_THROWS_AS(potential_from_json(json::parse(R"({"breakpoints": [0, 1], "values": [1], "support_end": 2})")),
                    ParameterError);
}

TEST_CASE("SHA-256 of a known vector") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("CSV numbers round trip with 17 digits") {
    CsvTable t({"x", "n", "s", "b"});
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> xs;
    for (int i = 0; i < 50; ++i) {
        xs.push_back(u(rng) * std::pow(10.0, i % 20 - 10));
        t.add({xs.back(), static_cast<long>(i), std::string(i % 2 ? "a,b" : "plain \"q\""), i % 3 == 0});
    }
    const std::string text = t.str("deadbeef");
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    CHECK(line == "# manifest_digest: deadbeef");
    std::getline(in, line);
    CHECK(line == "x,n,s,b");
    for (int i = 0; i < 50; ++i) {
        std::getline(in, line);
        const double back = std::strtod(line.substr(0, line.find(',')).c_str(), nullptr);
        CHECK(back == xs[static_cast<std::size_t>(i)]);
        if (i % 2) CHECK(line.find("\"a,b\"") != std::string::npos);
        else CHECK(line.find("\"plain \"\"q\"\"\"") != std::string::npos);
    }
    CHECK(CsvTable::format(std::nan("")) == "nan");
    CHECK(CsvTable::format(true) == "1");
    CHECK_THROWS(t.add({1.0}));
}

TEST_CASE("CSV without a digest starts with the header") {
    CsvTable t({"a"});
    CHECK(t.str() == "a\n");
}

TEST_CASE("manifest: barrier background, gap bump by index, energy range") {
    const json m = json::parse(R"({
        "name": "bump",
        "potential": {"lambda_star": 1.0, "w": 2.0, "s": 0.75, "barriers": 50},
        "perturbation": {"kind": "gap_bump", "gap": 1, "height": 0.9},
        "energies": {"min": 0.98, "max": 1.02, "count": 5},
        "nodes": 16,
        "tolerances": {"agreement": 2e-4}
    })");
    const Experiment e = experiment_from_json(m);
    REQUIRE(e.spec.has_value());
    CHECK(e.bc == BoundaryCondition::robin(-1.0));
    CHECK(e.energies.size() == 5);
    CHECK(e.energies.front() == 0.98);
    CHECK(e.energies.back() == 1.02);
    CHECK(e.options.nodes == 16);
    CHECK(e.options.scan.agreement == 2e-4);
    const Interval g = e.spec->gap(1);
    CHECK(e.v.support_start() == g.a);
    CHECK(e.v.values == std::vector<double>{0.9});
    CHECK(e.digest == sha256_hex(m.dump()));
}

TEST_CASE("manifest: other perturbations and defaults") {
    const Experiment none = experiment_from_json(json::parse(R"({"potential": {"barriers": 5}})"));
    CHECK(none.v.empty());
    CHECK(none.energies == std::vector<double>{1.0});
    const Experiment well =
        experiment_from_json(json::parse(R"({"perturbation": {"kind": "well", "start": 0, "end": 1, "depth": -0.3}})"));
    CHECK(well.v.values == std::vector<double>{-0.3});
    const Experiment scale =
        experiment_from_json(json::parse(R"({"perturbation": {"kind": "barrier_scale", "factor": 0.1, "count": 5}})"));
    CHECK(scale.v.segment_count() == 9);
    const Experiment inline_bg = experiment_from_json(
        json::parse(R"({"potential": {"breakpoints": [0, 1], "values": [0.5]}, "boundary": {"kind": "dirichlet"}})"));
    CHECK_FALSE(inline_bg.spec.has_value());
    CHECK(inline_bg.bc == BoundaryCondition::dirichlet());
}

TEST_CASE("manifest errors") {
    CHECK_THROWS_AS(experiment_from_json(json::array()), ParameterError);
    CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"perturbation": {"kind": "nope"}})")), ParameterError);
    CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"potential": {"file": "missing.json"}})")), ParameterError);
    CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"energies": []})")), ParameterError);
    CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"energies": [-1.0]})")), ParameterError);
    CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"tolerances": {"detection": 0}})")), ParameterError);
    CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"nodes": 0})")), ParameterError);
    CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"potential": {"s": 0.4}})")), ParameterError);
    CHECK_THROWS_AS(read_json_file("/nonexistent/manifest.json"), ParameterError);
}

TEST_CASE("manifest files, relative references and overrides") {
    const fs::path d = scratch_dir();
    write_json_file((d / "v.json").string(), to_json(make_piecewise({2.0, 3.0}, {0.25})));
    write_text_file((d / "m.json").string(), R"({"perturbation": {"file": "v.json"}, "nodes": 8, "output": "x"})");
    const Experiment e = load_experiment((d / "m.json").string(), json{{"nodes", 10}});
    CHECK(e.v.values == std::vector<double>{0.25});
    CHECK(e.options.nodes == 10);
    CHECK(e.output == "x");
    CHECK(e.effective.at("nodes") == 10);
    const Experiment f = load_experiment((d / "m.json").string());
    CHECK(f.digest != e.digest);
}
