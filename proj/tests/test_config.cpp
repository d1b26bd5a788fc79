#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "spanova/config.hpp"
#include "spanova/tsv.hpp"

using namespace spanova;

TEST_CASE("default hyperparameters") {
    const HyperParameters h;
    CHECK(h.r == 0.001);
    CHECK(h.s == 20.0);
    CHECK(h.m == 0.9);
    CHECK(h.a == 10.0);
    CHECK(h.b == 8.0);
    CHECK(h.tau1 == 100.0);
    CHECK(h.tauShape == 2.5);
    CHECK(h.tauRate == 0.5);
    CHECK(h.psiShape == 12.5);
    CHECK(h.psiRate == 0.05);
    CHECK(h.priorTauMean() == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(h.priorPsiMean() == doctest::Approx(0.05 / 11.5).epsilon(1e-15));
}

TEST_CASE("default chain and search controls") {
    const McmcControl c;
    CHECK(c.burnIn == 10000);
    CHECK(c.samples == 100000);
    CHECK(c.thin == 1);
    CHECK(c.threads == 1);
    CHECK_FALSE(c.fixed.any());

    const EvolutionControl e;
    CHECK(e.geneInclusionThreshold == 0.75);
    CHECK(e.factorGeneThreshold == 0.75);
    CHECK(e.factorGeneCount == 5);
    CHECK(e.maxGenes == 150);
    CHECK(e.maxFactors == 10);
    CHECK(e.stageBurnIn == 2000);
    CHECK(e.stageSamples == 8000);
    CHECK(e.maxAdmitPerStage == 25);
    CHECK(e.initialFactors == 1);
    CHECK_FALSE(e.forceGaussian);

    const DatasetControl d;
    CHECK(d.minRange == 0.25);
    CHECK(d.minMedian == 5.0);
    CHECK(d.numPCs == 5);
}

TEST_CASE("validate flags out-of-range values") {
    HyperParameters h;
    McmcControl c;
    CHECK(validate(h, c).empty());

    h.r = 1.5;
    h.s = -1.0;
    c.thin = 0;
    const auto v = validate(h, c);
    CHECK(v.size() == 3);

    h = HyperParameters{};
    c = McmcControl{};
    c.fixed.rho = std::vector<double>{1.2};
    CHECK_FALSE(validate(h, c).empty());
    c.fixed.rho = std::vector<double>{0.5};
    CHECK(validate(h, c).empty());
    c.fixed.tau = std::vector<double>{};
    CHECK_FALSE(validate(h, c).empty());

    EvolutionControl e;
    CHECK(validate_evolution(e).empty());
    e.factorGeneCount = 0;
    e.maxFactors = 0;
    CHECK(validate_evolution(e).size() == 2);
}

TEST_CASE("config text parsing applies partial overrides") {
    const Config cfg = parse_config_text(R"({
        "hyper": {"r": 0.05, "m": 0.8},
        "mcmc": {"burnIn": 500, "samples": 2000, "seed": 99, "fixedTau": 0.7,
                 "fixedPsi": [0.1, 0.2]},
        "evolution": {"maxGenes": 40, "forceGaussian": true},
        "dataset": {"numPCs": 2}
    })",
                                         "inline");
    CHECK(cfg.hyper.r == 0.05);
    CHECK(cfg.hyper.m == 0.8);
    CHECK(cfg.hyper.s == 20.0);  // untouched default
    CHECK(cfg.mcmc.burnIn == 500);
    CHECK(cfg.mcmc.samples == 2000);
    CHECK(cfg.mcmc.seed == 99);
    REQUIRE(cfg.mcmc.fixed.tau.has_value());
    CHECK(cfg.mcmc.fixed.tau->size() == 1);
    CHECK((*cfg.mcmc.fixed.tau)[0] == 0.7);
    REQUIRE(cfg.mcmc.fixed.psi.has_value());
    CHECK(cfg.mcmc.fixed.psi->size() == 2);
    CHECK(cfg.evolution.maxGenes == 40);
    CHECK(cfg.evolution.forceGaussian);
    CHECK(cfg.dataset.numPCs == 2);
}

TEST_CASE("config parsing rejects malformed input") {
    CHECK_THROWS_AS(parse_config_text("{ not json", "inline"), ParseError);
    CHECK_THROWS_AS(parse_config_text(R"({"hyper": {"bogus": 1}})", "inline"), ParseError);
    CHECK_THROWS_AS(parse_config_text(R"({"unexpected": {}})", "inline"), ParseError);
    CHECK_THROWS_AS(parse_config_text(R"({"mcmc": {"thin": "x"}})", "inline"), ParseError);
    CHECK_THROWS_AS(parse_config_text(R"([1,2])", "inline"), ParseError);
    CHECK_THROWS_AS(parse_config_text(R"({"evolution": {"forceGaussian": 1}})", "inline"),
                    ParseError);
}

TEST_CASE("config survives a serialize/parse round trip") {
    Config cfg;
    cfg.hyper.r = 0.01;
    cfg.mcmc.samples = 1234;
    cfg.mcmc.seed = 777;
    cfg.mcmc.fixed.rho = std::vector<double>{0.25, 0.5};
    cfg.mcmc.fixed.pi = 0.4;
    cfg.evolution.stageSamples = 4000;
    cfg.dataset.minMedian = 6.5;

    const Config back = parse_config_text(config_to_json(cfg), "roundtrip");
    CHECK(back.hyper.r == cfg.hyper.r);
    CHECK(back.mcmc.samples == cfg.mcmc.samples);
    CHECK(back.mcmc.seed == cfg.mcmc.seed);
    REQUIRE(back.mcmc.fixed.rho.has_value());
    CHECK(*back.mcmc.fixed.rho == *cfg.mcmc.fixed.rho);
    REQUIRE(back.mcmc.fixed.pi.has_value());
    CHECK(*back.mcmc.fixed.pi == 0.4);
    CHECK(back.evolution.stageSamples == 4000);
    CHECK(back.dataset.minMedian == 6.5);
}

TEST_CASE("load_config reads a file") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "spanova_config_test";
    fs::create_directories(dir);
    const std::string path = (dir / "c.json").string();
    write_text_file_atomic(path, R"({"mcmc": {"thin": 5}})");
    CHECK(load_config(path).mcmc.thin == 5);
    fs::remove_all(dir);
}
