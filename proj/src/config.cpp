#include "spanova/config.hpp"

#include <json.hpp>
#include <set>

#include "spanova/tsv.hpp"

namespace spanova {

using nlohmann::json;

HyperParameters default_hyperparameters() { return HyperParameters{}; }

std::vector<std::string> validate(const HyperParameters& h, const McmcControl& c) {
    std::vector<std::string> v;
    auto inOpen01 = [](double x) { return x > 0.0 && x < 1.0; };
    if (!inOpen01(h.r)) v.push_back("r ∉ (0,1)");
    if (!(h.s > 0.0)) v.push_back("s must be > 0");
    if (!inOpen01(h.m)) v.push_back("m ∉ (0,1)");
    if (!(h.a > 0.0)) v.push_back("a must be > 0");
    if (!(h.tau1 > 0.0)) v.push_back("tau1 must be > 0");
    if (!(h.tauShape > 0.0)) v.push_back("tauShape must be > 0");
    if (!(h.tauRate > 0.0)) v.push_back("tauRate must be > 0");
    if (!(h.psiShape > 0.0)) v.push_back("psiShape must be > 0");
    if (!(h.psiRate > 0.0)) v.push_back("psiRate must be > 0");
    if (c.burnIn < 0) v.push_back("burnIn ≥ 0");
    if (c.samples < 1) v.push_back("samples ≥ 1");
    if (c.thin < 1) v.push_back("thin ≥ 1");
    if (c.threads < 1) v.push_back("threads ≥ 1");
    auto checkPos = [&](const std::optional<std::vector<double>>& o, const char* name) {
        if (!o) return;
        if (o->empty()) v.push_back(std::string(name) + " override is empty");
        for (double x : *o)
            if (!(x > 0.0)) v.push_back(std::string(name) + " override must be > 0");
    };
    checkPos(c.fixed.tau, "tau");
    checkPos(c.fixed.psi, "psi");
    if (c.fixed.rho) {
        if (c.fixed.rho->empty()) v.push_back("rho override is empty");
        for (double x : *c.fixed.rho)
            if (!(x > 0.0 && x < 1.0)) v.push_back("rho override ∉ (0,1)");
    }
    if (c.fixed.pi && !(*c.fixed.pi >= 0.0 && *c.fixed.pi <= 1.0))
        v.push_back("pi override ∉ [0,1]");
    return v;
}

std::vector<std::string> validate_evolution(const EvolutionControl& ec) {
    std::vector<std::string> v;
    auto inOpen01 = [](double x) { return x > 0.0 && x < 1.0; };
    if (!inOpen01(ec.geneInclusionThreshold)) v.push_back("geneInclusionThreshold ∉ (0,1)");
    if (!inOpen01(ec.factorGeneThreshold)) v.push_back("factorGeneThreshold ∉ (0,1)");
    if (ec.factorGeneCount < 1) v.push_back("factorGeneCount ≥ 1");
    if (ec.maxGenes < 1) v.push_back("maxGenes ≥ 1");
    if (ec.maxFactors < 1) v.push_back("maxFactors ≥ 1");
    if (ec.stageBurnIn < 0) v.push_back("stageBurnIn ≥ 0");
    if (ec.stageSamples < 1) v.push_back("stageSamples ≥ 1");
    if (ec.maxAdmitPerStage < 1) v.push_back("maxAdmitPerStage ≥ 1");
    if (ec.initialFactors < 1) v.push_back("initialFactors ≥ 1");
    if (!(ec.alphaShape > 0.0)) v.push_back("alphaShape > 0");
    if (!(ec.alphaRate > 0.0)) v.push_back("alphaRate > 0");
    return v;
}

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ParseError(where + ": unknown key '" + it.key() + "'");
}

double num(const json& j, const std::string& where) {
    if (!j.is_number()) throw ParseError(where + ": expected a number");
    return j.get<double>();
}

std::vector<double> num_or_array(const json& j, const std::string& where) {
    if (j.is_number()) return {j.get<double>()};
    if (j.is_array()) {
        std::vector<double> v;
        for (const auto& e : j) v.push_back(num(e, where));
        return v;
    }
    throw ParseError(where + ": expected a number or array of numbers");
}

}  // namespace

Config parse_config_text(const std::string& text, const std::string& where) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(where + ": " + e.what());
    }
    if (!root.is_object()) throw ParseError(where + ": top level must be an object");
    check_keys(root, {"hyper", "mcmc", "evolution", "dataset"}, where);

    Config cfg;
    if (root.contains("hyper")) {
        const auto& h = root["hyper"];
        check_keys(h,
                   {"r", "s", "m", "a", "b", "tau1", "tauShape", "tauRate", "psiShape",
                    "psiRate"},
                   where + ".hyper");
        auto set = [&](const char* k, double& field) {
            if (h.contains(k)) field = num(h[k], where + ".hyper." + k);
        };
        set("r", cfg.hyper.r);
        set("s", cfg.hyper.s);
        set("m", cfg.hyper.m);
        set("a", cfg.hyper.a);
        set("b", cfg.hyper.b);
        set("tau1", cfg.hyper.tau1);
        set("tauShape", cfg.hyper.tauShape);
        set("tauRate", cfg.hyper.tauRate);
        set("psiShape", cfg.hyper.psiShape);
        set("psiRate", cfg.hyper.psiRate);
    }
    if (root.contains("mcmc")) {
        const auto& m = root["mcmc"];
        check_keys(m,
                   {"burnIn", "samples", "thin", "seed", "threads", "fixedTau", "fixedPsi",
                    "fixedRho", "fixedPi"},
                   where + ".mcmc");
        if (m.contains("burnIn")) cfg.mcmc.burnIn = static_cast<long>(num(m["burnIn"], where));
        if (m.contains("samples")) cfg.mcmc.samples = static_cast<long>(num(m["samples"], where));
        if (m.contains("thin")) cfg.mcmc.thin = static_cast<int>(num(m["thin"], where));
        if (m.contains("seed")) cfg.mcmc.seed = m["seed"].get<std::uint64_t>();
        if (m.contains("threads")) cfg.mcmc.threads = static_cast<int>(num(m["threads"], where));
        if (m.contains("fixedTau"))
            cfg.mcmc.fixed.tau = num_or_array(m["fixedTau"], where + ".mcmc.fixedTau");
        if (m.contains("fixedPsi"))
            cfg.mcmc.fixed.psi = num_or_array(m["fixedPsi"], where + ".mcmc.fixedPsi");
        if (m.contains("fixedRho"))
            cfg.mcmc.fixed.rho = num_or_array(m["fixedRho"], where + ".mcmc.fixedRho");
        if (m.contains("fixedPi")) cfg.mcmc.fixed.pi = num(m["fixedPi"], where + ".mcmc.fixedPi");
    }
    if (root.contains("evolution")) {
        const auto& e = root["evolution"];
        check_keys(e,
                   {"geneInclusionThreshold", "factorGeneThreshold", "factorGeneCount",
                    "maxGenes", "maxFactors", "stageBurnIn", "stageSamples", "maxAdmitPerStage",
                    "initialFactors", "forceGaussian", "alphaShape", "alphaRate"},
                   where + ".evolution");
        auto& ec = cfg.evolution;
        if (e.contains("geneInclusionThreshold"))
            ec.geneInclusionThreshold = num(e["geneInclusionThreshold"], where);
        if (e.contains("factorGeneThreshold"))
            ec.factorGeneThreshold = num(e["factorGeneThreshold"], where);
        if (e.contains("factorGeneCount"))
            ec.factorGeneCount = static_cast<int>(num(e["factorGeneCount"], where));
        if (e.contains("maxGenes")) ec.maxGenes = static_cast<int>(num(e["maxGenes"], where));
        if (e.contains("maxFactors")) ec.maxFactors = static_cast<int>(num(e["maxFactors"], where));
        if (e.contains("stageBurnIn"))
            ec.stageBurnIn = static_cast<long>(num(e["stageBurnIn"], where));
        if (e.contains("stageSamples"))
            ec.stageSamples = static_cast<long>(num(e["stageSamples"], where));
        if (e.contains("maxAdmitPerStage"))
            ec.maxAdmitPerStage = static_cast<int>(num(e["maxAdmitPerStage"], where));
        if (e.contains("initialFactors"))
            ec.initialFactors = static_cast<int>(num(e["initialFactors"], where));
        if (e.contains("forceGaussian")) {
            if (!e["forceGaussian"].is_boolean())
                throw ParseError(where + ".evolution.forceGaussian: expected a boolean");
            ec.forceGaussian = e["forceGaussian"].get<bool>();
        }
        if (e.contains("alphaShape")) ec.alphaShape = num(e["alphaShape"], where);
        if (e.contains("alphaRate")) ec.alphaRate = num(e["alphaRate"], where);
    }
    if (root.contains("dataset")) {
        const auto& d = root["dataset"];
        check_keys(d, {"minRange", "minMedian", "numPCs"}, where + ".dataset");
        if (d.contains("minRange")) cfg.dataset.minRange = num(d["minRange"], where);
        if (d.contains("minMedian")) cfg.dataset.minMedian = num(d["minMedian"], where);
        if (d.contains("numPCs")) cfg.dataset.numPCs = static_cast<int>(num(d["numPCs"], where));
    }
    return cfg;
}

Config load_config(const std::string& path) {
    return parse_config_text(read_text_file(path), path);
}

std::string config_to_json(const Config& cfg) {
    json root;
    root["hyper"] = {{"r", cfg.hyper.r},
                     {"s", cfg.hyper.s},
                     {"m", cfg.hyper.m},
                     {"a", cfg.hyper.a},
                     {"b", cfg.hyper.b},
                     {"tau1", cfg.hyper.tau1},
                     {"tauShape", cfg.hyper.tauShape},
                     {"tauRate", cfg.hyper.tauRate},
                     {"psiShape", cfg.hyper.psiShape},
                     {"psiRate", cfg.hyper.psiRate}};
    json m = {{"burnIn", cfg.mcmc.burnIn},
              {"samples", cfg.mcmc.samples},
              {"thin", cfg.mcmc.thin},
              {"seed", cfg.mcmc.seed},
              {"threads", cfg.mcmc.threads}};
    if (cfg.mcmc.fixed.tau) m["fixedTau"] = *cfg.mcmc.fixed.tau;
    if (cfg.mcmc.fixed.psi) m["fixedPsi"] = *cfg.mcmc.fixed.psi;
    if (cfg.mcmc.fixed.rho) m["fixedRho"] = *cfg.mcmc.fixed.rho;
    if (cfg.mcmc.fixed.pi) m["fixedPi"] = *cfg.mcmc.fixed.pi;
    root["mcmc"] = std::move(m);
    root["evolution"] = {{"geneInclusionThreshold", cfg.evolution.geneInclusionThreshold},
                         {"factorGeneThreshold", cfg.evolution.factorGeneThreshold},
                         {"factorGeneCount", cfg.evolution.factorGeneCount},
                         {"maxGenes", cfg.evolution.maxGenes},
                         {"maxFactors", cfg.evolution.maxFactors},
                         {"stageBurnIn", cfg.evolution.stageBurnIn},
                         {"stageSamples", cfg.evolution.stageSamples},
                         {"maxAdmitPerStage", cfg.evolution.maxAdmitPerStage},
                         {"initialFactors", cfg.evolution.initialFactors},
                         {"forceGaussian", cfg.evolution.forceGaussian},
                         {"alphaShape", cfg.evolution.alphaShape},
                         {"alphaRate", cfg.evolution.alphaRate}};
    root["dataset"] = {{"minRange", cfg.dataset.minRange},
                       {"minMedian", cfg.dataset.minMedian},
                       {"numPCs", cfg.dataset.numPCs}};
    return root.dump(2) + "\n";
}

}  // namespace spanova
