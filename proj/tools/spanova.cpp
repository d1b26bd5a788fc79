#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spanova/config.hpp"
#include "spanova/dataset.hpp"
#include "spanova/factor.hpp"
#include "spanova/manifest.hpp"
#include "spanova/oracle.hpp"
#include "spanova/sampler.hpp"
#include "spanova/signature.hpp"
#include "spanova/summary.hpp"
#include "spanova/tsv.hpp"
#include "spanova/version.hpp"

namespace fs = std::filesystem;
using namespace spanova;

namespace {

struct GlobalFlags {
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 0;
    int threads = 1;
    bool dryRun = false;
    bool allowRaw = false;
    CLI::Option* seedOpt = nullptr;
    CLI::Option* threadsOpt = nullptr;
};

void add_global_flags(CLI::App* cmd, GlobalFlags& g) {
    cmd->add_option("--config", g.config, "settings file (JSON)")->check(CLI::ExistingFile);
    g.seedOpt = cmd->add_option("--seed", g.seed, "random seed");
    g.threadsOpt = cmd->add_option("--threads", g.threads, "worker thread count");
    cmd->add_option("--out", g.out, "output directory");
    cmd->add_flag("--dry-run", g.dryRun, "validate inputs and settings, then stop");
    cmd->add_flag("--allow-raw", g.allowRaw, "accept uncorrected expression input");
}

// precedence: flag, then config file, then SPANOVA_THREADS, then 1
Config resolve_config(const GlobalFlags& g) {
    Config cfg;
    bool cfgHasThreads = false, cfgHasSeed = false;
    if (!g.config.empty()) {
        cfg = load_config(g.config);
        const auto j = nlohmann::json::parse(read_text_file(g.config));
        if (j.contains("mcmc") && j["mcmc"].is_object()) {
            cfgHasThreads = j["mcmc"].contains("threads");
            cfgHasSeed = j["mcmc"].contains("seed");
        }
    }
    if (!cfgHasThreads) {
        if (const char* env = std::getenv("SPANOVA_THREADS"))
            cfg.mcmc.threads = static_cast<int>(parse_long_strict(env, "SPANOVA_THREADS"));
    }
    if (g.threadsOpt->count() > 0) cfg.mcmc.threads = g.threads;
    if (g.seedOpt->count() > 0)
        cfg.mcmc.seed = g.seed;
    else if (!cfgHasSeed)
        cfg.mcmc.seed = 0;
    return cfg;
}

std::string out_path(const GlobalFlags& g, const std::string& name) {
    return (fs::path(g.out) / name).string();
}

void ensure_out_dir(const GlobalFlags& g) {
    if (!g.out.empty()) fs::create_directories(g.out);
}

RunManifest start_manifest(const std::string& command, const Config& cfg) {
    RunManifest m;
    m.command = command;
    m.version = kVersion;
    m.seed = cfg.mcmc.seed;
    m.threads = cfg.mcmc.threads;
    m.startedAt = utc_timestamp_now();
    m.configJson = config_to_json(cfg);
    return m;
}

void finish_manifest(RunManifest& m, const GlobalFlags& g,
                     const std::vector<std::string>& inputs,
                     const std::vector<std::string>& outputs) {
    m.inputs.clear();
    for (const auto& p : inputs)
        if (!p.empty()) m.inputs.emplace_back(p, sha256_file_hex(p));
    m.outputs = outputs;
    m.finishedAt = utc_timestamp_now();
    write_manifest(out_path(g, "manifest.json"), m);
}

std::vector<std::string> read_gene_list(const std::string& path) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& line : split_lines(read_text_file(path))) {
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_tabs(line);
        if (!seen.insert(fields[0]).second)
            throw ValidationError(path + ": duplicate gene id '" + fields[0] + "'");
        out.push_back(fields[0]);
    }
    if (out.empty()) throw ValidationError("gene list is empty: " + path);
    return out;
}

std::vector<int> rows_for_ids(const ExpressionMatrix& X, const std::vector<std::string>& ids) {
    std::unordered_map<std::string, int> index;
    for (int g = 0; g < X.p(); ++g) index.emplace(X.geneIds[static_cast<std::size_t>(g)], g);
    std::vector<int> rows;
    std::vector<std::string> missing;
    for (const auto& id : ids) {
        const auto it = index.find(id);
        if (it == index.end())
            missing.push_back(id);
        else
            rows.push_back(it->second);
    }
    if (!missing.empty()) {
        std::string msg = "genes not present in the expression matrix:";
        for (const auto& s : missing) msg += " " + s;
        throw ValidationError(msg);
    }
    return rows;
}

void require_valid(const Config& cfg) {
    const auto violations = validate(cfg.hyper, cfg.mcmc);
    if (!violations.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& v : violations) msg += " " + v + ";";
        throw ValidationError(msg);
    }
}

// ---------------------------------------------------------------- fit-anova

struct FitAnovaArgs {
    std::string expression, annotations, designPath, housekeeping, resume;
    std::vector<std::string> decompose;
    long checkpointEvery = 0;
    bool noFilter = false;
};

int run_fit_anova(const GlobalFlags& g, const FitAnovaArgs& a) {
    const Config cfg = resolve_config(g);
    require_valid(cfg);
    RunManifest man = start_manifest("fit-anova", cfg);

    if (a.annotations.empty() == a.designPath.empty())
        throw ValidationError("pass exactly one of --annotations or --design");

    const ExpressionMatrix X = load_expression(a.expression);
    DesignMatrix design;
    if (!a.annotations.empty()) {
        const SampleAnnotations ann = load_annotations(a.annotations);
        if (ann.sampleIds != X.sampleIds)
            throw ValidationError("annotation samples do not match expression columns");
        design = build_design(ann);
    } else {
        LoadedDesign ld = load_design(a.designPath);
        if (ld.sampleIds != X.sampleIds)
            throw ValidationError("design samples do not match expression columns");
        design = std::move(ld.design);
    }

    if (!a.housekeeping.empty()) {
        const auto hkIds = read_gene_list(a.housekeeping);
        const ExpressionMatrix hk = subset_genes(X, rows_for_ids(X, hkIds));
        design = with_covariates(design, housekeeping_pcs(hk, cfg.dataset.numPCs));
    }

    const ExpressionMatrix Xf =
        a.noFilter ? X : filter_genes(X, cfg.dataset.minRange, cfg.dataset.minMedian);
    if (Xf.p() < 1) throw ValidationError("no genes pass the variation/intensity filter");

    if (g.dryRun) {
        std::cout << "dry run: " << Xf.p() << " genes x " << Xf.n() << " samples, " << design.K()
                  << " regressor columns, " << (cfg.mcmc.burnIn + cfg.mcmc.samples)
                  << " sweeps planned\n";
        return 0;
    }
    ensure_out_dir(g);

    GibbsSampler sampler(Xf.values, design.H, cfg.hyper, cfg.mcmc);
    if (!a.resume.empty()) sampler.restore_checkpoint(read_text_file(a.resume));
    const std::string ckptPath = out_path(g, "checkpoint.txt");
    const long total = cfg.mcmc.burnIn + cfg.mcmc.samples;
    while (sampler.state().iteration < total) {
        sampler.sweep();
        const long t = sampler.state().iteration;
        if (t > cfg.mcmc.burnIn && (t - cfg.mcmc.burnIn) % cfg.mcmc.thin == 0)
            sampler.accumulate();
        if (a.checkpointEvery > 0 && t < total && t % a.checkpointEvery == 0)
            write_text_file_atomic(ckptPath, sampler.checkpoint_text());
    }
    write_text_file_atomic(ckptPath, sampler.checkpoint_text());

    const PosteriorSummary s = sampler.summary();
    const SummaryTable table = make_summary_table(s, Xf.geneIds, design, Xf.sampleIds);
    write_text_file_atomic(out_path(g, "summary.tsv"), summary_table_to_text(table));
    write_text_file_atomic(out_path(g, "psi.tsv"), psi_table_to_text(Xf.geneIds, s.psiMean));

    std::vector<int> artifactCols;
    for (int j = 0; j < design.K(); ++j)
        if (design.kinds[static_cast<std::size_t>(j)] == ColumnKind::ArtifactCovariate)
            artifactCols.push_back(j);
    save_expression(corrected_expression(Xf, s, design.H, artifactCols, true),
                    out_path(g, "corrected.tsv"));

    std::vector<std::string> outputs = {"summary.tsv", "psi.tsv", "corrected.tsv",
                                        "checkpoint.txt"};
    if (!a.decompose.empty()) {
        const auto rows = rows_for_ids(Xf, a.decompose);
        std::string text;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const GeneDecomposition d =
                decompose_gene(Xf.values, s, design.H, design.names, rows[i]);
            text += decomposition_to_text(a.decompose[i], d, Xf.sampleIds);
        }
        write_text_file_atomic(out_path(g, "decompositions.tsv"), text);
        outputs.push_back("decompositions.tsv");
    }

    finish_manifest(man, g, {a.expression, a.annotations, a.designPath, a.housekeeping,
                             a.resume, g.config},
                    outputs);
    std::cout << "fit complete: " << Xf.p() << " genes, " << design.K() << " columns, "
              << s.sampleCount << " retained samples\n";
    return 0;
}

// ---------------------------------------------------------------- signature

struct SignatureArgs {
    std::string expression, genes, summary, projectTarget, mapPath;
};

int run_signature(const GlobalFlags& g, const SignatureArgs& a) {
    const Config cfg = resolve_config(g);
    RunManifest man = start_manifest("signature", cfg);

    ExpressionMatrix X = load_expression(a.expression);
    if (!X.corrected) {
        if (!a.summary.empty()) {
            const SummaryTable t = load_summary_table(a.summary);
            if (t.sampleIds != X.sampleIds)
                throw ValidationError("summary samples do not match expression columns");
            ExpressionMatrix aligned = subset_genes(X, rows_for_ids(X, t.geneIds));
            aligned.values = corrected_from_table(aligned.values, t);
            aligned.corrected = true;
            X = std::move(aligned);
        } else if (!g.allowRaw) {
            throw ValidationError(
                "expression input is not corrected; pass --summary to correct it here or "
                "--allow-raw to proceed anyway");
        }
    }

    const auto ids = read_gene_list(a.genes);
    const ExpressionMatrix sub = subset_genes(X, rows_for_ids(X, ids));
    auto sig = metagene(sub.values, sub.geneIds, sub.sampleIds);
    if (!sig) throw ValidationError("gene set carries no signal (all-zero submatrix)");
    sig->setName = fs::path(a.genes).stem().string();
    sig->sourceId = fs::path(a.expression).stem().string();

    if (g.dryRun) {
        std::cout << "dry run: signature over " << sig->geneIds.size() << " genes, "
                  << sig->sampleIds.size() << " samples\n";
        return 0;
    }
    ensure_out_dir(g);

    write_text_file_atomic(out_path(g, "signature.tsv"), signature_to_text(*sig));
    write_text_file_atomic(out_path(g, "scores.tsv"),
                           scores_to_text(sig->sampleIds, sig->scores));
    std::vector<std::string> outputs = {"signature.tsv", "scores.tsv"};

    if (!a.projectTarget.empty()) {
        if (a.mapPath.empty()) throw ValidationError("--project needs --map");
        const ExpressionMatrix Y = load_expression(a.projectTarget);
        const GeneMap map = resolve_gene_map(load_gene_map(a.mapPath));
        const Matrix YQ = align_target_rows(*sig, Y, map);
        write_text_file_atomic(out_path(g, "projected.tsv"),
                               scores_to_text(Y.sampleIds, project(*sig, YQ)));
        outputs.push_back("projected.tsv");
    }

    finish_manifest(man, g, {a.expression, a.genes, a.summary, a.projectTarget, a.mapPath,
                             g.config},
                    outputs);
    std::cout << "signature over " << sig->geneIds.size() << " genes written\n";
    return 0;
}

// ------------------------------------------------------------------- evolve

struct EvolveArgs {
    std::string expression, seeds, housekeeping;
};

int run_evolve(const GlobalFlags& g, const EvolveArgs& a) {
    const Config cfg = resolve_config(g);
    require_valid(cfg);
    if (const auto bad = validate_evolution(cfg.evolution); !bad.empty())
        throw ValidationError("invalid evolution settings: " + bad.front());
    RunManifest man = start_manifest("evolve", cfg);

    const ExpressionMatrix X = load_expression(a.expression);
    const auto seedIds = read_gene_list(a.seeds);

    Matrix controls = Matrix::Ones(X.n(), 1);
    std::vector<std::string> controlNames = {"intercept"};
    std::vector<ColumnKind> controlKinds = {ColumnKind::Intercept};
    if (!a.housekeeping.empty()) {
        const auto hkIds = read_gene_list(a.housekeeping);
        const Matrix pcs =
            housekeeping_pcs(subset_genes(X, rows_for_ids(X, hkIds)), cfg.dataset.numPCs);
        controls.conservativeResize(Eigen::NoChange, 1 + pcs.cols());
        controls.rightCols(pcs.cols()) = pcs;
        for (Eigen::Index c = 0; c < pcs.cols(); ++c) {
            controlNames.push_back("artifact_" + std::to_string(c + 1));
            controlKinds.push_back(ColumnKind::ArtifactCovariate);
        }
    }

    if (g.dryRun) {
        rows_for_ids(X, seedIds);  // seed presence check
        std::cout << "dry run: pool of " << X.p() << " genes, " << seedIds.size()
                  << " seeds, stage MCMC " << cfg.evolution.stageBurnIn << "/"
                  << cfg.evolution.stageSamples << "\n";
        return 0;
    }
    ensure_out_dir(g);

    const EvolveResult res =
        evolve(X, seedIds, controls, cfg.hyper, cfg.evolution, cfg.mcmc.seed, cfg.mcmc.threads);

    std::string geneText;
    for (const auto& id : res.genes) geneText += id + "\n";
    write_text_file_atomic(out_path(g, "genes.txt"), geneText);
    write_text_file_atomic(out_path(g, "stages.tsv"), stage_log_to_text(res.stages));

    {
        std::ostringstream sc;
        sc << "sample_id";
        for (int f = 0; f < res.fit.factors; ++f) sc << "\tfactor_" << (f + 1);
        sc << '\n';
        for (int i = 0; i < X.n(); ++i) {
            sc << X.sampleIds[static_cast<std::size_t>(i)];
            for (int f = 0; f < res.fit.factors; ++f)
                sc << '\t' << format_full(res.fit.lambdaMean(f, i));
            sc << '\n';
        }
        write_text_file_atomic(out_path(g, "scores.tsv"), sc.str());
    }

    {
        DesignMatrix d;
        d.names = controlNames;
        d.kinds = controlKinds;
        for (int f = 0; f < res.fit.factors; ++f) {
            d.names.push_back("factor_" + std::to_string(f + 1));
            d.kinds.push_back(ColumnKind::Factor);
        }
        d.H.resize(X.n(), controls.cols() + res.fit.factors);
        d.H.leftCols(controls.cols()) = controls;
        d.H.rightCols(res.fit.factors) = res.fit.lambdaMean.transpose();
        const SummaryTable table =
            make_summary_table(res.fit.summary, res.genes, d, X.sampleIds);
        write_text_file_atomic(out_path(g, "loadings.tsv"), summary_table_to_text(table));
    }

    finish_manifest(man, g, {a.expression, a.seeds, a.housekeeping, g.config},
                    {"genes.txt", "stages.tsv", "scores.tsv", "loadings.tsv"});
    std::cout << "evolve finished: " << res.genes.size() << " genes, " << res.fit.factors
              << " factors, " << res.stages.size() << " stages\n";
    return 0;
}

// ----------------------------------------------------------------- simulate

struct SimulateArgs {
    int genes = 200, samples = 60, columns = 4;
    std::string scenario = "prior";
    bool tableDesign = false;
};

int run_simulate(const GlobalFlags& g, const SimulateArgs& a) {
    const Config cfg = resolve_config(g);
    RunManifest man = start_manifest("simulate", cfg);

    Scenario sc = scenario_from_name(a.scenario);
    sc.tableDesign = a.tableDesign;
    if (g.dryRun) {
        std::cout << "dry run: scenario " << a.scenario << ", " << a.genes << " x " << a.samples
                  << "\n";
        return 0;
    }
    ensure_out_dir(g);

    const SimulatedData sim =
        simulate(cfg.hyper, a.genes, a.samples, a.columns, sc, cfg.mcmc.seed);
    save_expression(sim.X, out_path(g, "expression.tsv"));
    write_text_file_atomic(out_path(g, "design.tsv"),
                           design_to_text(sim.design, sim.X.sampleIds));
    write_text_file_atomic(out_path(g, "truth.tsv"),
                           truth_to_text(sim.truth, sim.X.geneIds, sim.design.names));

    finish_manifest(man, g, {g.config}, {"expression.tsv", "design.tsv", "truth.tsv"});
    std::cout << "simulated " << sim.X.p() << " genes x " << sim.X.n() << " samples ("
              << a.scenario << ", " << sim.design.K() << " design columns)\n";
    return 0;
}

// ------------------------------------------------------------- oracle-check

struct OracleArgs {
    int instances = 20;
    long samples = 50000;
    double tolerance = 0.02;
    bool corruptTau = false;
    std::string emitGolden;
};

int run_oracle_check(const GlobalFlags& g, const OracleArgs& a) {
    const Config cfg = resolve_config(g);
    RunManifest man = start_manifest("oracle-check", cfg);

    if (!a.emitGolden.empty()) {
        const GoldenCase gc = golden_tiny_case();
        const Matrix pi = exact_tiny_posterior(gc.X, gc.H, gc.h, gc.tau, gc.psi, gc.rho);
        if (g.dryRun) {
            std::cout << "dry run: would write golden table\n";
            return 0;
        }
        ensure_out_dir(g);
        write_text_file_atomic(a.emitGolden, golden_table_text(gc, pi));
        finish_manifest(man, g, {g.config}, {a.emitGolden});
        std::cout << "golden table written to " << a.emitGolden << "\n";
        return 0;
    }

    if (g.dryRun) {
        std::cout << "dry run: " << a.instances << " instances at " << a.samples
                  << " samples each\n";
        return 0;
    }
    ensure_out_dir(g);

    const TinyOracleReport rep =
        tiny_oracle_suite(a.instances, a.samples, cfg.mcmc.seed, a.corruptTau);

    std::ostringstream rp;
    rp << "# tolerance " << format_full(a.tolerance) << "\ninstance\tmax_abs_delta\n";
    for (std::size_t i = 0; i < rep.deltas.size(); ++i)
        rp << (i + 1) << '\t' << format_full(rep.deltas[i]) << '\n';
    write_text_file_atomic(out_path(g, "oracle_report.tsv"), rp.str());
    finish_manifest(man, g, {g.config}, {"oracle_report.tsv"});

    const bool ok = rep.maxDelta < a.tolerance;
    std::cout << "oracle check: max |delta pi*| = " << format_full(rep.maxDelta) << " over "
              << rep.instances << " instances (tolerance " << format_full(a.tolerance) << ") -> "
              << (ok ? "ok" : "MISMATCH") << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse Bayesian ANOVA and factor models for expression data"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    GlobalFlags gFit, gSig, gEvo, gSim, gOra;
    FitAnovaArgs fitArgs;
    SignatureArgs sigArgs;
    EvolveArgs evoArgs;
    SimulateArgs simArgs;
    OracleArgs oraArgs;

    auto* fit = app.add_subcommand("fit-anova", "fit the sparse regression model to a dataset");
    fit->add_option("--expression", fitArgs.expression, "expression matrix (TSV)")
        ->required()
        ->check(CLI::ExistingFile);
    fit->add_option("--annotations", fitArgs.annotations, "sample annotations (TSV)")
        ->check(CLI::ExistingFile);
    fit->add_option("--design", fitArgs.designPath, "explicit design matrix (TSV)")
        ->check(CLI::ExistingFile);
    fit->add_option("--housekeeping", fitArgs.housekeeping,
                    "control gene list for artifact covariates")
        ->check(CLI::ExistingFile);
    fit->add_option("--resume", fitArgs.resume, "checkpoint file to continue from")
        ->check(CLI::ExistingFile);
    fit->add_option("--checkpoint-every", fitArgs.checkpointEvery,
                    "write the checkpoint every N sweeps");
    fit->add_option("--decompose", fitArgs.decompose,
                    "gene ids to decompose into fitted effect series");
    fit->add_flag("--no-filter", fitArgs.noFilter, "skip the variation/intensity gene filter");
    add_global_flags(fit, gFit);

    auto* sig = app.add_subcommand("signature", "extract a metagene signature for a gene set");
    sig->add_option("--expression", sigArgs.expression, "expression matrix (TSV)")
        ->required()
        ->check(CLI::ExistingFile);
    sig->add_option("--genes", sigArgs.genes, "gene set, one id per line")
        ->required()
        ->check(CLI::ExistingFile);
    sig->add_option("--summary", sigArgs.summary, "fitted summary table used to correct raw input")
        ->check(CLI::ExistingFile);
    sig->add_option("--project", sigArgs.projectTarget, "target expression matrix to project onto")
        ->check(CLI::ExistingFile);
    sig->add_option("--map", sigArgs.mapPath, "source-to-target gene map (TSV)")
        ->check(CLI::ExistingFile);
    add_global_flags(sig, gSig);

    auto* evo = app.add_subcommand("evolve", "grow a latent factor model from seed genes");
    evo->add_option("--expression", evoArgs.expression, "expression pool (TSV)")
        ->required()
        ->check(CLI::ExistingFile);
    evo->add_option("--seeds", evoArgs.seeds, "seed gene list")
        ->required()
        ->check(CLI::ExistingFile);
    evo->add_option("--housekeeping", evoArgs.housekeeping,
                    "control gene list for artifact covariates")
        ->check(CLI::ExistingFile);
    add_global_flags(evo, gEvo);

    auto* sim = app.add_subcommand("simulate", "draw a synthetic dataset from the model");
    sim->add_option("--genes", simArgs.genes, "gene count");
    sim->add_option("--samples", simArgs.samples, "sample count");
    sim->add_option("--columns", simArgs.columns, "design columns (indicator designs)");
    sim->add_option("--scenario", simArgs.scenario, "prior, recovery or noiseless");
    sim->add_flag("--table-design", simArgs.tableDesign,
                  "use the saturated four-factor two-level design");
    add_global_flags(sim, gSim);

    auto* ora = app.add_subcommand("oracle-check",
                                   "compare the sampler against exact enumeration");
    ora->add_option("--instances", oraArgs.instances, "number of random tiny instances");
    ora->add_option("--samples", oraArgs.samples, "retained samples per instance");
    ora->add_option("--tolerance", oraArgs.tolerance, "max allowed |delta pi*|");
    ora->add_flag("--corrupt-tau", oraArgs.corruptTau,
                  "run with a deliberately wrong effect variance (must fail)");
    ora->add_option("--emit-golden", oraArgs.emitGolden,
                    "write the pinned instance's exact probabilities to this file");
    add_global_flags(ora, gOra);

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit->parsed()) return run_fit_anova(gFit, fitArgs);
        if (sig->parsed()) return run_signature(gSig, sigArgs);
        if (evo->parsed()) return run_evolve(gEvo, evoArgs);
        if (sim->parsed()) return run_simulate(gSim, simArgs);
        if (ora->parsed()) return run_oracle_check(gOra, oraArgs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
