#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spanova {

struct HyperParameters {
    double r = 0.001;       // base-rate prior mean
    double s = 20.0;        // base-rate prior precision
    double m = 0.9;         // nonzero-inclusion prior mean (columns j >= 2)
    double a = 10.0;        // its precision
    double b = 8.0;         // intercept prior mean
    double tau1 = 100.0;    // intercept prior variance
    double tauShape = 2.5;  // prior on effect precision tau_j^{-1}
    double tauRate = 0.5;
    double psiShape = 12.5;  // prior on residual precision psi_g^{-1}
    double psiRate = 0.05;

    double priorTauMean() const { return tauRate / (tauShape - 1.0); }
    double priorPsiMean() const { return psiRate / (psiShape - 1.0); }
};

HyperParameters default_hyperparameters();

// scalar entries broadcast; vectors must match the column/gene count
struct FixedOverrides {
    std::optional<std::vector<double>> tau;  // columns j >= 2
    std::optional<std::vector<double>> psi;  // per gene
    std::optional<std::vector<double>> rho;  // columns j >= 2
    std::optional<double> pi;                // broadcast over genes and columns j >= 2

    bool any() const { return tau || psi || rho || pi; }
};

struct McmcControl {
    long burnIn = 10000;
    long samples = 100000;
    int thin = 1;
    std::uint64_t seed = 0;
    int threads = 1;
    FixedOverrides fixed;
};

struct EvolutionControl {
    double geneInclusionThreshold = 0.75;
    double factorGeneThreshold = 0.75;
    int factorGeneCount = 5;
    int maxGenes = 150;
    int maxFactors = 10;
    long stageBurnIn = 2000;
    long stageSamples = 8000;
    int maxAdmitPerStage = 25;
    int initialFactors = 1;
    bool forceGaussian = false;
    double alphaShape = 1.0;  // concentration prior for the factor-score mixture
    double alphaRate = 1.0;
};

struct DatasetControl {
    double minRange = 0.25;
    double minMedian = 5.0;
    int numPCs = 5;
};

struct Config {
    HyperParameters hyper;
    McmcControl mcmc;
    EvolutionControl evolution;
    DatasetControl dataset;
};

std::vector<std::string> validate(const HyperParameters& h, const McmcControl& c);
std::vector<std::string> validate_evolution(const EvolutionControl& ec);

Config parse_config_text(const std::string& text, const std::string& where);
Config load_config(const std::string& path);
std::string config_to_json(const Config& cfg);

}  // namespace spanova
