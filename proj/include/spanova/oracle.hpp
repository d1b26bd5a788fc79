#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spanova/config.hpp"
#include "spanova/dataset.hpp"
#include "spanova/rng.hpp"
#include "spanova/types.hpp"

namespace spanova {

struct SyntheticTruth {
    Matrix B;    // p x K, column 0 = intercept
    IntMatrix Z;
    Matrix Pi;
    Vector tau;  // entry 0 = intercept prior variance
    Vector psi;
    Vector rho;  // entry 0 = 1
    Matrix A;       // factor scenarios only
    Matrix Lambda;  // factor scenarios only
    std::uint64_t seed = 0;
};

struct Scenario {
    enum class Kind { Prior, Recovery, Noiseless };
    Kind kind = Kind::Prior;
    bool tableDesign = false;  // two-level four-factor saturated indicator design
    int perColumn = 50;        // planted genes per column (recovery)
    double effectLo = 0.5, effectHi = 1.5;
    double psiLo = 0.01, psiHi = 0.04;
};

Scenario scenario_from_name(const std::string& name);

struct SimulatedData {
    ExpressionMatrix X;
    DesignMatrix design;
    SyntheticTruth truth;
};

SimulatedData simulate(const HyperParameters& h, int p, int n, int K, const Scenario& sc,
                       std::uint64_t seed);

// sparse long-format dump of the generative state (z=1 rows only)
std::string truth_to_text(const SyntheticTruth& t, const std::vector<std::string>& geneIds,
                          const std::vector<std::string>& columnNames);

// prior parameter draw under the full sparsity hierarchy (shared with the
// joint-distribution harness)
SyntheticTruth draw_prior_params(const HyperParameters& h, int p, int K, Rng& rng);
RowMatrix draw_data(const Matrix& B, const Vector& psi, const Matrix& H, Rng& rng);

// exact per-gene posterior inclusion probabilities by enumerating indicator
// configurations with effects integrated out; needs fixed tau/psi/rho
Matrix exact_tiny_posterior(const RowMatrix& X, const Matrix& H, const HyperParameters& h,
                            const Vector& tau, const Vector& psi, const Vector& rho);

// independent one-dimensional quadrature route for the single-gene, single
// candidate column case
double quadrature_pistar(const Vector& y, const Vector& h1, const Vector& h2,
                         const HyperParameters& h, double tau2, double psi, double rho2);

// randomized agreement suite between the Gibbs sampler (fixed tau/psi/rho)
// and the enumeration oracle on tiny instances; corruptTau quadruples the
// sampler's effect variance to prove the comparison has teeth
struct TinyOracleReport {
    int instances = 0;
    double maxDelta = 0.0;
    std::vector<double> deltas;
};

TinyOracleReport tiny_oracle_suite(int instances, long samples, std::uint64_t seed,
                                   bool corruptTau = false);

// one pinned instance whose exact inclusion probabilities are kept as a
// golden file
struct GoldenCase {
    RowMatrix X;
    Matrix H;
    HyperParameters h;
    Vector tau, psi, rho;
    std::vector<std::string> geneIds;
};

GoldenCase golden_tiny_case();
std::string golden_table_text(const GoldenCase& gc, const Matrix& piStar);

struct GewekeResult {
    std::vector<std::string> statNames;
    Vector zScores;
    Vector mcMean, scMean;
    double maxAbsZ = 0.0;
};

// marginal-conditional vs successive-conditional moment comparison; the
// corruptTau fixture replaces the effect-variance draw with a deliberately
// wrong one to prove the test has teeth
GewekeResult geweke_harness(const HyperParameters& h, int p, int n, int K, long sweeps,
                            std::uint64_t seed, bool corruptTau = false);

}  // namespace spanova
