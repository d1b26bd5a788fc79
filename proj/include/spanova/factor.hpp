#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spanova/config.hpp"
#include "spanova/dataset.hpp"
#include "spanova/rng.hpp"
#include "spanova/sampler.hpp"
#include "spanova/types.hpp"

namespace spanova {

// Dirichlet-process prior on the factor scores, truncated stick-breaking
// representation. forceGaussian collapses it to a single component pinned
// at the origin.
struct MixtureState {
    std::vector<int> assign;  // component id per sample
    Matrix locations;         // T x k component means
    Vector sticks;            // T stick fractions, last pinned at 1
    Vector logWeights;        // T
    double alpha = 1.0;       // concentration
};

struct FactorOptions {
    int factors = 1;
    bool forceGaussian = false;
    double alphaShape = 1.0;
    double alphaRate = 1.0;
    bool anchorConstraints = true;  // off only for prior-simulation checks
};

struct FactorFit {
    PosteriorSummary summary;  // control columns first, then factor loadings
    Matrix lambdaMean;         // k x n posterior mean scores
    std::vector<int> anchors;  // anchor gene row per factor
    int controlColumns = 0;
    int factors = 0;
};

// Joint sampler for X = B Hc' + A Lambda + E with the same point-mass/beta
// sparsity layers on every column of (B | A). Regressors live in one n x
// (Kc + k) matrix whose factor block is resampled each sweep.
class FactorSampler {
  public:
    FactorSampler(const RowMatrix& X, const Matrix& controls, const HyperParameters& h,
                  const McmcControl& c, const FactorOptions& opt);

    void sweep();
    void accumulate();
    FactorFit run_chain();
    FactorFit fit() const;

    SamplerState& state() { return st_; }
    const SamplerState& state() const { return st_; }
    const MixtureState& mixture() const { return mix_; }
    Matrix scores() const { return W_.rightCols(k_).transpose(); }
    const std::vector<int>& anchors() const { return anchors_; }

    void check_invariants() const;

    int p() const { return p_; }
    int n() const { return n_; }
    int controlCols() const { return Kc_; }
    int factors() const { return k_; }

  private:
    void gene_update(int g, Rng& rng);
    void column_update(int j, Rng& rng);
    void psi_update(int g, Rng& rng);
    void mixture_update(Rng& rng);
    void score_update(std::uint64_t salt);

    RowMatrix X_;
    Matrix W_;  // controls then factor scores
    Vector colS_;
    RowMatrix R_;
    HyperParameters hp_;
    McmcControl ctl_;
    FactorOptions opt_;
    Vector fixedTau_, fixedPsi_, fixedRho_;
    bool piFixed_ = false;
    double piValue_ = 0.0;
    SamplerState st_;
    MixtureState mix_;
    ChainAccumulator acc_;
    Matrix sumLambda_;
    std::vector<int> anchors_;
    std::vector<int> anchorFactorOf_;  // -1 when the gene is not an anchor
    int p_ = 0, n_ = 0, Kc_ = 0, k_ = 0, K_ = 0, T_ = 1;
};

FactorFit fit_factors(const RowMatrix& X, const Matrix& controls, const HyperParameters& h,
                      const McmcControl& c, const FactorOptions& opt);

// Marginal inclusion probability of each fitted factor for one held-out gene,
// by exact enumeration over factor subsets with plug-in scores, column
// variances and inclusion rates from the fit.
Vector predictive_inclusion(const FactorFit& fit, const Vector& y, const HyperParameters& h);

struct StageRecord {
    int stage = 0;    // 1-based
    int factors = 0;  // count after this stage's decision
    bool triedFactor = false;
    bool keptFactor = false;
    std::vector<std::string> admitted;
    int geneCount = 0;  // in-model genes after admissions
};

struct EvolveResult {
    FactorFit fit;
    std::vector<std::string> genes;  // admission order, seeds first
    std::vector<int> rows;           // matching row indices into the pool
    std::vector<StageRecord> stages;
};

// Stagewise search: refit, try one extra factor, then admit the best-scoring
// outside genes. Stops at the first stage that changes nothing.
EvolveResult evolve(const ExpressionMatrix& pool, const std::vector<std::string>& seeds,
                    const Matrix& controls, const HyperParameters& h, const EvolutionControl& ec,
                    std::uint64_t seed, int threads = 1);

std::string stage_log_to_text(const std::vector<StageRecord>& stages);

}  // namespace spanova
