#pragma once

#include <string>

#include "spanova/config.hpp"
#include "spanova/rng.hpp"
#include "spanova/summary.hpp"
#include "spanova/types.hpp"

namespace spanova {

struct SamplerState {
    Matrix B;     // p x K effects
    IntMatrix Z;  // p x K indicators; column 0 all ones
    Matrix Pi;    // p x K inclusion probabilities; column 0 fixed at 1
    Vector rho;   // per column; entry 0 fixed at 1
    Vector tau;   // per column; entry 0 is the intercept prior variance
    Vector psi;   // per gene
    Rng rng;
    long iteration = 0;
};

// Pr(z=1) given the point-mass weight pi and the conjugate Bayes factor for
// projection c = h'r with scale S = h'h, noise psi, effect prior N(0, tau)
double effect_inclusion_prob(double pi, double psi, double tau, double S, double c);

// Pr(pi = 0 | z = 0, rho) under the point-mass/beta mixture
double pi_zero_mass(double rho, double m);

struct ChainAccumulator {
    Matrix sumZ, sumBeta, sumBetaSq;
    Vector sumRho, sumTau, sumPsi;
    long saved = 0;
};

PosteriorSummary summarize_accumulator(const ChainAccumulator& acc, std::uint64_t seed);

class GibbsSampler {
  public:
    GibbsSampler(const RowMatrix& X, const Matrix& H, const HyperParameters& h,
                 const McmcControl& c);

    void sweep();
    void accumulate();
    PosteriorSummary run_chain();  // burn-in then sampling per the control settings
    PosteriorSummary summary() const;

    SamplerState& state() { return st_; }
    const SamplerState& state() const { return st_; }
    const ChainAccumulator& accumulator() const { return acc_; }

    // replace the data matrix keeping parameters (joint-simulation harness)
    void set_data(const RowMatrix& X);

    void check_invariants() const;

    std::string checkpoint_text() const;
    void restore_checkpoint(const std::string& text);

    int p() const { return p_; }
    int n() const { return n_; }
    int K() const { return K_; }

  private:
    void gene_update(int g, Rng& rng);
    void column_update(int j, Rng& rng);
    void psi_update(int g, Rng& rng);

    RowMatrix X_;
    Matrix H_;
    Vector colS_;
    RowMatrix R_;
    HyperParameters hp_;
    McmcControl ctl_;
    // overrides expanded to full-length vectors; empty = not fixed
    Vector fixedTau_, fixedPsi_, fixedRho_;
    bool piFixed_ = false;
    double piValue_ = 0.0;
    SamplerState st_;
    ChainAccumulator acc_;
    int p_ = 0, n_ = 0, K_ = 0;
};

PosteriorSummary run_chain(const RowMatrix& X, const Matrix& H, const HyperParameters& h,
                           const McmcControl& c);

}  // namespace spanova
