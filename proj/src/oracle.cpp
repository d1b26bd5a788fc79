#include "spanova/oracle.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "spanova/sampler.hpp"
#include "spanova/tsv.hpp"

namespace spanova {

Scenario scenario_from_name(const std::string& name) {
    Scenario sc;
    if (name == "prior")
        sc.kind = Scenario::Kind::Prior;
    else if (name == "recovery")
        sc.kind = Scenario::Kind::Recovery;
    else if (name == "noiseless")
        sc.kind = Scenario::Kind::Noiseless;
    else
        throw ValidationError("unknown scenario '" + name +
                              "' (expected prior, recovery or noiseless)");
    return sc;
}

namespace {

std::string padded_id(const char* prefix, int i, int count) {
    int width = 1;
    for (int c = count; c >= 10; c /= 10) ++width;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, std::min(width, 10), i + 1);
    return buf;
}

DesignMatrix table_style_design(int n) {
    SampleAnnotations ann;
    ann.factorNames = {"genotype", "age", "sex", "diet"};
    ann.levels = {{"WildType", "ApoEKO"}, {"6wk", "12wk"}, {"Female", "Male"}, {"Chow", "Western"}};
    ann.codes.resize(n, 4);
    for (int i = 0; i < n; ++i) {
        const int cell = i % 16;
        for (int f = 0; f < 4; ++f) ann.codes(i, f) = (cell >> f) & 1;
        ann.sampleIds.push_back(padded_id("s", i, n));
    }
    return build_design(ann);
}

DesignMatrix indicator_design(int n, int K, Rng& rng) {
    DesignMatrix d;
    d.H = Matrix::Zero(n, K);
    d.H.col(0).setOnes();
    d.kinds.assign(static_cast<std::size_t>(K), ColumnKind::DesignCell);
    d.kinds[0] = ColumnKind::Intercept;
    d.names.resize(static_cast<std::size_t>(K));
    d.names[0] = "intercept";
    for (int j = 1; j < K; ++j) {
        d.names[static_cast<std::size_t>(j)] = "cell_" + std::to_string(j + 1);
        for (;;) {
            double S = 0.0;
            for (int i = 0; i < n; ++i) {
                d.H(i, j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
                S += d.H(i, j);
            }
            if (S > 0.0 && S < n) break;  // avoid degenerate or intercept-aliased columns
        }
    }
    return d;
}

}  // namespace

SyntheticTruth draw_prior_params(const HyperParameters& h, int p, int K, Rng& rng) {
    SyntheticTruth t;
    t.B = Matrix::Zero(p, K);
    t.Z = IntMatrix::Zero(p, K);
    t.Z.col(0).setOnes();
    t.Pi = Matrix::Zero(p, K);
    t.Pi.col(0).setOnes();
    t.tau.resize(K);
    t.tau[0] = h.tau1;
    t.rho.resize(K);
    t.rho[0] = 1.0;
    t.psi.resize(p);

    for (int j = 1; j < K; ++j) {
        t.rho[j] = rng.beta(h.s * h.r, h.s * (1.0 - h.r));
        t.tau[j] = 1.0 / rng.gamma(h.tauShape, h.tauRate);
    }
    for (int g = 0; g < p; ++g) {
        t.psi[g] = 1.0 / rng.gamma(h.psiShape, h.psiRate);
        t.B(g, 0) = rng.normal(h.b, h.tau1);
        for (int j = 1; j < K; ++j) {
            const double pi =
                rng.uniform() < t.rho[j] ? rng.beta(h.a * h.m, h.a * (1.0 - h.m)) : 0.0;
            t.Pi(g, j) = pi;
            if (pi > 0.0 && rng.bernoulli(pi)) {
                t.Z(g, j) = 1;
                t.B(g, j) = rng.normal(0.0, t.tau[j]);
            }
        }
    }
    return t;
}

RowMatrix draw_data(const Matrix& B, const Vector& psi, const Matrix& H, Rng& rng) {
    const int p = static_cast<int>(B.rows());
    const int n = static_cast<int>(H.rows());
    RowMatrix X(p, n);
    X.noalias() = (B * H.transpose()).eval();
    for (int g = 0; g < p; ++g) {
        const double sd = std::sqrt(psi[g]);
        if (sd == 0.0) continue;
        for (int i = 0; i < n; ++i) X(g, i) += sd * rng.normal();
    }
    return X;
}

SimulatedData simulate(const HyperParameters& h, int p, int n, int K, const Scenario& sc,
                       std::uint64_t seed) {
    if (p < 1 || n < 1 || K < 1) throw ValidationError("dimensions must be positive");
    Rng rng(seed);
    SimulatedData out;
    out.design = sc.tableDesign ? table_style_design(n) : indicator_design(n, K, rng);
    const int Keff = out.design.K();

    switch (sc.kind) {
        case Scenario::Kind::Prior:
            out.truth = draw_prior_params(h, p, Keff, rng);
            break;
        case Scenario::Kind::Noiseless:
            out.truth = draw_prior_params(h, p, Keff, rng);
            out.truth.psi.setZero();
            break;
        case Scenario::Kind::Recovery: {
            auto& t = out.truth;
            t.B = Matrix::Zero(p, Keff);
            t.Z = IntMatrix::Zero(p, Keff);
            t.Z.col(0).setOnes();
            t.Pi = Matrix::Zero(p, Keff);
            t.Pi.col(0).setOnes();
            t.tau = Vector::Ones(Keff);
            t.tau[0] = h.tau1;
            t.rho = Vector::Constant(Keff, std::min(0.999, static_cast<double>(sc.perColumn) / p));
            t.rho[0] = 1.0;
            t.psi.resize(p);
            for (int g = 0; g < p; ++g) {
                t.psi[g] = sc.psiLo + (sc.psiHi - sc.psiLo) * rng.uniform();
                t.B(g, 0) = h.b + rng.normal();
            }
            const int planted = std::min(sc.perColumn, p);
            std::vector<int> idx(static_cast<std::size_t>(p));
            for (int j = 1; j < Keff; ++j) {
                for (int g = 0; g < p; ++g) idx[static_cast<std::size_t>(g)] = g;
                for (int k = 0; k < planted; ++k) {
                    const int swap =
                        k + static_cast<int>(rng.uniform() * static_cast<double>(p - k));
                    std::swap(idx[static_cast<std::size_t>(k)],
                              idx[static_cast<std::size_t>(std::min(swap, p - 1))]);
                    const int g = idx[static_cast<std::size_t>(k)];
                    const double mag = sc.effectLo + (sc.effectHi - sc.effectLo) * rng.uniform();
                    t.Z(g, j) = 1;
                    t.Pi(g, j) = h.m;
                    t.B(g, j) = rng.bernoulli(0.5) ? mag : -mag;
                }
            }
            break;
        }
    }
    out.truth.seed = seed;

    out.X.values = draw_data(out.truth.B, out.truth.psi, out.design.H, rng);
    out.X.sampleIds.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.X.sampleIds.push_back(padded_id("s", i, n));
    out.X.geneIds.reserve(static_cast<std::size_t>(p));
    for (int g = 0; g < p; ++g) out.X.geneIds.push_back(padded_id("g", g, p));
    return out;
}

std::string truth_to_text(const SyntheticTruth& t, const std::vector<std::string>& geneIds,
                          const std::vector<std::string>& columnNames) {
    const int p = static_cast<int>(t.B.rows());
    const int K = static_cast<int>(t.B.cols());
    if (static_cast<int>(geneIds.size()) != p || static_cast<int>(columnNames.size()) != K)
        throw ValidationError("truth labels do not match dimensions");
    std::ostringstream out;
    out << "# simulated truth\n# seed " << t.seed << '\n';
    out << "# tau";
    for (int j = 0; j < K; ++j) out << '\t' << format_full(t.tau[j]);
    out << "\n# rho";
    for (int j = 0; j < K; ++j) out << '\t' << format_full(t.rho[j]);
    out << "\n# psi";
    for (int g = 0; g < p; ++g) out << '\t' << format_full(t.psi[g]);
    out << '\n';
    out << "gene\tcolumn\tz\tbeta\n";
    for (int g = 0; g < p; ++g)
        for (int j = 0; j < K; ++j)
            if (t.Z(g, j) == 1)
                out << geneIds[static_cast<std::size_t>(g)] << '\t'
                    << columnNames[static_cast<std::size_t>(j)] << "\t1\t"
                    << format_full(t.B(g, j)) << '\n';
    return out.str();
}

namespace {

double log_mvn_density(const Vector& centered, const Matrix& Sigma) {
    const Eigen::LDLT<Matrix> ldlt(Sigma);
    if (ldlt.info() != Eigen::Success)
        throw ValidationError("covariance factorization failed in the enumeration oracle");
    const Vector d = ldlt.vectorD();
    double logDet = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) logDet += std::log(d[i]);
    const double quad = centered.dot(ldlt.solve(centered));
    const double n = static_cast<double>(centered.size());
    return -0.5 * (n * std::log(2.0 * M_PI) + logDet + quad);
}

double log_sum_exp(const std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

}  // namespace

Matrix exact_tiny_posterior(const RowMatrix& X, const Matrix& H, const HyperParameters& h,
                            const Vector& tau, const Vector& psi, const Vector& rho) {
    const int p = static_cast<int>(X.rows());
    const int n = static_cast<int>(X.cols());
    const int K = static_cast<int>(H.cols());
    if (H.rows() != n) throw ValidationError("design rows do not match sample count");
    if (tau.size() != K || rho.size() != K || psi.size() != p)
        throw ValidationError("fixed parameter vectors have wrong length");
    if (static_cast<long>(p) * (K - 1) > 12)
        throw ValidationError("enumeration bound exceeded: p*(K-1) must be <= 12");

    std::vector<int> freeCols;  // columns that can enter; degenerate ones stay out
    for (int j = 1; j < K; ++j)
        if (H.col(j).squaredNorm() > 0.0) freeCols.push_back(j);

    Matrix piStar = Matrix::Zero(p, K);
    piStar.col(0).setOnes();

    const int m = static_cast<int>(freeCols.size());
    const Vector h1 = H.col(0);
    for (int g = 0; g < p; ++g) {
        const Vector centered = X.row(g).transpose() - h.b * h1;
        std::vector<double> logPost(static_cast<std::size_t>(1) << m);
        for (unsigned cfg = 0; cfg < logPost.size(); ++cfg) {
            Matrix Sigma = psi[g] * Matrix::Identity(n, n);
            Sigma.noalias() += h.tau1 * h1 * h1.transpose();
            double logPrior = 0.0;
            for (int k = 0; k < m; ++k) {
                const int j = freeCols[static_cast<std::size_t>(k)];
                const double inclusion = rho[j] * h.m;
                if (cfg & (1u << k)) {
                    Sigma.noalias() += tau[j] * H.col(j) * H.col(j).transpose();
                    logPrior += std::log(inclusion);
                } else {
                    logPrior += std::log1p(-inclusion);
                }
            }
            logPost[cfg] = logPrior + log_mvn_density(centered, Sigma);
        }
        const double norm = log_sum_exp(logPost);
        for (int k = 0; k < m; ++k) {
            double acc = 0.0;
            for (unsigned cfg = 0; cfg < logPost.size(); ++cfg)
                if (cfg & (1u << k)) acc += std::exp(logPost[cfg] - norm);
            piStar(g, freeCols[static_cast<std::size_t>(k)]) = acc;
        }
    }
    return piStar;
}

double quadrature_pistar(const Vector& y, const Vector& h1, const Vector& h2,
                         const HyperParameters& h, double tau2, double psi, double rho2) {
    const int n = static_cast<int>(y.size());
    Matrix Sigma1 = psi * Matrix::Identity(n, n);
    Sigma1.noalias() += h.tau1 * h1 * h1.transpose();
    const Eigen::LDLT<Matrix> ldlt(Sigma1);
    const Vector d = ldlt.vectorD();
    double logDet = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) logDet += std::log(d[i]);
    const double logNorm = -0.5 * (n * std::log(2.0 * M_PI) + logDet);
    auto logML1 = [&](const Vector& u) { return logNorm - 0.5 * u.dot(ldlt.solve(u)); };

    const Vector centered = y - h.b * h1;
    const double logML0 = logML1(centered);

    // integrate N(beta; 0, tau2) * ML1(centered - beta h2) over a wide grid
    const double S = h2.squaredNorm();
    const double c = h2.dot(centered);
    const double guess = S > 0.0 ? c / S : 0.0;
    const double spreadData = S > 0.0 ? std::sqrt(psi / S) : std::sqrt(psi);
    const double lo = std::min(-10.0 * std::sqrt(tau2), guess - 10.0 * spreadData);
    const double hi = std::max(10.0 * std::sqrt(tau2), guess + 10.0 * spreadData);
    const int steps = 20000;  // Simpson, even count
    const double step = (hi - lo) / steps;
    const double logSqrt = -0.5 * std::log(2.0 * M_PI * tau2);
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        const double beta = lo + step * i;
        const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        const double logPrior = logSqrt - 0.5 * beta * beta / tau2;
        terms.push_back(std::log(w) + logPrior + logML1(centered - beta * h2));
    }
    const double logI = log_sum_exp(terms) + std::log(step / 3.0);

    const double inclusion = rho2 * h.m;
    const double logIn = std::log(inclusion) + logI;
    const double logOut = std::log1p(-inclusion) + logML0;
    const double mx = std::max(logIn, logOut);
    const double wIn = std::exp(logIn - mx);
    return wIn / (wIn + std::exp(logOut - mx));
}

namespace {

struct TinyInstance {
    RowMatrix X;
    Matrix H;
    HyperParameters h;
    Vector tau, psi, rho;
    int p = 0, n = 0, K = 0;
};

TinyInstance draw_tiny_instance(Rng& rng, int p, int n, int K) {
    TinyInstance t;
    t.p = p;
    t.n = n;
    t.K = K;
    t.h = default_hyperparameters();
    // broad, fast-mixing inclusion layer so short chains estimate pi* well
    t.h.m = 0.55;
    t.h.a = 2.5;
    t.h.b = 2.0;
    t.h.tau1 = 4.0;
    const double tau = 0.4 + 0.8 * rng.uniform();
    const double psi = 0.5 + 1.0 * rng.uniform();
    const double rho = 0.3 + 0.2 * rng.uniform();
    t.tau = Vector::Constant(K, tau);
    t.tau[0] = t.h.tau1;
    t.psi = Vector::Constant(p, psi);
    t.rho = Vector::Constant(K, rho);
    t.rho[0] = 1.0;

    const DesignMatrix design = indicator_design(n, K, rng);
    t.H = design.H;
    Matrix B = Matrix::Zero(p, K);
    for (int g = 0; g < p; ++g) {
        B(g, 0) = rng.normal(t.h.b, t.h.tau1);
        for (int j = 1; j < K; ++j)
            if (rng.bernoulli(0.5)) B(g, j) = rng.normal(0.0, tau);
    }
    t.X = draw_data(B, t.psi, t.H, rng);
    return t;
}

}  // namespace

TinyOracleReport tiny_oracle_suite(int instances, long samples, std::uint64_t seed,
                                   bool corruptTau) {
    if (instances < 1) throw ValidationError("need at least one instance");
    if (samples < 100) throw ValidationError("need at least 100 samples per instance");
    TinyOracleReport rep;
    rep.instances = instances;
    Rng rng(seed);
    for (int i = 0; i < instances; ++i) {
        const int p = 1 + static_cast<int>(rng.next_u64() % 3);
        const int n = 4 + static_cast<int>(rng.next_u64() % 5);
        const int K = 2 + static_cast<int>(rng.next_u64() % 2);
        const TinyInstance t = draw_tiny_instance(rng, p, n, K);

        const Matrix exact = exact_tiny_posterior(t.X, t.H, t.h, t.tau, t.psi, t.rho);

        McmcControl ctl;
        ctl.burnIn = 2000;
        ctl.samples = samples;
        ctl.thin = 1;
        ctl.seed = derive_stream_seed(seed, 10000 + static_cast<std::uint64_t>(i));
        const double tauRun = corruptTau ? 4.0 * t.tau[1] : t.tau[1];
        ctl.fixed.tau = std::vector<double>{tauRun};
        ctl.fixed.psi = std::vector<double>{t.psi[0]};
        ctl.fixed.rho = std::vector<double>{t.rho[1]};
        GibbsSampler sampler(t.X, t.H, t.h, ctl);
        const PosteriorSummary s = sampler.run_chain();

        double delta = 0.0;
        for (int g = 0; g < p; ++g)
            for (int j = 1; j < K; ++j)
                delta = std::max(delta, std::abs(s.piStar(g, j) - exact(g, j)));
        rep.deltas.push_back(delta);
        rep.maxDelta = std::max(rep.maxDelta, delta);
    }
    return rep;
}

GoldenCase golden_tiny_case() {
    Rng rng(424242);
    const TinyInstance t = draw_tiny_instance(rng, 2, 6, 3);
    GoldenCase gc;
    gc.X = t.X;
    gc.H = t.H;
    gc.h = t.h;
    gc.tau = t.tau;
    gc.psi = t.psi;
    gc.rho = t.rho;
    gc.geneIds = {"g1", "g2"};
    return gc;
}

std::string golden_table_text(const GoldenCase& gc, const Matrix& piStar) {
    std::ostringstream out;
    out << "# exact inclusion probabilities for the pinned tiny instance\n";
    out << "# p " << gc.X.rows() << " n " << gc.X.cols() << " K " << gc.H.cols() << '\n';
    out << "gene\tcolumn\tpi_star\n";
    char buf[64];
    for (Eigen::Index g = 0; g < piStar.rows(); ++g) {
        for (Eigen::Index j = 1; j < piStar.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", piStar(g, j));
            out << gc.geneIds[static_cast<std::size_t>(g)] << '\t' << j << '\t' << buf << '\n';
        }
    }
    return out.str();
}

namespace {

struct StatVec {
    double betaSq, z, rho, tauInv, psiInv;
};

StatVec stats_of(const Matrix& B, const IntMatrix& Z, const Vector& rho, const Vector& tau,
                 const Vector& psi) {
    const int p = static_cast<int>(B.rows());
    const int K = static_cast<int>(B.cols());
    StatVec s{0, 0, 0, 0, 0};
    for (int g = 0; g < p; ++g) {
        for (int j = 1; j < K; ++j) {
            s.betaSq += B(g, j) * B(g, j);
            s.z += Z(g, j);
        }
    }
    const double cells = static_cast<double>(p) * (K - 1);
    s.betaSq /= cells;
    s.z /= cells;
    for (int j = 1; j < K; ++j) {
        s.rho += rho[j];
        s.tauInv += 1.0 / tau[j];
    }
    s.rho /= (K - 1);
    s.tauInv /= (K - 1);
    for (int g = 0; g < p; ++g) s.psiInv += 1.0 / psi[g];
    s.psiInv /= p;
    return s;
}

}  // namespace

GewekeResult geweke_harness(const HyperParameters& h, int p, int n, int K, long sweeps,
                            std::uint64_t seed, bool corruptTau) {
    if (sweeps < 100) throw ValidationError("joint-distribution test needs at least 100 sweeps");
    if (p > 5 || n > 10) throw ValidationError("harness is meant for tiny instances");
    Rng rng(seed);
    const DesignMatrix design = indicator_design(n, K, rng);
    const Matrix& H = design.H;
    const int Keff = design.K();

    constexpr int kStats = 5;
    auto toArray = [](const StatVec& s) {
        return std::array<double, kStats>{s.betaSq, s.z, s.rho, s.tauInv, s.psiInv};
    };

    // marginal-conditional side: independent prior draws
    std::array<double, kStats> mcSum{}, mcSumSq{};
    for (long t = 0; t < sweeps; ++t) {
        const SyntheticTruth pr = draw_prior_params(h, p, Keff, rng);
        const auto a = toArray(stats_of(pr.B, pr.Z, pr.rho, pr.tau, pr.psi));
        for (int k = 0; k < kStats; ++k) {
            mcSum[static_cast<std::size_t>(k)] += a[static_cast<std::size_t>(k)];
            mcSumSq[static_cast<std::size_t>(k)] +=
                a[static_cast<std::size_t>(k)] * a[static_cast<std::size_t>(k)];
        }
    }

    // successive-conditional side: parameter sweep, then data redraw
    McmcControl ctl;
    ctl.burnIn = 0;
    ctl.samples = 1;
    ctl.seed = rng.next_u64();
    if (corruptTau) ctl.fixed.tau = std::vector<double>{h.priorTauMean()};

    SyntheticTruth st = draw_prior_params(h, p, Keff, rng);
    RowMatrix X = draw_data(st.B, st.psi, H, rng);
    GibbsSampler sampler(X, H, h, ctl);
    sampler.state().B = st.B;
    sampler.state().Z = st.Z;
    sampler.state().Pi = st.Pi;
    sampler.state().rho = st.rho;
    sampler.state().tau = st.tau;
    sampler.state().psi = st.psi;
    sampler.set_data(X);

    const long nBatches = 100;
    const long batchLen = sweeps / nBatches;
    std::array<double, kStats> scSum{};
    std::vector<std::array<double, kStats>> batchMeans(
        static_cast<std::size_t>(nBatches), std::array<double, kStats>{});
    for (long t = 0; t < nBatches * batchLen; ++t) {
        sampler.sweep();
        if (corruptTau) {
            // deliberately wrong shape in the effect-variance draw
            auto& s = sampler.state();
            for (int j = 1; j < Keff; ++j) {
                long n1 = 0;
                double ss = 0.0;
                for (int g = 0; g < p; ++g) {
                    if (s.Z(g, j) == 1) {
                        ++n1;
                        ss += s.B(g, j) * s.B(g, j);
                    }
                }
                s.tau[j] = 1.0 / rng.gamma(h.tauShape + 2.0 + 0.5 * static_cast<double>(n1),
                                           h.tauRate + 0.5 * ss);
            }
        }
        const auto& s = sampler.state();
        X = draw_data(s.B, s.psi, H, rng);
        sampler.set_data(X);
        const auto a = toArray(stats_of(s.B, s.Z, s.rho, s.tau, s.psi));
        for (int k = 0; k < kStats; ++k) {
            scSum[static_cast<std::size_t>(k)] += a[static_cast<std::size_t>(k)];
            batchMeans[static_cast<std::size_t>(t / batchLen)][static_cast<std::size_t>(k)] +=
                a[static_cast<std::size_t>(k)] / static_cast<double>(batchLen);
        }
    }

    GewekeResult res;
    res.statNames = {"mean_beta_sq", "mean_z", "mean_rho", "mean_tau_inv", "mean_psi_inv"};
    res.zScores.resize(kStats);
    res.mcMean.resize(kStats);
    res.scMean.resize(kStats);
    const double nMC = static_cast<double>(sweeps);
    const double nSC = static_cast<double>(nBatches * batchLen);
    for (int k = 0; k < kStats; ++k) {
        const double mMC = mcSum[static_cast<std::size_t>(k)] / nMC;
        const double varMC =
            std::max(0.0, mcSumSq[static_cast<std::size_t>(k)] / nMC - mMC * mMC);
        const double seMC = std::sqrt(varMC / nMC);
        const double mSC = scSum[static_cast<std::size_t>(k)] / nSC;
        double varBatch = 0.0;
        for (const auto& bm : batchMeans) {
            const double d = bm[static_cast<std::size_t>(k)] - mSC;
            varBatch += d * d;
        }
        varBatch /= static_cast<double>(nBatches - 1);
        const double seSC = std::sqrt(varBatch / static_cast<double>(nBatches));
        res.mcMean[k] = mMC;
        res.scMean[k] = mSC;
        res.zScores[k] = (mMC - mSC) / std::sqrt(seMC * seMC + seSC * seSC);
        res.maxAbsZ = std::max(res.maxAbsZ, std::abs(res.zScores[k]));
    }
    return res;
}

}  // namespace spanova
