#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "spanova/factor.hpp"
#include "spanova/rng.hpp"
#include "spanova/tsv.hpp"

using namespace spanova;

namespace {

struct Planted {
    RowMatrix X;
    Matrix loadings;  // p x k
    Matrix scores;    // k x n
};

// rank-k structure on the first blockSize*k genes, noise elsewhere
Planted plant(int p, int n, int k, int blockSize, double noiseSd, std::uint64_t seed) {
    Rng rng(seed);
    Planted out;
    out.loadings = Matrix::Zero(p, k);
    out.scores.resize(k, n);
    for (int f = 0; f < k; ++f) {
        for (int i = 0; i < n; ++i) out.scores(f, i) = rng.normal();
        for (int g = f * blockSize; g < (f + 1) * blockSize; ++g)
            out.loadings(g, f) = 1.0 + 0.2 * rng.normal();
    }
    out.X.resize(p, n);
    for (int g = 0; g < p; ++g)
        for (int i = 0; i < n; ++i)
            out.X(g, i) = 8.0 + out.loadings.row(g).dot(out.scores.col(i)) + noiseSd * rng.normal();
    return out;
}

double abs_corr(const Vector& a, const Vector& b) {
    const Vector ac = a.array() - a.mean();
    const Vector bc = b.array() - b.mean();
    return std::abs(ac.dot(bc)) / (ac.norm() * bc.norm());
}

Matrix intercept_only(int n) { return Matrix::Ones(n, 1); }

}  // namespace

TEST_CASE("constructor rejects inconsistent shapes and settings") {
    const Planted d = plant(6, 5, 1, 3, 0.3, 1);
    HyperParameters h;
    McmcControl c;
    FactorOptions opt;
    opt.factors = 1;

    CHECK_THROWS_WITH_AS(FactorSampler(d.X, intercept_only(4), h, c, opt),
                         doctest::Contains("control design rows"), ValidationError);
    CHECK_THROWS_WITH_AS(FactorSampler(d.X, Matrix(5, 0), h, c, opt),
                         doctest::Contains("intercept column"), ValidationError);

    FactorOptions zero = opt;
    zero.factors = 0;
    CHECK_THROWS_WITH_AS(FactorSampler(d.X, intercept_only(5), h, c, zero),
                         doctest::Contains("at least 1"), ValidationError);

    FactorOptions toomany = opt;
    toomany.factors = 6;  // min(p, n) = 5
    CHECK_THROWS_WITH_AS(FactorSampler(d.X, intercept_only(5), h, c, toomany),
                         doctest::Contains("exceeds min"), ValidationError);

    FactorOptions badAlpha = opt;
    badAlpha.alphaRate = 0.0;
    CHECK_THROWS_WITH_AS(FactorSampler(d.X, intercept_only(5), h, c, badAlpha),
                         doctest::Contains("concentration prior"), ValidationError);

    McmcControl badCtl = c;
    badCtl.thin = 0;
    CHECK_THROWS_AS(FactorSampler(d.X, intercept_only(5), h, badCtl, opt), ValidationError);
}

TEST_CASE("state invariants hold across sweeps") {
    const Planted d = plant(12, 10, 2, 4, 0.3, 7);
    HyperParameters h;
    McmcControl c;
    c.seed = 11;
    FactorOptions opt;
    opt.factors = 2;

    FactorSampler s(d.X, intercept_only(10), h, c, opt);
    CHECK(s.p() == 12);
    CHECK(s.n() == 10);
    CHECK(s.controlCols() == 1);
    CHECK(s.factors() == 2);

    const auto& anchors = s.anchors();
    REQUIRE(anchors.size() == 2);
    CHECK(anchors[0] != anchors[1]);
    CHECK(anchors[0] >= 0);
    CHECK(anchors[0] < 12);

    s.check_invariants();
    for (int t = 0; t < 100; ++t) {
        s.sweep();
        if (t % 10 == 9) s.check_invariants();
    }
    CHECK(s.state().iteration == 100);

    for (int t = 0; t < 20; ++t) {
        s.sweep();
        s.accumulate();
    }
    const FactorFit fit = s.fit();
    CHECK(fit.summary.p() == 12);
    CHECK(fit.summary.K() == 3);
    CHECK(fit.summary.sampleCount == 20);
    CHECK(fit.lambdaMean.rows() == 2);
    CHECK(fit.lambdaMean.cols() == 10);
    CHECK(fit.controlColumns == 1);
    CHECK(fit.factors == 2);
    CHECK(fit.anchors == anchors);
    CHECK(s.scores().rows() == 2);
    CHECK(s.scores().cols() == 10);

    const auto& mix = s.mixture();
    CHECK(mix.locations.rows() == 10);  // T = min(n, 50)
    CHECK(mix.locations.cols() == 2);
    CHECK(mix.sticks[mix.sticks.size() - 1] == 1.0);
}

TEST_CASE("forced Gaussian scores collapse the mixture to the origin") {
    const Planted d = plant(10, 8, 1, 4, 0.3, 3);
    HyperParameters h;
    McmcControl c;
    c.seed = 5;
    FactorOptions opt;
    opt.factors = 1;
    opt.forceGaussian = true;

    FactorSampler s(d.X, intercept_only(8), h, c, opt);
    for (int t = 0; t < 50; ++t) s.sweep();
    s.check_invariants();

    const auto& mix = s.mixture();
    CHECK(mix.locations.rows() == 1);
    CHECK(mix.locations.cwiseAbs().maxCoeff() == 0.0);
    for (const int ci : mix.assign) CHECK(ci == 0);
}

TEST_CASE("thread count does not change the draws") {
    const Planted d = plant(10, 8, 2, 4, 0.3, 21);
    HyperParameters h;
    McmcControl c1;
    c1.seed = 77;
    c1.burnIn = 30;
    c1.samples = 50;
    c1.threads = 1;
    McmcControl c3 = c1;
    c3.threads = 3;
    FactorOptions opt;
    opt.factors = 2;

    FactorSampler a(d.X, intercept_only(8), h, c1, opt);
    FactorSampler b(d.X, intercept_only(8), h, c3, opt);
    const FactorFit fa = a.run_chain();
    const FactorFit fb = b.run_chain();

    CHECK((fa.summary.piStar - fb.summary.piStar).cwiseAbs().maxCoeff() == 0.0);
    CHECK((fa.lambdaMean - fb.lambdaMean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.state().B - b.state().B).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.scores() - b.scores()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero inclusion override keeps every factor loading out") {
    const Planted d = plant(9, 7, 1, 4, 0.3, 13);
    HyperParameters h;
    McmcControl c;
    c.seed = 2;
    c.fixed.pi = 0.0;
    FactorOptions opt;
    opt.factors = 1;
    opt.anchorConstraints = false;

    FactorSampler s(d.X, intercept_only(7), h, c, opt);
    CHECK(s.anchors().empty());
    for (int t = 0; t < 40; ++t) s.sweep();
    s.check_invariants();
    CHECK(s.state().Z.rightCols(1).cwiseAbs().maxCoeff() == 0);
    CHECK(s.state().B.rightCols(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single factor recovery from a planted structure") {
    const Planted d = plant(40, 30, 1, 20, 0.2, 99);
    HyperParameters h;
    McmcControl c;
    c.seed = 31;
    c.burnIn = 300;
    c.samples = 600;
    FactorOptions opt;
    opt.factors = 1;

    const FactorFit fit = fit_factors(d.X, intercept_only(30), h, c, opt);
    CHECK(fit.summary.sampleCount == 600);
    CHECK(abs_corr(fit.lambdaMean.row(0).transpose(), d.scores.row(0).transpose()) > 0.9);

    // loaded genes stand out in the factor column
    double inMin = 1.0, outMax = 0.0;
    for (int g = 0; g < 40; ++g) {
        const double q = fit.summary.piStar(g, 1);
        if (g < 20)
            inMin = std::min(inMin, q);
        else
            outMax = std::max(outMax, q);
    }
    CHECK(inMin > 0.8);
    CHECK(outMax < 0.5);
}

TEST_CASE("held-out inclusion matches a direct marginal computation") {
    FactorFit fit;
    fit.controlColumns = 2;
    fit.factors = 1;
    fit.lambdaMean.resize(1, 3);
    fit.lambdaMean << 0.5, -1.0, 2.0;
    fit.summary.rhoMean = Vector(3);
    fit.summary.rhoMean << 1.0, 0.3, 0.4;
    fit.summary.tauMean = Vector(3);
    fit.summary.tauMean << 100.0, 0.5, 0.7;

    HyperParameters h;
    Vector y(3);
    y << 8.3, 7.6, 9.1;
    const Vector got = predictive_inclusion(fit, y, h);
    REQUIRE(got.size() == 1);

    // direct dense evaluation: y - b ~ N(0, psi I + W_S T_S W_S') per subset
    const double q = 0.4 * h.m;
    const double psi = h.priorPsiMean();  // n = k + 2 so no plug-in fit
    Matrix W(3, 2);
    W << 1.0, 0.5, 1.0, -1.0, 1.0, 2.0;
    const Vector yt = y.array() - h.b;
    auto logLik = [&](const std::vector<int>& cols, const Vector& tau) {
        Matrix Sigma = psi * Matrix::Identity(3, 3);
        for (std::size_t i = 0; i < cols.size(); ++i)
            Sigma += tau[static_cast<Eigen::Index>(i)] * W.col(cols[i]) * W.col(cols[i]).transpose();
        const double logDet = std::log(Sigma.determinant());
        const double quad = yt.dot(Sigma.inverse() * yt);
        return -0.5 * (3.0 * std::log(2.0 * M_PI) + logDet + quad);
    };
    Vector tau0(1), tau1(2);
    tau0 << h.tau1;
    tau1 << h.tau1, 0.7;
    const double lw0 = logLik({0}, tau0) + std::log1p(-q);
    const double lw1 = logLik({0, 1}, tau1) + std::log(q);
    const double mx = std::max(lw0, lw1);
    const double expect = std::exp(lw1 - mx) / (std::exp(lw0 - mx) + std::exp(lw1 - mx));

    CHECK(got[0] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("held-out inclusion separates signal from noise") {
    Rng rng(404);
    const int n = 20;
    FactorFit fit;
    fit.controlColumns = 1;
    fit.factors = 2;
    fit.lambdaMean.resize(2, n);
    for (int f = 0; f < 2; ++f)
        for (int i = 0; i < n; ++i) fit.lambdaMean(f, i) = rng.normal();
    fit.summary.rhoMean = Vector(3);
    fit.summary.rhoMean << 1.0, 0.1, 0.1;
    fit.summary.tauMean = Vector(3);
    fit.summary.tauMean << 100.0, 1.0, 1.0;

    HyperParameters h;
    Vector signal(n), noise(n);
    for (int i = 0; i < n; ++i) {
        signal[i] = h.b + 2.5 * fit.lambdaMean(0, i) + 0.3 * rng.normal();
        noise[i] = h.b + 0.3 * rng.normal();
    }
    const Vector ps = predictive_inclusion(fit, signal, h);
    CHECK(ps[0] > 0.9);
    CHECK(ps[1] < 0.7);
    const Vector pn = predictive_inclusion(fit, noise, h);
    CHECK(pn[0] < 0.5);
    CHECK(pn[1] < 0.5);

    // a flat gene falls back to the prior inclusion rates
    const Vector flat = Vector::Constant(n, 4.0);
    const Vector pf = predictive_inclusion(fit, flat, h);
    CHECK(pf[0] == doctest::Approx(0.1 * h.m).epsilon(1e-15));
    CHECK(pf[1] == doctest::Approx(0.1 * h.m).epsilon(1e-15));

    Vector wrong(n + 1);
    wrong.setZero();
    CHECK_THROWS_WITH_AS(predictive_inclusion(fit, wrong, h),
                         doctest::Contains("does not match"), ValidationError);

    FactorFit wide = fit;
    wide.factors = 21;
    wide.lambdaMean = Matrix::Zero(21, n);
    CHECK_THROWS_WITH_AS(predictive_inclusion(wide, noise, h),
                         doctest::Contains("1..20"), ValidationError);
}

TEST_CASE("evolution input validation") {
    const Planted d = plant(10, 8, 1, 4, 0.3, 17);
    ExpressionMatrix pool;
    pool.values = d.X;
    for (int g = 0; g < 10; ++g) pool.geneIds.push_back("g" + std::to_string(g + 1));
    for (int i = 0; i < 8; ++i) pool.sampleIds.push_back("s" + std::to_string(i + 1));

    HyperParameters h;
    EvolutionControl ec;
    const Matrix ctrl = intercept_only(8);

    CHECK_THROWS_WITH_AS(evolve(pool, {}, ctrl, h, ec, 1),
                         doctest::Contains("at least one seed"), ValidationError);
    CHECK_THROWS_WITH_AS(evolve(pool, {"g1", "g2", "g1"}, ctrl, h, ec, 1),
                         doctest::Contains("duplicate seed gene: g1"), ValidationError);
    CHECK_THROWS_WITH_AS(evolve(pool, {"g1", "gX", "gY"}, ctrl, h, ec, 1),
                         doctest::Contains("not in the expression pool: gX gY"), ValidationError);
    CHECK_THROWS_WITH_AS(evolve(pool, {"g1"}, intercept_only(7), h, ec, 1),
                         doctest::Contains("control design rows"), ValidationError);

    EvolutionControl bad = ec;
    bad.factorGeneCount = 0;
    CHECK_THROWS_WITH_AS(evolve(pool, {"g1"}, ctrl, h, bad, 1),
                         doctest::Contains("invalid evolution settings"), ValidationError);
}

TEST_CASE("evolution grows a planted module and is reproducible") {
    const Planted d = plant(30, 20, 1, 8, 0.3, 55);
    ExpressionMatrix pool;
    pool.values = d.X;
    for (int g = 0; g < 30; ++g) pool.geneIds.push_back("g" + std::to_string(g + 1));
    for (int i = 0; i < 20; ++i) pool.sampleIds.push_back("s" + std::to_string(i + 1));

    HyperParameters h;
    EvolutionControl ec;
    ec.stageBurnIn = 150;
    ec.stageSamples = 300;
    ec.maxGenes = 12;
    ec.maxFactors = 2;
    const std::vector<std::string> seeds = {"g1", "g2", "g3", "g4", "g5"};
    const Matrix ctrl = intercept_only(20);

    const EvolveResult a = evolve(pool, seeds, ctrl, h, ec, 2024);
    REQUIRE(a.genes.size() >= seeds.size());
    CHECK(a.genes.size() <= 12);
    for (std::size_t i = 0; i < seeds.size(); ++i) CHECK(a.genes[i] == seeds[i]);
    for (std::size_t i = 0; i < a.genes.size(); ++i)
        CHECK(pool.geneIds[static_cast<std::size_t>(a.rows[i])] == a.genes[i]);

    // the remaining module genes come in, the noise genes stay out
    for (const char* id : {"g6", "g7", "g8"})
        CHECK(std::find(a.genes.begin(), a.genes.end(), id) != a.genes.end());

    REQUIRE(!a.stages.empty());
    const StageRecord& last = a.stages.back();
    CHECK(last.admitted.empty());
    CHECK_FALSE(last.keptFactor);
    int prev = 0;
    for (const auto& rec : a.stages) {
        CHECK(rec.geneCount >= prev);
        prev = rec.geneCount;
    }
    CHECK(a.fit.summary.p() == static_cast<int>(a.genes.size()));

    const EvolveResult b = evolve(pool, seeds, ctrl, h, ec, 2024);
    CHECK(b.genes == a.genes);
    CHECK(stage_log_to_text(b.stages) == stage_log_to_text(a.stages));
    CHECK((b.fit.summary.piStar - a.fit.summary.piStar).cwiseAbs().maxCoeff() == 0.0);

    const std::string log = stage_log_to_text(a.stages);
    CHECK(log.rfind("stage\tfactors\ttried_factor\tkept_factor\tgene_count\tadmitted\n", 0) == 0);
    const auto lines = split_lines(log);
    CHECK(lines.size() == a.stages.size() + 1);
    CHECK(split_tabs(lines.back()).size() == 6);
    CHECK(split_tabs(lines.back())[5] == "-");
}
