#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spanova/summary.hpp"
#include "spanova/tsv.hpp"

using namespace spanova;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// 2 genes x 3 columns (intercept, cell, artifact) with one never-included cell
PosteriorSummary toy_summary() {
    PosteriorSummary s;
    s.piStar.resize(2, 3);
    s.piStar << 1.0, 0.98, 0.6, 1.0, 0.0, 0.2;
    s.betaMean.resize(2, 3);
    s.betaMean << 8.0, 1.5, -0.5, 7.0, kNaN, 0.3;
    s.betaSD.resize(2, 3);
    s.betaSD << 0.1, 0.2, 0.3, 0.1, kNaN, 0.4;
    s.zCount.resize(2, 3);
    s.zCount << 10, 9, 6, 10, 0, 2;
    s.rhoMean.resize(3);
    s.rhoMean << 1.0, 0.5, 0.25;
    s.tauMean.resize(3);
    s.tauMean << 100.0, 0.7, 0.9;
    s.psiMean.resize(2);
    s.psiMean << 0.5, 0.8;
    s.sampleCount = 10;
    s.seed = 4;
    return s;
}

DesignMatrix toy_design() {
    DesignMatrix d;
    d.names = {"intercept", "strain=ko", "artifact_1"};
    d.kinds = {ColumnKind::Intercept, ColumnKind::DesignCell, ColumnKind::ArtifactCovariate};
    d.H.resize(4, 3);
    d.H << 1, 0, -0.3, 1, 0, 0.1, 1, 1, 0.1, 1, 1, 0.1;
    return d;
}

}  // namespace

TEST_CASE("threshold counts and expected discovery error") {
    const PosteriorSummary s = toy_summary();
    const auto counts = threshold_counts(s, 0.5);
    REQUIRE(counts.size() == 3);
    CHECK(counts[0] == 2);
    CHECK(counts[1] == 1);
    CHECK(counts[2] == 1);

    const auto fdr = expected_fdr(s, 1, 0.5);
    REQUIRE(fdr.has_value());
    CHECK(*fdr == doctest::Approx(0.02));
    CHECK_FALSE(expected_fdr(s, 1, 0.99).has_value());
    CHECK_THROWS_AS(expected_fdr(s, 7, 0.5), ValidationError);
    CHECK_THROWS_AS(threshold_counts(s, 1.5), ValidationError);
}

TEST_CASE("gene set intersection regions") {
    const auto regions = gene_set_intersections({
        {"j9", {"a", "b", "c"}},
        {"j10", {"b", "c", "d"}},
        {"j13", {"c", "e"}},
    });
    REQUIRE(regions.size() == 7);
    auto count_of = [&](const std::string& label) {
        for (const auto& r : regions)
            if (r.label == label) return r.count;
        FAIL("missing region " << label);
        return -1L;
    };
    CHECK(count_of("j9") == 1);          // a
    CHECK(count_of("j10") == 1);         // d
    CHECK(count_of("j13") == 1);         // e
    CHECK(count_of("j9&j10") == 1);      // b
    CHECK(count_of("j9&j10&j13") == 1);  // c
    CHECK(count_of("j9&j13") == 0);
    CHECK(gene_set_intersections({}).empty());
}

TEST_CASE("artifact correction subtracts only the requested fits") {
    const PosteriorSummary s = toy_summary();
    const DesignMatrix d = toy_design();
    RowMatrix X(2, 4);
    X << 10, 11, 12, 13, 20, 21, 22, 23;

    const RowMatrix C = corrected_values(X, s, d.H, {2}, true);
    for (int i = 0; i < 4; ++i) {
        // gene 0: minus intercept fit 8*1, minus artifact fit -0.5*0.6*h
        CHECK(C(0, i) ==
              doctest::Approx(X(0, i) - 8.0 * 1.0 - (-0.5) * 0.6 * d.H(i, 2)).epsilon(1e-12));
        // gene 1: artifact term included (pi 0.2), design cell untouched
        CHECK(C(1, i) ==
              doctest::Approx(X(1, i) - 7.0 * 1.0 - 0.3 * 0.2 * d.H(i, 2)).epsilon(1e-12));
    }

    // without the intercept only the artifact term moves
    const RowMatrix C2 = corrected_values(X, s, d.H, {2}, false);
    CHECK(C2(0, 0) == doctest::Approx(X(0, 0) + 0.5 * 0.6 * (-0.3)).epsilon(1e-12));

    // a never-included effect contributes nothing even though its mean is NaN
    const RowMatrix C3 = corrected_values(X, s, d.H, {1}, false);
    CHECK(C3(1, 2) == X(1, 2));
    CHECK(std::isfinite(C3.sum()));

    CHECK_THROWS_AS(corrected_values(X, s, d.H, {9}, true), ValidationError);

    const ExpressionMatrix XE = [&] {
        ExpressionMatrix e;
        e.geneIds = {"g1", "g2"};
        e.sampleIds = {"s1", "s2", "s3", "s4"};
        e.values = X;
        return e;
    }();
    const ExpressionMatrix CE = corrected_expression(XE, s, d.H, {2}, true);
    CHECK(CE.corrected);
    CHECK(CE.values(0, 0) == C(0, 0));
}

TEST_CASE("per-gene decomposition splits data into fitted terms") {
    const PosteriorSummary s = toy_summary();
    const DesignMatrix d = toy_design();
    RowMatrix X(2, 4);
    X << 10, 11, 12, 13, 20, 21, 22, 23;

    const GeneDecomposition dec = decompose_gene(X, s, d.H, d.names, 0, 0.95);
    // only the strain cell clears the 0.95 bar for gene 0
    REQUIRE(dec.names.size() == 3);
    CHECK(dec.names[0] == "data");
    CHECK(dec.names[1] == "strain=ko");
    CHECK(dec.names[2] == "residual");
    for (int i = 0; i < 4; ++i) {
        CHECK(dec.series(0, i) == X(0, i));
        const double fit = 1.5 * 0.98 * d.H(i, 1);
        CHECK(dec.series(1, i) == doctest::Approx(fit).epsilon(1e-12));
        const double intercept = 8.0 * 1.0;
        CHECK(dec.series(2, i) == doctest::Approx(X(0, i) - intercept - fit).epsilon(1e-12));
    }

    // lower threshold pulls in the artifact column too
    const GeneDecomposition dec2 = decompose_gene(X, s, d.H, d.names, 0, 0.5);
    CHECK(dec2.names.size() == 4);
    CHECK_THROWS_AS(decompose_gene(X, s, d.H, d.names, 5), ValidationError);

    const std::string text =
        decomposition_to_text("g1", dec, {"s1", "s2", "s3", "s4"});
    CHECK(split_lines(text).size() == 12);  // 3 series x 4 samples
    CHECK(text.find("g1\tstrain=ko\ts2\t") != std::string::npos);
}

TEST_CASE("summary table text round trip") {
    const PosteriorSummary s = toy_summary();
    const DesignMatrix d = toy_design();
    const SummaryTable t =
        make_summary_table(s, {"g1", "g2"}, d, {"s1", "s2", "s3", "s4"});
    CHECK(t.covariates.cols() == 1);
    CHECK(t.covariates(0, 0) == -0.3);

    const std::string text = summary_table_to_text(t);
    CHECK(text.find("# spanova-summary") == 0);
    CHECK(text.find("NA\tNA") != std::string::npos);  // the never-included cell

    const SummaryTable back = parse_summary_table(text, "inline");
    CHECK(back.geneIds == t.geneIds);
    CHECK(back.sampleIds == t.sampleIds);
    CHECK(back.columnNames == t.columnNames);
    CHECK(back.columnKinds == t.columnKinds);
    CHECK(back.summary.sampleCount == 10);
    CHECK(back.summary.seed == 4);
    // rho/tau and covariates are carried at full precision
    CHECK((back.summary.rhoMean - s.rhoMean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.summary.tauMean - s.tauMean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.covariates - t.covariates).cwiseAbs().maxCoeff() == 0.0);
    // cell values go through fixed-point text
    CHECK((back.summary.piStar - s.piStar).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(back.summary.betaMean(0, 1) == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(std::isnan(back.summary.betaMean(1, 1)));
    CHECK(back.summary.zCount(1, 1) == 0.0);

    CHECK_THROWS_AS(parse_summary_table("gene\tcolumn\n", "inline"), ParseError);
}

TEST_CASE("correction driven from a parsed table matches the direct path") {
    const PosteriorSummary s = toy_summary();
    const DesignMatrix d = toy_design();
    const SummaryTable t =
        make_summary_table(s, {"g1", "g2"}, d, {"s1", "s2", "s3", "s4"});
    const SummaryTable parsed = parse_summary_table(summary_table_to_text(t), "inline");

    RowMatrix X(2, 4);
    X << 10, 11, 12, 13, 20, 21, 22, 23;
    const RowMatrix direct = corrected_values(X, s, d.H, {2}, true);
    const RowMatrix viaTable = corrected_from_table(X, parsed);
    CHECK((direct - viaTable).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("psi table text") {
    Vector psi(2);
    psi << 0.51, 0.82;
    const std::string text = psi_table_to_text({"g1", "g2"}, psi);
    CHECK(text == "gene\tpsi_mean\ng1\t0.510000\ng2\t0.820000\n");
    CHECK_THROWS_AS(psi_table_to_text({"g1"}, psi), ValidationError);
}
