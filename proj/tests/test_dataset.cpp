#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "spanova/dataset.hpp"
#include "spanova/tsv.hpp"

using namespace spanova;

namespace {

ExpressionMatrix parse_expression(const std::string& text) {
    // load_expression is file-based; route through a scratch file
    const auto dir = std::filesystem::temp_directory_path() / "spanova_dataset_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "x.tsv").string();
    write_text_file_atomic(path, text);
    return load_expression(path);
}

}  // namespace

TEST_CASE("expression matrix parse and round trip") {
    const std::string text =
        "# anything in comments is skipped\n"
        "probe_id\ts1\ts2\ts3\n"
        "gA\t1\t2\t3\n"
        "gB\t4.5\t-1\t0.25\n";
    const ExpressionMatrix X = parse_expression(text);
    CHECK(X.p() == 2);
    CHECK(X.n() == 3);
    CHECK_FALSE(X.corrected);
    CHECK(X.geneIds == std::vector<std::string>{"gA", "gB"});
    CHECK(X.sampleIds == std::vector<std::string>{"s1", "s2", "s3"});
    CHECK(X.values(1, 2) == 0.25);

    const ExpressionMatrix back = parse_expression(expression_to_text(X));
    CHECK(back.geneIds == X.geneIds);
    CHECK(back.sampleIds == X.sampleIds);
    CHECK((back.values - X.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("corrected marker survives the round trip") {
    ExpressionMatrix X = parse_expression("probe_id\ta\ngX\t5\n");
    X.corrected = true;
    const ExpressionMatrix back = parse_expression(expression_to_text(X));
    CHECK(back.corrected);
}

TEST_CASE("expression parsing rejects malformed input") {
    CHECK_THROWS_AS(parse_expression("wrong\ts1\ng\t1\n"), ParseError);
    CHECK_THROWS_AS(parse_expression("probe_id\ts1\n"), ParseError);  // no genes
    CHECK_THROWS_AS(parse_expression("probe_id\ts1\ts1\ng\t1\t2\n"), ValidationError);
    CHECK_THROWS_AS(parse_expression("probe_id\ts1\ng\t1\ng\t2\n"), ValidationError);
    CHECK_THROWS_AS(parse_expression("probe_id\ts1\ts2\ng\t1\n"), ParseError);  // ragged
    CHECK_THROWS_AS(parse_expression("probe_id\ts1\ng\tnan\n"), ValidationError);
    CHECK_THROWS_AS(parse_expression("probe_id\ts1\ng\tx\n"), ParseError);
}

TEST_CASE("gene filter applies range and median floors") {
    // 4 samples: even count, median = mean of the middle pair
    ExpressionMatrix X;
    X.sampleIds = {"a", "b", "c", "d"};
    X.geneIds = {"flat", "dim", "good", "edge"};
    X.values.resize(4, 4);
    X.values.row(0) << 6.0, 6.1, 6.0, 6.05;  // range 0.1 < 0.25: dropped
    X.values.row(1) << 1.0, 2.0, 3.0, 4.0;   // median 2.5 < 5: dropped
    X.values.row(2) << 5.0, 6.0, 7.0, 8.0;   // median 6.5, range 3: kept
    X.values.row(3) << 4.0, 6.0, 4.5, 5.5;   // median (4.5+5.5)/2 = 5: kept

    const ExpressionMatrix F = filter_genes(X, 0.25, 5.0);
    CHECK(F.geneIds == std::vector<std::string>{"good", "edge"});
    CHECK(F.values(0, 0) == 5.0);

    ExpressionMatrix tiny;
    tiny.sampleIds = {"only"};
    tiny.geneIds = {"g"};
    tiny.values.resize(1, 1);
    tiny.values << 9.0;
    CHECK_THROWS_AS(filter_genes(tiny, 0.25, 5.0), ValidationError);
}

TEST_CASE("subset_genes keeps order and checks bounds") {
    ExpressionMatrix X;
    X.sampleIds = {"a"};
    X.geneIds = {"g1", "g2", "g3"};
    X.values.resize(3, 1);
    X.values << 1, 2, 3;
    const ExpressionMatrix S = subset_genes(X, {2, 0});
    CHECK(S.geneIds == std::vector<std::string>{"g3", "g1"});
    CHECK(S.values(0, 0) == 3.0);
    CHECK_THROWS_AS(subset_genes(X, {3}), ValidationError);
    CHECK_THROWS_AS(subset_genes(X, {-1}), ValidationError);
}

namespace {

SampleAnnotations two_factor_annotations() {
    SampleAnnotations ann;
    ann.factorNames = {"strain", "diet"};
    ann.levels = {{"wt", "ko"}, {"chow", "fat"}};
    ann.sampleIds = {"m1", "m2", "m3", "m4"};
    ann.codes.resize(4, 2);
    ann.codes << 0, 0, 1, 0, 0, 1, 1, 1;
    return ann;
}

}  // namespace

TEST_CASE("design matrix from a two-factor cross") {
    const DesignMatrix d = build_design(two_factor_annotations());
    // intercept + 2 main cells + the interaction cell
    REQUIRE(d.K() == 4);
    CHECK(d.names[0] == "intercept");
    CHECK(d.names[1] == "strain=ko");
    CHECK(d.names[2] == "diet=fat");
    CHECK(d.names[3] == "strain=ko&diet=fat");
    CHECK(d.kinds[0] == ColumnKind::Intercept);
    CHECK(d.kinds[3] == ColumnKind::DesignCell);

    CHECK(d.H.col(0).sum() == 4.0);
    // sample m2 = (ko, chow) sits in the strain=ko cell only
    CHECK(d.H(1, 1) == 1.0);
    CHECK(d.H(1, 2) == 0.0);
    CHECK(d.H(1, 3) == 0.0);
    // sample m4 = (ko, fat) sits in the interaction cell only
    CHECK(d.H(3, 3) == 1.0);
    CHECK(d.H(3, 1) == 0.0);
    // baseline m1 has nothing but the intercept
    CHECK(d.H.row(0).sum() == 1.0);
}

TEST_CASE("annotation parsing with declared levels") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "spanova_dataset_test";
    fs::create_directories(dir);
    const std::string path = (dir / "ann.tsv").string();
    write_text_file_atomic(path,
                           "sample_id\tstrain:wt|ko\tsex\n"
                           "m1\twt\tFemale\n"
                           "m2\tko\tMale\n");
    const SampleAnnotations ann = load_annotations(path);
    CHECK(ann.factorNames == std::vector<std::string>{"strain", "sex"});
    CHECK(ann.levels[0] == std::vector<std::string>{"wt", "ko"});
    CHECK(ann.levels[1] == std::vector<std::string>{"Female", "Male"});
    CHECK(ann.codes(1, 0) == 1);

    write_text_file_atomic(path, "sample_id\tmystery\nm1\tx\n");
    CHECK_THROWS_AS(load_annotations(path), ValidationError);
    write_text_file_atomic(path, "sample_id\tstrain:wt|ko\nm1\telse\n");
    CHECK_THROWS_AS(load_annotations(path), ValidationError);
}

TEST_CASE("design text round trip") {
    const DesignMatrix d = build_design(two_factor_annotations());
    const std::vector<std::string> ids = {"m1", "m2", "m3", "m4"};
    const std::string text = design_to_text(d, ids);
    const LoadedDesign back = parse_design(text, "inline");
    CHECK(back.sampleIds == ids);
    CHECK(back.design.names == d.names);
    CHECK(back.design.kinds == d.kinds);
    CHECK((back.design.H - d.H).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(parse_design("sample_id\tx\n", "inline"), ParseError);
    CHECK_THROWS_AS(parse_design("# design\n# kind\tintercept\nsample_id\ta\tb\n", "inline"),
                    ParseError);
    CHECK_THROWS_AS(
        parse_design("# design\n# kind\tbogus\nsample_id\ta\nm1\t1\n", "inline"),
        ValidationError);
}

TEST_CASE("column kind names round trip") {
    for (ColumnKind k : {ColumnKind::Intercept, ColumnKind::DesignCell,
                         ColumnKind::ArtifactCovariate, ColumnKind::Factor})
        CHECK(column_kind_from_name(column_kind_name(k)) == k);
    CHECK_THROWS_AS(column_kind_from_name("nope"), ValidationError);
}

TEST_CASE("housekeeping principal components") {
    // build a control matrix with two strong orthogonal sample patterns
    const int n = 8;
    Vector v1(n), v2(n);
    v1 << 1, 1, 1, 1, -1, -1, -1, -1;
    v2 << 1, -1, 1, -1, 1, -1, 1, -1;
    v1.normalize();
    v2.normalize();
    ExpressionMatrix hk;
    hk.sampleIds.resize(n, "");
    hk.geneIds = {"h1", "h2", "h3", "h4", "h5", "h6"};
    hk.values.resize(6, n);
    // constant weight on v1, alternating weight on v2: the gene-space
    // coefficient vectors are orthogonal, so the PCs are v1 and v2 exactly
    for (int g = 0; g < 6; ++g)
        hk.values.row(g) = (5.0 + g) * Vector::Ones(n).transpose() + 4.0 * v1.transpose() +
                           (g % 2 == 0 ? 1.5 : -1.5) * v2.transpose();

    const Matrix C = housekeeping_pcs(hk, 2);
    REQUIRE(C.rows() == n);
    REQUIRE(C.cols() == 2);
    // unit norm, centered, mutually orthogonal
    for (int k = 0; k < 2; ++k) {
        CHECK(C.col(k).norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(C.col(k).sum()) < 1e-10);
    }
    CHECK(std::abs(C.col(0).dot(C.col(1))) < 1e-10);
    // leading PC recovers the dominant pattern up to sign
    CHECK(std::abs(C.col(0).dot(v1)) == doctest::Approx(1.0).epsilon(1e-10));
    // sign convention: the largest-magnitude entry is positive
    Eigen::Index imax = 0;
    C.col(0).cwiseAbs().maxCoeff(&imax);
    CHECK(C(imax, 0) > 0.0);

    // rank of the centered matrix here is 2, so asking for 3 must fail loudly
    CHECK_THROWS_WITH_AS(housekeeping_pcs(hk, 3) /* rank 2 */,
                         doctest::Contains("exceeds achievable rank"), ValidationError);
    CHECK(housekeeping_pcs(hk, 0).cols() == 0);
}

TEST_CASE("covariates append centered artifact columns") {
    const DesignMatrix d = build_design(two_factor_annotations());
    Matrix C(4, 1);
    C << 1.0, 2.0, 3.0, 4.0;
    const DesignMatrix d2 = with_covariates(d, C);
    REQUIRE(d2.K() == d.K() + 1);
    CHECK(d2.kinds.back() == ColumnKind::ArtifactCovariate);
    CHECK(d2.names.back() == "artifact_1");
    CHECK(std::abs(d2.H.col(d.K()).sum()) < 1e-12);  // centered
    CHECK(d2.H(3, d.K()) == doctest::Approx(1.5));

    Matrix bad(3, 1);
    bad.setZero();
    CHECK_THROWS_AS(with_covariates(d, bad), ValidationError);
}

TEST_CASE("gene map resolution keeps the best unambiguous pairs") {
    GeneMap raw;
    raw.entries = {
        {"a", "A", 0.9},         // unique
        {"b", "", std::nullopt}, // unmatched: dropped
        {"c", "C1", 0.5},        // scored duel: C2 wins
        {"c", "C2", 0.8},
        {"d", "D", 0.3},         // picked, but D is also claimed by e
        {"e", "D", 0.4},
        {"f", "F", 0.2},         // tie on score: lexicographically smaller target
        {"f", "E", 0.2},
    };
    const GeneMap res = resolve_gene_map(raw);
    REQUIRE(res.entries.size() == 3);
    CHECK(res.entries[0].source == "a");
    CHECK(res.entries[0].target == "A");
    CHECK(res.entries[1].source == "c");
    CHECK(res.entries[1].target == "C2");
    CHECK(res.entries[2].source == "f");
    CHECK(res.entries[2].target == "E");

    GeneMap unscored;
    unscored.entries = {{"x", "X1", std::nullopt}, {"x", "X2", std::nullopt}};
    CHECK_THROWS_AS(resolve_gene_map(unscored), ValidationError);
}

TEST_CASE("gene map file round trip") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "spanova_dataset_test";
    fs::create_directories(dir);
    const std::string path = (dir / "map.tsv").string();
    GeneMap m;
    m.entries = {{"src1", "tgt1", 0.75}, {"src2", "", std::nullopt}};
    save_gene_map(m, path);
    const GeneMap back = load_gene_map(path);
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[0].source == "src1");
    CHECK(back.entries[0].target == "tgt1");
    CHECK(*back.entries[0].score == 0.75);
    CHECK_FALSE(back.entries[1].score.has_value());
    fs::remove_all(dir);
}
