#include "spanova/summary.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "spanova/tsv.hpp"
#include "spanova/version.hpp"

namespace spanova {

std::vector<long> threshold_counts(const PosteriorSummary& s, double q) {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("threshold q must be in (0,1)");
    std::vector<long> counts(static_cast<std::size_t>(s.K()), 0);
    for (int j = 0; j < s.K(); ++j)
        for (int g = 0; g < s.p(); ++g)
            if (s.piStar(g, j) > q) ++counts[static_cast<std::size_t>(j)];
    return counts;
}

std::optional<double> expected_fdr(const PosteriorSummary& s, int j, double q) {
    if (j < 0 || j >= s.K()) throw ValidationError("column index out of range");
    double sum = 0.0;
    long k = 0;
    for (int g = 0; g < s.p(); ++g) {
        if (s.piStar(g, j) > q) {
            sum += 1.0 - s.piStar(g, j);
            ++k;
        }
    }
    if (k == 0) return std::nullopt;
    return sum / static_cast<double>(k);
}

std::vector<VennRegion> gene_set_intersections(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& sets) {
    if (sets.size() > 5) throw ValidationError("at most 5 gene sets");
    if (sets.empty()) return {};
    std::map<std::string, unsigned> membership;
    for (std::size_t k = 0; k < sets.size(); ++k)
        for (const auto& id : sets[k].second) membership[id] |= (1u << k);

    const unsigned regions = (1u << sets.size()) - 1u;
    std::vector<long> counts(regions + 1, 0);
    for (const auto& [id, mask] : membership) ++counts[mask];

    std::vector<VennRegion> out;
    for (unsigned mask = 1; mask <= regions; ++mask) {
        std::string label;
        for (std::size_t k = 0; k < sets.size(); ++k) {
            if (!(mask & (1u << k))) continue;
            if (!label.empty()) label += '&';
            label += sets[k].first;
        }
        out.push_back({label, mask, counts[mask]});
    }
    return out;
}

namespace {

// beta_mean * pi* * h_j, with a never-included effect contributing nothing
inline double fitted_term(const PosteriorSummary& s, int g, int j, double h) {
    if (s.zCount(g, j) <= 0.0) return 0.0;
    return s.betaMean(g, j) * s.piStar(g, j) * h;
}

}  // namespace

RowMatrix corrected_values(const RowMatrix& X, const PosteriorSummary& s, const Matrix& H,
                           const std::vector<int>& controlColumns, bool includeIntercept) {
    if (X.rows() != s.p()) throw ValidationError("summary/matrix gene count mismatch");
    if (H.rows() != X.cols() || H.cols() != s.K())
        throw ValidationError("summary/design shape mismatch");
    std::vector<int> cols;
    if (includeIntercept) cols.push_back(0);
    for (int j : controlColumns) {
        if (j < 0 || j >= s.K()) throw ValidationError("control column out of range");
        cols.push_back(j);
    }
    RowMatrix out = X;
    for (int g = 0; g < s.p(); ++g)
        for (int j : cols)
            for (Eigen::Index i = 0; i < X.cols(); ++i)
                out(g, i) -= fitted_term(s, g, j, H(i, j));
    return out;
}

ExpressionMatrix corrected_expression(const ExpressionMatrix& X, const PosteriorSummary& s,
                                      const Matrix& H, const std::vector<int>& controlColumns,
                                      bool includeIntercept) {
    ExpressionMatrix out = X;
    out.values = corrected_values(X.values, s, H, controlColumns, includeIntercept);
    out.corrected = true;
    return out;
}

GeneDecomposition decompose_gene(const RowMatrix& X, const PosteriorSummary& s, const Matrix& H,
                                 const std::vector<std::string>& columnNames, int g,
                                 double threshold) {
    if (g < 0 || g >= s.p()) throw ValidationError("gene index out of range");
    if (static_cast<int>(columnNames.size()) != s.K())
        throw ValidationError("column name count mismatch");
    const Eigen::Index n = X.cols();

    std::vector<int> sig;
    for (int j = 1; j < s.K(); ++j)
        if (s.piStar(g, j) > threshold) sig.push_back(j);

    GeneDecomposition d;
    d.names.push_back("data");
    for (int j : sig) d.names.push_back(columnNames[static_cast<std::size_t>(j)]);
    d.names.push_back("residual");
    d.series.resize(static_cast<Eigen::Index>(d.names.size()), n);
    d.series.row(0) = X.row(g);

    Vector residual = X.row(g).transpose();
    for (Eigen::Index i = 0; i < n; ++i) residual[i] -= fitted_term(s, g, 0, H(i, 0));
    for (std::size_t k = 0; k < sig.size(); ++k) {
        const int j = sig[k];
        for (Eigen::Index i = 0; i < n; ++i) {
            const double t = fitted_term(s, g, j, H(i, j));
            d.series(static_cast<Eigen::Index>(k) + 1, i) = t;
            residual[i] -= t;
        }
    }
    d.series.row(d.series.rows() - 1) = residual.transpose();
    return d;
}

SummaryTable make_summary_table(const PosteriorSummary& s, const std::vector<std::string>& geneIds,
                                const DesignMatrix& design,
                                const std::vector<std::string>& sampleIds) {
    if (static_cast<int>(geneIds.size()) != s.p())
        throw ValidationError("gene id count mismatch");
    if (design.K() != s.K()) throw ValidationError("design column count mismatch");
    if (static_cast<int>(sampleIds.size()) != design.n())
        throw ValidationError("sample id count mismatch");
    SummaryTable t;
    t.summary = s;
    t.geneIds = geneIds;
    t.sampleIds = sampleIds;
    t.columnNames = design.names;
    t.columnKinds = design.kinds;
    int nArt = 0;
    for (auto k : design.kinds)
        if (k == ColumnKind::ArtifactCovariate) ++nArt;
    t.covariates.resize(design.n(), nArt);
    int c = 0;
    for (int j = 0; j < design.K(); ++j)
        if (design.kinds[static_cast<std::size_t>(j)] == ColumnKind::ArtifactCovariate)
            t.covariates.col(c++) = design.H.col(j);
    return t;
}

std::string summary_table_to_text(const SummaryTable& t) {
    const auto& s = t.summary;
    std::ostringstream out;
    out << "# spanova-summary\n";
    out << "# meta\tversion\t" << kVersion << "\n";
    out << "# meta\tseed\t" << s.seed << "\n";
    out << "# meta\tsamples\t" << s.sampleCount << "\n";
    for (int j = 0; j < s.K(); ++j) {
        out << "# column\t" << (j + 1) << '\t' << t.columnNames[static_cast<std::size_t>(j)]
            << '\t' << column_kind_name(t.columnKinds[static_cast<std::size_t>(j)]) << '\t'
            << format_full(s.rhoMean[j]) << '\t' << format_full(s.tauMean[j]) << "\n";
    }
    int c = 0;
    for (int j = 0; j < s.K(); ++j) {
        if (t.columnKinds[static_cast<std::size_t>(j)] != ColumnKind::ArtifactCovariate) continue;
        out << "# covariate\t" << (j + 1);
        for (Eigen::Index i = 0; i < t.covariates.rows(); ++i)
            out << '\t' << format_full(t.covariates(i, c));
        out << "\n";
        ++c;
    }
    out << "# samples";
    for (const auto& id : t.sampleIds) out << '\t' << id;
    out << "\n";
    out << "gene\tcolumn\tpi_star\tbeta_mean\tbeta_sd\n";
    for (int g = 0; g < s.p(); ++g) {
        for (int j = 0; j < s.K(); ++j) {
            out << t.geneIds[static_cast<std::size_t>(g)] << '\t'
                << t.columnNames[static_cast<std::size_t>(j)] << '\t'
                << format_fixed6(s.piStar(g, j)) << '\t';
            if (s.zCount(g, j) > 0.0)
                out << format_fixed6(s.betaMean(g, j)) << '\t' << format_fixed6(s.betaSD(g, j));
            else
                out << "NA\tNA";
            out << "\n";
        }
    }
    return out.str();
}

SummaryTable parse_summary_table(const std::string& text, const std::string& where) {
    const auto lines = split_lines(text);
    SummaryTable t;
    std::map<int, std::pair<std::string, std::string>> colDecl;  // index -> (name, kind)
    std::map<int, std::pair<double, double>> colStats;           // index -> (rho, tau)
    std::map<int, std::vector<double>> covDecl;
    std::size_t i = 0;
    for (; i < lines.size() && !lines[i].empty() && lines[i][0] == '#'; ++i) {
        const auto f = split_tabs(lines[i]);
        if (f[0] == "# meta" && f.size() == 3) {
            if (f[1] == "seed") t.summary.seed = std::stoull(f[2]);
            if (f[1] == "samples") t.summary.sampleCount = parse_long_strict(f[2], where);
        } else if (f[0] == "# column" && f.size() == 6) {
            const int idx = static_cast<int>(parse_long_strict(f[1], where));
            colDecl[idx] = {f[2], f[3]};
            colStats[idx] = {parse_double_strict(f[4], where), parse_double_strict(f[5], where)};
        } else if (f[0] == "# covariate" && f.size() >= 2) {
            const int idx = static_cast<int>(parse_long_strict(f[1], where));
            std::vector<double> v;
            for (std::size_t k = 2; k < f.size(); ++k)
                v.push_back(parse_double_strict(f[k], where));
            covDecl[idx] = std::move(v);
        } else if (f[0] == "# samples") {
            t.sampleIds.assign(f.begin() + 1, f.end());
        }
    }
    if (colDecl.empty()) throw ParseError(where + ": no column declarations");
    const int K = static_cast<int>(colDecl.size());
    std::map<std::string, int> colIndex;
    for (const auto& [idx, nk] : colDecl) {
        if (idx < 1 || idx > K) throw ParseError(where + ": column indices must be 1..K");
        t.columnNames.push_back(nk.first);
        t.columnKinds.push_back(column_kind_from_name(nk.second));
        colIndex[nk.first] = idx - 1;
    }
    if (i >= lines.size() || split_tabs(lines[i])[0] != "gene")
        throw ParseError(where + ": missing table header row");

    std::map<std::string, int> geneIndex;
    std::vector<std::array<std::vector<double>, 4>> cells;  // per gene: pi, mean, sd, has
    for (++i; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split_tabs(lines[i]);
        if (f.size() != 5) throw ParseError(where + ":" + std::to_string(i + 1) + ": bad row");
        auto it = geneIndex.find(f[0]);
        if (it == geneIndex.end()) {
            it = geneIndex.emplace(f[0], static_cast<int>(t.geneIds.size())).first;
            t.geneIds.push_back(f[0]);
            cells.push_back({std::vector<double>(static_cast<std::size_t>(K), 0.0),
                             std::vector<double>(static_cast<std::size_t>(K), 0.0),
                             std::vector<double>(static_cast<std::size_t>(K), 0.0),
                             std::vector<double>(static_cast<std::size_t>(K), 0.0)});
        }
        const auto cit = colIndex.find(f[1]);
        if (cit == colIndex.end())
            throw ParseError(where + ": undeclared column '" + f[1] + "'");
        const int g = it->second;
        const int j = cit->second;
        cells[static_cast<std::size_t>(g)][0][static_cast<std::size_t>(j)] =
            parse_double_strict(f[2], where);
        if (f[3] != "NA") {
            cells[static_cast<std::size_t>(g)][1][static_cast<std::size_t>(j)] =
                parse_double_strict(f[3], where);
            cells[static_cast<std::size_t>(g)][2][static_cast<std::size_t>(j)] =
                parse_double_strict(f[4], where);
            cells[static_cast<std::size_t>(g)][3][static_cast<std::size_t>(j)] = 1.0;
        }
    }
    const int p = static_cast<int>(t.geneIds.size());
    if (p == 0) throw ParseError(where + ": no data rows");
    auto& s = t.summary;
    s.piStar.resize(p, K);
    s.betaMean.resize(p, K);
    s.betaSD.resize(p, K);
    s.zCount.resize(p, K);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (int g = 0; g < p; ++g) {
        for (int j = 0; j < K; ++j) {
            const auto& c = cells[static_cast<std::size_t>(g)];
            s.piStar(g, j) = c[0][static_cast<std::size_t>(j)];
            const bool has = c[3][static_cast<std::size_t>(j)] > 0.0;
            s.betaMean(g, j) = has ? c[1][static_cast<std::size_t>(j)] : nan;
            s.betaSD(g, j) = has ? c[2][static_cast<std::size_t>(j)] : nan;
            s.zCount(g, j) = has ? 1.0 : 0.0;
        }
    }
    s.rhoMean.resize(K);
    s.tauMean.resize(K);
    for (const auto& [idx, rt] : colStats) {
        s.rhoMean[idx - 1] = rt.first;
        s.tauMean[idx - 1] = rt.second;
    }
    int nArt = 0;
    for (auto k : t.columnKinds)
        if (k == ColumnKind::ArtifactCovariate) ++nArt;
    const int n = static_cast<int>(t.sampleIds.size());
    t.covariates.resize(n, nArt);
    int c = 0;
    for (int j = 0; j < K; ++j) {
        if (t.columnKinds[static_cast<std::size_t>(j)] != ColumnKind::ArtifactCovariate) continue;
        const auto it = covDecl.find(j + 1);
        if (it == covDecl.end())
            throw ParseError(where + ": missing covariate values for column " +
                             std::to_string(j + 1));
        if (static_cast<int>(it->second.size()) != n)
            throw ParseError(where + ": covariate length mismatch");
        for (int r = 0; r < n; ++r) t.covariates(r, c) = it->second[static_cast<std::size_t>(r)];
        ++c;
    }
    return t;
}

SummaryTable load_summary_table(const std::string& path) {
    return parse_summary_table(read_text_file(path), path);
}

RowMatrix corrected_from_table(const RowMatrix& X, const SummaryTable& t) {
    const int K = static_cast<int>(t.columnNames.size());
    const Eigen::Index n = X.cols();
    if (n != static_cast<Eigen::Index>(t.sampleIds.size()))
        throw ValidationError("sample count does not match summary table");
    Matrix H = Matrix::Zero(n, K);
    std::vector<int> controls;
    int c = 0;
    for (int j = 0; j < K; ++j) {
        switch (t.columnKinds[static_cast<std::size_t>(j)]) {
            case ColumnKind::Intercept: H.col(j).setOnes(); break;
            case ColumnKind::ArtifactCovariate:
                H.col(j) = t.covariates.col(c++);
                controls.push_back(j);
                break;
            case ColumnKind::DesignCell: break;  // not part of the correction
            case ColumnKind::Factor: break;
        }
    }
    return corrected_values(X, t.summary, H, controls, true);
}

std::string psi_table_to_text(const std::vector<std::string>& geneIds, const Vector& psiMean) {
    if (static_cast<Eigen::Index>(geneIds.size()) != psiMean.size())
        throw ValidationError("gene id count mismatch");
    std::ostringstream out;
    out << "gene\tpsi_mean\n";
    for (std::size_t g = 0; g < geneIds.size(); ++g)
        out << geneIds[g] << '\t' << format_fixed6(psiMean[static_cast<Eigen::Index>(g)]) << "\n";
    return out.str();
}

std::string decomposition_to_text(const std::string& geneId, const GeneDecomposition& d,
                                  const std::vector<std::string>& sampleIds) {
    std::ostringstream out;
    for (std::size_t k = 0; k < d.names.size(); ++k)
        for (std::size_t i = 0; i < sampleIds.size(); ++i)
            out << geneId << '\t' << d.names[k] << '\t' << sampleIds[i] << '\t'
                << format_fixed6(d.series(static_cast<Eigen::Index>(k),
                                          static_cast<Eigen::Index>(i)))
                << "\n";
    return out.str();
}

}  // namespace spanova
