#include "spanova/dataset.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "spanova/tsv.hpp"

namespace spanova {

namespace {

std::string loc(const std::string& path, std::size_t line1) {
    return path + ":" + std::to_string(line1);
}

}  // namespace

ExpressionMatrix load_expression(const std::string& path) {
    const auto lines = split_lines(read_text_file(path));
    ExpressionMatrix X;
    std::size_t i = 0;
    for (; i < lines.size() && !lines[i].empty() && lines[i][0] == '#'; ++i) {
        if (lines[i].rfind("# corrected", 0) == 0) X.corrected = true;
    }
    if (i >= lines.size()) throw ParseError(path + ": missing header row");
    const auto header = split_tabs(lines[i]);
    if (header.empty() || header[0] != "probe_id")
        throw ParseError(loc(path, i + 1) + ": header must start with 'probe_id'");
    X.sampleIds.assign(header.begin() + 1, header.end());
    const std::size_t n = X.sampleIds.size();
    if (n == 0) throw ParseError(loc(path, i + 1) + ": no sample columns");
    {
        std::set<std::string> seen;
        for (const auto& s : X.sampleIds)
            if (!seen.insert(s).second)
                throw ValidationError(path + ": duplicate sample id '" + s + "'");
    }

    std::vector<std::vector<double>> rows;
    std::set<std::string> seenGenes;
    for (++i; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split_tabs(lines[i]);
        if (f.size() != n + 1)
            throw ParseError(loc(path, i + 1) + ": expected " + std::to_string(n + 1) +
                             " fields, got " + std::to_string(f.size()));
        if (!seenGenes.insert(f[0]).second)
            throw ValidationError(path + ": duplicate gene id '" + f[0] + "'");
        X.geneIds.push_back(f[0]);
        std::vector<double> row(n);
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = parse_double_strict(f[j + 1], loc(path, i + 1));
            if (!std::isfinite(row[j]))
                throw ValidationError(loc(path, i + 1) + ": non-finite value");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(path + ": no gene rows");
    X.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
    for (std::size_t g = 0; g < rows.size(); ++g)
        for (std::size_t j = 0; j < n; ++j) X.values(g, j) = rows[g][j];
    return X;
}

std::string expression_to_text(const ExpressionMatrix& X) {
    std::ostringstream out;
    if (X.corrected) out << "# corrected\n";
    out << "probe_id";
    for (const auto& s : X.sampleIds) out << '\t' << s;
    out << '\n';
    for (int g = 0; g < X.p(); ++g) {
        out << X.geneIds[g];
        for (int j = 0; j < X.n(); ++j) out << '\t' << format_full(X.values(g, j));
        out << '\n';
    }
    return out.str();
}

void save_expression(const ExpressionMatrix& X, const std::string& path) {
    write_text_file_atomic(path, expression_to_text(X));
}

ExpressionMatrix filter_genes(const ExpressionMatrix& X, double minRange, double minMedian) {
    if (X.n() < 2) throw ValidationError("filter_genes needs at least 2 samples");
    std::vector<int> keep;
    std::vector<double> buf;
    for (int g = 0; g < X.p(); ++g) {
        const double range = X.values.row(g).maxCoeff() - X.values.row(g).minCoeff();
        buf.assign(X.values.row(g).begin(), X.values.row(g).end());
        std::sort(buf.begin(), buf.end());
        const std::size_t n = buf.size();
        const double median =
            (n % 2 == 1) ? buf[n / 2] : 0.5 * (buf[n / 2 - 1] + buf[n / 2]);
        if (range >= minRange && median >= minMedian) keep.push_back(g);
    }
    return subset_genes(X, keep);
}

ExpressionMatrix subset_genes(const ExpressionMatrix& X, const std::vector<int>& rows) {
    ExpressionMatrix out;
    out.sampleIds = X.sampleIds;
    out.corrected = X.corrected;
    out.values.resize(static_cast<Eigen::Index>(rows.size()), X.values.cols());
    out.geneIds.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] < 0 || rows[k] >= X.p())
            throw ValidationError("gene row index out of range: " + std::to_string(rows[k]));
        out.geneIds.push_back(X.geneIds[rows[k]]);
        out.values.row(static_cast<Eigen::Index>(k)) = X.values.row(rows[k]);
    }
    return out;
}

namespace {

const std::map<std::string, std::vector<std::string>>& known_factors() {
    static const std::map<std::string, std::vector<std::string>> k = {
        {"genotype", {"WildType", "ApoEKO"}},
        {"age", {"6wk", "12wk"}},
        {"sex", {"Female", "Male"}},
        {"diet", {"Chow", "Western"}},
    };
    return k;
}

}  // namespace

SampleAnnotations load_annotations(const std::string& path) {
    const auto lines = split_lines(read_text_file(path));
    std::size_t i = 0;
    while (i < lines.size() && (lines[i].empty() || lines[i][0] == '#')) ++i;
    if (i >= lines.size()) throw ParseError(path + ": missing header row");
    const auto header = split_tabs(lines[i]);
    if (header.empty() || header[0] != "sample_id")
        throw ParseError(loc(path, i + 1) + ": header must start with 'sample_id'");
    if (header.size() < 2) throw ParseError(path + ": no factor columns");

    SampleAnnotations ann;
    for (std::size_t f = 1; f < header.size(); ++f) {
        const std::string& tok = header[f];
        const auto colon = tok.find(':');
        if (colon == std::string::npos) {
            const auto it = known_factors().find(tok);
            if (it == known_factors().end())
                throw ValidationError(path + ": factor '" + tok +
                                      "' needs declared levels (name:level0|level1|...)");
            ann.factorNames.push_back(tok);
            ann.levels.push_back(it->second);
        } else {
            ann.factorNames.push_back(tok.substr(0, colon));
            std::vector<std::string> lv;
            std::string rest = tok.substr(colon + 1);
            std::size_t start = 0;
            for (;;) {
                const auto bar = rest.find('|', start);
                if (bar == std::string::npos) {
                    lv.push_back(rest.substr(start));
                    break;
                }
                lv.push_back(rest.substr(start, bar - start));
                start = bar + 1;
            }
            if (lv.size() < 2)
                throw ValidationError(path + ": factor '" + ann.factorNames.back() +
                                      "' needs at least 2 levels");
            ann.levels.push_back(std::move(lv));
        }
    }

    std::vector<std::vector<int>> codes;
    std::set<std::string> seen;
    for (++i; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split_tabs(lines[i]);
        if (f.size() != ann.factorNames.size() + 1)
            throw ParseError(loc(path, i + 1) + ": expected " +
                             std::to_string(ann.factorNames.size() + 1) + " fields");
        if (!seen.insert(f[0]).second)
            throw ValidationError(path + ": duplicate sample id '" + f[0] + "'");
        ann.sampleIds.push_back(f[0]);
        std::vector<int> code(ann.factorNames.size());
        for (std::size_t k = 0; k < ann.factorNames.size(); ++k) {
            const auto& lv = ann.levels[k];
            const auto it = std::find(lv.begin(), lv.end(), f[k + 1]);
            if (it == lv.end())
                throw ValidationError(loc(path, i + 1) + ": unknown level '" + f[k + 1] +
                                      "' for factor '" + ann.factorNames[k] + "'");
            code[k] = static_cast<int>(it - lv.begin());
        }
        codes.push_back(std::move(code));
    }
    if (codes.empty()) throw ParseError(path + ": no sample rows");
    ann.codes.resize(static_cast<Eigen::Index>(codes.size()),
                     static_cast<Eigen::Index>(ann.factorNames.size()));
    for (std::size_t r = 0; r < codes.size(); ++r)
        for (std::size_t k = 0; k < codes[r].size(); ++k) ann.codes(r, k) = codes[r][k];
    return ann;
}

const char* column_kind_name(ColumnKind k) {
    switch (k) {
        case ColumnKind::Intercept: return "intercept";
        case ColumnKind::DesignCell: return "design_cell";
        case ColumnKind::ArtifactCovariate: return "artifact";
        case ColumnKind::Factor: return "factor";
    }
    return "?";
}

ColumnKind column_kind_from_name(const std::string& s) {
    if (s == "intercept") return ColumnKind::Intercept;
    if (s == "design_cell") return ColumnKind::DesignCell;
    if (s == "artifact") return ColumnKind::ArtifactCovariate;
    if (s == "factor") return ColumnKind::Factor;
    throw ValidationError("unknown column kind: " + s);
}

DesignMatrix build_design(const SampleAnnotations& ann) {
    const int F = ann.factors();
    const int n = ann.n();
    if (F < 1) throw ValidationError("no factors declared");

    // enumerate every cell of the cross-classification as a level tuple
    std::vector<std::vector<int>> cells;
    std::vector<int> tuple(F, 0);
    for (;;) {
        cells.push_back(tuple);
        int k = F - 1;
        while (k >= 0) {
            if (++tuple[k] < static_cast<int>(ann.levels[k].size())) break;
            tuple[k] = 0;
            --k;
        }
        if (k < 0) break;
    }
    // drop the all-baseline cell; order by (#non-baseline factors, factor
    // subset, level tuple) so binary two-level designs get the conventional
    // main-effects-then-interactions layout
    std::vector<std::vector<int>> nonBase;
    for (const auto& c : cells)
        if (std::any_of(c.begin(), c.end(), [](int v) { return v != 0; })) nonBase.push_back(c);
    auto key = [](const std::vector<int>& c) {
        std::vector<int> subset;
        for (std::size_t k = 0; k < c.size(); ++k)
            if (c[k] != 0) subset.push_back(static_cast<int>(k));
        return std::make_tuple(static_cast<int>(subset.size()), subset, c);
    };
    std::sort(nonBase.begin(), nonBase.end(),
              [&](const auto& a, const auto& b) { return key(a) < key(b); });

    DesignMatrix d;
    const int K = 1 + static_cast<int>(nonBase.size());
    d.H = Matrix::Zero(n, K);
    d.H.col(0).setOnes();
    d.kinds.assign(static_cast<std::size_t>(K), ColumnKind::DesignCell);
    d.kinds[0] = ColumnKind::Intercept;
    d.names.resize(static_cast<std::size_t>(K));
    d.names[0] = "intercept";

    std::map<std::vector<int>, int> colOf;
    for (std::size_t c = 0; c < nonBase.size(); ++c) {
        colOf[nonBase[c]] = static_cast<int>(c) + 1;
        std::string name;
        for (int k = 0; k < F; ++k) {
            if (nonBase[c][k] == 0) continue;
            if (!name.empty()) name += '&';
            name += ann.factorNames[k] + "=" + ann.levels[k][nonBase[c][k]];
        }
        d.names[c + 1] = name;
    }
    for (int i = 0; i < n; ++i) {
        std::vector<int> c(F);
        for (int k = 0; k < F; ++k) c[k] = ann.codes(i, k);
        const auto it = colOf.find(c);
        if (it != colOf.end()) d.H(i, it->second) = 1.0;
    }
    return d;
}

Matrix housekeeping_pcs(const ExpressionMatrix& Xhk, int numPCs) {
    const int q = Xhk.p();
    const int n = Xhk.n();
    if (numPCs < 0) throw ValidationError("numPCs must be >= 0");
    if (numPCs == 0) return Matrix(n, 0);
    if (numPCs > std::min(q, n))
        throw ValidationError("numPCs exceeds min(probes, samples) = " +
                              std::to_string(std::min(q, n)));

    Matrix M = Xhk.values;
    M.colwise() -= M.rowwise().mean();
    Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
        if (sv[k] > 1e-10 * sv[0]) ++rank;
    if (numPCs > rank)
        throw ValidationError("numPCs=" + std::to_string(numPCs) +
                              " exceeds achievable rank " + std::to_string(rank));

    Matrix C = svd.matrixV().leftCols(numPCs);
    for (int k = 0; k < numPCs; ++k) {
        Eigen::Index imax = 0;
        C.col(k).cwiseAbs().maxCoeff(&imax);
        if (C(imax, k) < 0.0) C.col(k) = -C.col(k);
    }
    return C;
}

DesignMatrix with_covariates(const DesignMatrix& design, const Matrix& C) {
    if (C.cols() == 0) return design;
    if (C.rows() != design.H.rows())
        throw ValidationError("covariate rows do not match design rows");
    DesignMatrix d = design;
    const int K0 = design.K();
    d.H.conservativeResize(Eigen::NoChange, K0 + C.cols());
    for (Eigen::Index k = 0; k < C.cols(); ++k) {
        Vector col = C.col(k);
        col.array() -= col.mean();
        d.H.col(K0 + k) = col;
        d.kinds.push_back(ColumnKind::ArtifactCovariate);
        d.names.push_back("artifact_" + std::to_string(k + 1));
    }
    return d;
}

std::string design_to_text(const DesignMatrix& d, const std::vector<std::string>& sampleIds) {
    if (static_cast<int>(sampleIds.size()) != d.n())
        throw ValidationError("sample ids do not match design rows");
    std::ostringstream out;
    out << "# design\n# kind";
    for (const auto& k : d.kinds) out << '\t' << column_kind_name(k);
    out << "\nsample_id";
    for (const auto& name : d.names) out << '\t' << name;
    out << '\n';
    for (int i = 0; i < d.n(); ++i) {
        out << sampleIds[static_cast<std::size_t>(i)];
        for (int j = 0; j < d.K(); ++j) out << '\t' << format_full(d.H(i, j));
        out << '\n';
    }
    return out.str();
}

LoadedDesign parse_design(const std::string& text, const std::string& where) {
    const auto lines = split_lines(text);
    if (lines.empty() || lines[0] != "# design")
        throw ParseError(where + ": not a design file (missing '# design' marker)");
    if (lines.size() < 3) throw ParseError(where + ": truncated design file");
    const auto kindRow = split_tabs(lines[1]);
    if (kindRow.empty() || kindRow[0] != "# kind")
        throw ParseError(where + ": missing '# kind' row");
    const auto header = split_tabs(lines[2]);
    if (header.empty() || header[0] != "sample_id")
        throw ParseError(where + ": header must start with 'sample_id'");
    const std::size_t K = header.size() - 1;
    if (K == 0 || kindRow.size() != K + 1)
        throw ParseError(where + ": kind row does not match header");

    LoadedDesign out;
    out.design.names.assign(header.begin() + 1, header.end());
    out.design.kinds.reserve(K);
    for (std::size_t j = 1; j <= K; ++j)
        out.design.kinds.push_back(column_kind_from_name(kindRow[j]));

    std::vector<std::vector<double>> rows;
    std::set<std::string> seen;
    for (std::size_t i = 3; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split_tabs(lines[i]);
        if (f.size() != K + 1)
            throw ParseError(loc(where, i + 1) + ": expected " + std::to_string(K + 1) +
                             " fields, got " + std::to_string(f.size()));
        if (!seen.insert(f[0]).second)
            throw ValidationError(where + ": duplicate sample id '" + f[0] + "'");
        out.sampleIds.push_back(f[0]);
        std::vector<double> row(K);
        for (std::size_t j = 0; j < K; ++j)
            row[j] = parse_double_strict(f[j + 1], loc(where, i + 1));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(where + ": no sample rows");
    out.design.H.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(K));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < K; ++j)
            out.design.H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return out;
}

LoadedDesign load_design(const std::string& path) {
    return parse_design(read_text_file(path), path);
}

GeneMap load_gene_map(const std::string& path) {
    const auto lines = split_lines(read_text_file(path));
    GeneMap map;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty() || lines[i][0] == '#') continue;
        const auto f = split_tabs(lines[i]);
        if (i == 0 && f[0] == "source") continue;
        if (f.size() < 2 || f.size() > 3)
            throw ParseError(loc(path, i + 1) + ": expected 2 or 3 fields");
        GeneMapEntry e;
        e.source = f[0];
        e.target = f[1];
        if (f.size() == 3 && !f[2].empty())
            e.score = parse_double_strict(f[2], loc(path, i + 1));
        map.entries.push_back(std::move(e));
    }
    return map;
}

void save_gene_map(const GeneMap& map, const std::string& path) {
    std::ostringstream out;
    out << "source\ttarget\tscore\n";
    for (const auto& e : map.entries) {
        out << e.source << '\t' << e.target << '\t';
        if (e.score) out << format_full(*e.score);
        out << '\n';
    }
    write_text_file_atomic(path, out.str());
}

GeneMap resolve_gene_map(const GeneMap& raw) {
    // group candidates per source, keeping first-seen source order
    std::vector<std::string> order;
    std::map<std::string, std::vector<const GeneMapEntry*>> bySource;
    for (const auto& e : raw.entries) {
        if (e.target.empty()) continue;
        auto& v = bySource[e.source];
        if (v.empty()) order.push_back(e.source);
        v.push_back(&e);
    }

    std::vector<GeneMapEntry> picked;
    for (const auto& s : order) {
        const auto& cand = bySource[s];
        std::set<std::string> targets;
        for (const auto* e : cand) targets.insert(e->target);
        const GeneMapEntry* best = cand[0];
        if (targets.size() > 1) {
            for (const auto* e : cand)
                if (!e->score)
                    throw ValidationError("source '" + s +
                                          "' has multiple candidate targets without scores");
            for (const auto* e : cand) {
                if (*e->score > *best->score ||
                    (*e->score == *best->score && e->target < best->target))
                    best = e;
            }
        }
        picked.push_back(*best);
    }

    std::map<std::string, int> targetUse;
    for (const auto& e : picked) ++targetUse[e.target];
    GeneMap out;
    for (auto& e : picked)
        if (targetUse[e.target] == 1) out.entries.push_back(std::move(e));
    return out;
}

}  // namespace spanova
