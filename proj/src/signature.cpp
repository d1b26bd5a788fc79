#include "spanova/signature.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <map>
#include <sstream>

#include "spanova/tsv.hpp"

namespace spanova {

std::optional<MetageneSignature> metagene(const Matrix& XQ, const std::vector<std::string>& geneIds,
                                          const std::vector<std::string>& sampleIds) {
    if (XQ.rows() < 1 || XQ.cols() < 1) throw ValidationError("empty signature matrix");
    if (static_cast<std::size_t>(XQ.rows()) != geneIds.size())
        throw ValidationError("gene id count mismatch");
    if (static_cast<std::size_t>(XQ.cols()) != sampleIds.size())
        throw ValidationError("sample id count mismatch");
    if (!XQ.allFinite()) throw ValidationError("signature matrix has non-finite values");

    Eigen::BDCSVD<Matrix> svd(XQ, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    if (sv.size() == 0 || sv[0] <= 0.0) return std::nullopt;
    int rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
        if (sv[k] > 1e-10 * sv[0]) ++rank;
    if (rank == 0) return std::nullopt;

    MetageneSignature sig;
    sig.geneIds = geneIds;
    sig.sampleIds = sampleIds;
    sig.singularValues = sv.head(rank);
    sig.weights = svd.matrixU().col(0) / sv[0];
    sig.scores = svd.matrixV().col(0);

    Eigen::Index imax = 0;
    sig.weights.cwiseAbs().maxCoeff(&imax);
    if (sig.weights[imax] < 0.0) {
        sig.weights = -sig.weights;
        sig.scores = -sig.scores;
    }
    return sig;
}

Vector project(const MetageneSignature& sig, const Matrix& YQ) {
    if (YQ.rows() != sig.weights.size())
        throw ValidationError("target rows do not match signature gene count");
    return YQ.transpose() * sig.weights;
}

Matrix align_target_rows(const MetageneSignature& sig, const ExpressionMatrix& Y,
                         const GeneMap& map) {
    std::map<std::string, std::string> sourceToTarget;
    std::map<std::string, int> targetUse;
    for (const auto& e : map.entries) {
        if (e.target.empty()) continue;
        if (sourceToTarget.count(e.source) || ++targetUse[e.target] > 1)
            throw ValidationError("gene map is not one-to-one; resolve it first");
        sourceToTarget[e.source] = e.target;
    }
    std::map<std::string, int> rowOf;
    for (int g = 0; g < Y.p(); ++g) rowOf[Y.geneIds[static_cast<std::size_t>(g)]] = g;

    std::vector<int> rows;
    std::string missing;
    for (const auto& id : sig.geneIds) {
        const auto mit = sourceToTarget.find(id);
        const auto rit = mit == sourceToTarget.end() ? rowOf.end() : rowOf.find(mit->second);
        if (rit == rowOf.end()) {
            missing += missing.empty() ? id : (", " + id);
            continue;
        }
        rows.push_back(rit->second);
    }
    if (!missing.empty())
        throw ValidationError("signature genes missing from the target through the map: " +
                              missing);
    Matrix out(static_cast<Eigen::Index>(rows.size()), Y.n());
    for (std::size_t k = 0; k < rows.size(); ++k)
        out.row(static_cast<Eigen::Index>(k)) = Y.values.row(rows[k]);
    return out;
}

std::string signature_to_text(const MetageneSignature& sig) {
    std::ostringstream out;
    out << "# spanova-signature\tset=" << sig.setName << "\tsource=" << sig.sourceId << "\n";
    out << "# singular_values";
    for (Eigen::Index k = 0; k < sig.singularValues.size(); ++k)
        out << '\t' << format_full(sig.singularValues[k]);
    out << "\n";
    out << "gene\tweight\n";
    for (std::size_t g = 0; g < sig.geneIds.size(); ++g)
        out << sig.geneIds[g] << '\t' << format_full(sig.weights[static_cast<Eigen::Index>(g)])
            << "\n";
    out << "sample\tscore\n";
    for (std::size_t i = 0; i < sig.sampleIds.size(); ++i)
        out << sig.sampleIds[i] << '\t' << format_full(sig.scores[static_cast<Eigen::Index>(i)])
            << "\n";
    return out.str();
}

MetageneSignature parse_signature(const std::string& text, const std::string& where) {
    const auto lines = split_lines(text);
    MetageneSignature sig;
    std::vector<double> weights, scores, svs;
    enum class Section { None, Genes, Samples } sec = Section::None;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& line = lines[i];
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto f = split_tabs(line);
            if (f[0] == "# spanova-signature") {
                for (std::size_t k = 1; k < f.size(); ++k) {
                    if (f[k].rfind("set=", 0) == 0) sig.setName = f[k].substr(4);
                    if (f[k].rfind("source=", 0) == 0) sig.sourceId = f[k].substr(7);
                }
            } else if (f[0] == "# singular_values") {
                for (std::size_t k = 1; k < f.size(); ++k)
                    svs.push_back(parse_double_strict(f[k], where));
            }
            continue;
        }
        if (line == "gene\tweight") {
            sec = Section::Genes;
            continue;
        }
        if (line == "sample\tscore") {
            sec = Section::Samples;
            continue;
        }
        const auto f = split_tabs(line);
        if (f.size() != 2) throw ParseError(where + ":" + std::to_string(i + 1) + ": bad row");
        if (sec == Section::Genes) {
            sig.geneIds.push_back(f[0]);
            weights.push_back(parse_double_strict(f[1], where));
        } else if (sec == Section::Samples) {
            sig.sampleIds.push_back(f[0]);
            scores.push_back(parse_double_strict(f[1], where));
        } else {
            throw ParseError(where + ":" + std::to_string(i + 1) + ": row outside any section");
        }
    }
    if (weights.empty() || scores.empty())
        throw ParseError(where + ": signature needs gene and sample sections");
    sig.weights = Eigen::Map<Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    sig.scores = Eigen::Map<Vector>(scores.data(), static_cast<Eigen::Index>(scores.size()));
    sig.singularValues =
        Eigen::Map<Vector>(svs.data(), static_cast<Eigen::Index>(svs.size()));
    return sig;
}

MetageneSignature load_signature(const std::string& path) {
    return parse_signature(read_text_file(path), path);
}

std::string scores_to_text(const std::vector<std::string>& sampleIds, const Vector& scores) {
    if (static_cast<Eigen::Index>(sampleIds.size()) != scores.size())
        throw ValidationError("sample id count mismatch");
    std::ostringstream out;
    out << "sample\tscore\n";
    for (std::size_t i = 0; i < sampleIds.size(); ++i)
        out << sampleIds[i] << '\t' << format_full(scores[static_cast<Eigen::Index>(i)]) << "\n";
    return out.str();
}

}  // namespace spanova
