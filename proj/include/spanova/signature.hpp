#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spanova/dataset.hpp"
#include "spanova/types.hpp"

namespace spanova {

struct MetageneSignature {
    std::vector<std::string> geneIds;  // gene set Q in row order
    std::vector<std::string> sampleIds;
    Vector weights;         // a_{Q,1}, one per gene
    Vector scores;          // f_1, one per sample; unit norm
    Vector singularValues;  // retained values, descending

    std::string setName;
    std::string sourceId;
};

// first singular factor of X_Q; weights scale the leading left singular
// vector by 1/sigma_1 so that scores = weights' X_Q; returns nullopt for a
// rank-0 (all zero) matrix
std::optional<MetageneSignature> metagene(const Matrix& XQ, const std::vector<std::string>& geneIds,
                                          const std::vector<std::string>& sampleIds);

// weights' Y_Q over the mapped gene set; rows of YQ must align with geneIds
Vector project(const MetageneSignature& sig, const Matrix& YQ);

// pull the signature genes out of a target dataset through a resolved map,
// in signature order; reports every missing gene at once
Matrix align_target_rows(const MetageneSignature& sig, const ExpressionMatrix& Y,
                         const GeneMap& map);

std::string signature_to_text(const MetageneSignature& sig);
MetageneSignature parse_signature(const std::string& text, const std::string& where);
MetageneSignature load_signature(const std::string& path);

std::string scores_to_text(const std::vector<std::string>& sampleIds, const Vector& scores);

}  // namespace spanova
