#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spanova/dataset.hpp"
#include "spanova/types.hpp"

namespace spanova {

struct PosteriorSummary {
    Matrix piStar;    // p x K Monte Carlo inclusion frequencies
    Matrix betaMean;  // p x K conditional means given z=1; NaN where never included
    Matrix betaSD;    // p x K conditional SDs; NaN likewise
    Matrix zCount;    // p x K number of z=1 draws
    Vector rhoMean;   // per column; entry 0 fixed at 1
    Vector tauMean;   // per column; entry 0 is the intercept prior variance
    Vector psiMean;   // per gene (may be empty on a parsed table)
    long sampleCount = 0;
    std::uint64_t seed = 0;

    int p() const { return static_cast<int>(piStar.rows()); }
    int K() const { return static_cast<int>(piStar.cols()); }
};

std::vector<long> threshold_counts(const PosteriorSummary& s, double q);

// mean of 1 - pi* over the selection; empty selection yields nullopt
std::optional<double> expected_fdr(const PosteriorSummary& s, int j, double q);

struct VennRegion {
    std::string label;
    unsigned mask;  // bit k set = member of set k
    long count;
};

std::vector<VennRegion> gene_set_intersections(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& sets);

// subtract beta_mean * pi* * h_j terms for the intercept (if flagged) and the
// given control columns
RowMatrix corrected_values(const RowMatrix& X, const PosteriorSummary& s, const Matrix& H,
                           const std::vector<int>& controlColumns, bool includeIntercept);
ExpressionMatrix corrected_expression(const ExpressionMatrix& X, const PosteriorSummary& s,
                                      const Matrix& H, const std::vector<int>& controlColumns,
                                      bool includeIntercept);

struct GeneDecomposition {
    std::vector<std::string> names;  // data, fitted terms for significant columns, residual
    Matrix series;                   // names.size() x n
};

GeneDecomposition decompose_gene(const RowMatrix& X, const PosteriorSummary& s, const Matrix& H,
                                 const std::vector<std::string>& columnNames, int g,
                                 double threshold = 0.95);

// long-format table, one row per gene x column, with '#' metadata carrying
// column kinds, rho/tau means and artifact covariate values so that a raw
// matrix can be corrected from the table alone
struct SummaryTable {
    PosteriorSummary summary;
    std::vector<std::string> geneIds;
    std::vector<std::string> sampleIds;
    std::vector<std::string> columnNames;
    std::vector<ColumnKind> columnKinds;
    Matrix covariates;  // n x (#artifact columns)
};

SummaryTable make_summary_table(const PosteriorSummary& s, const std::vector<std::string>& geneIds,
                                const DesignMatrix& design,
                                const std::vector<std::string>& sampleIds);
std::string summary_table_to_text(const SummaryTable& t);
SummaryTable parse_summary_table(const std::string& text, const std::string& where);
SummaryTable load_summary_table(const std::string& path);

// correction driven purely by a parsed table (intercept + embedded covariates)
RowMatrix corrected_from_table(const RowMatrix& X, const SummaryTable& t);

std::string psi_table_to_text(const std::vector<std::string>& geneIds, const Vector& psiMean);
std::string decomposition_to_text(const std::string& geneId, const GeneDecomposition& d,
                                  const std::vector<std::string>& sampleIds);

}  // namespace spanova
