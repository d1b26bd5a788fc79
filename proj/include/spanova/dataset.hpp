#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spanova/types.hpp"

namespace spanova {

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExpressionMatrix {
    std::vector<std::string> geneIds;
    std::vector<std::string> sampleIds;
    RowMatrix values;        // p x n, log2 intensities
    bool corrected = false;  // set when the file carries the corrected marker

    int p() const { return static_cast<int>(geneIds.size()); }
    int n() const { return static_cast<int>(sampleIds.size()); }
};

ExpressionMatrix load_expression(const std::string& path);
std::string expression_to_text(const ExpressionMatrix& X);
void save_expression(const ExpressionMatrix& X, const std::string& path);

// keep genes with (max-min) >= minRange and median >= minMedian
ExpressionMatrix filter_genes(const ExpressionMatrix& X, double minRange = 0.25,
                              double minMedian = 5.0);

ExpressionMatrix subset_genes(const ExpressionMatrix& X, const std::vector<int>& rows);

struct SampleAnnotations {
    std::vector<std::string> sampleIds;
    std::vector<std::string> factorNames;            // order defines design-cell order
    std::vector<std::vector<std::string>> levels;    // per factor; [0] is the baseline
    IntMatrix codes;                                 // n x F level indices

    int n() const { return static_cast<int>(sampleIds.size()); }
    int factors() const { return static_cast<int>(factorNames.size()); }
};

SampleAnnotations load_annotations(const std::string& path);

enum class ColumnKind { Intercept, DesignCell, ArtifactCovariate, Factor };

const char* column_kind_name(ColumnKind k);
ColumnKind column_kind_from_name(const std::string& s);

struct DesignMatrix {
    std::vector<ColumnKind> kinds;
    std::vector<std::string> names;
    Matrix H;  // n x K

    int n() const { return static_cast<int>(H.rows()); }
    int K() const { return static_cast<int>(H.cols()); }
};

// intercept plus one indicator per non-baseline cell of the saturated
// cross-classification; cells ordered by (number of non-baseline factors,
// factor subset, level tuple)
DesignMatrix build_design(const SampleAnnotations& ann);

// explicit design files, an alternative to annotations for synthetic runs
struct LoadedDesign {
    DesignMatrix design;
    std::vector<std::string> sampleIds;
};

std::string design_to_text(const DesignMatrix& d, const std::vector<std::string>& sampleIds);
LoadedDesign parse_design(const std::string& text, const std::string& where);
LoadedDesign load_design(const std::string& path);

// leading principal-component score vectors (n x numPCs) of the row-centered
// control-probe matrix; unit norm, zero mean, sign-fixed
Matrix housekeeping_pcs(const ExpressionMatrix& Xhk, int numPCs = 5);

DesignMatrix with_covariates(const DesignMatrix& design, const Matrix& C);

struct GeneMapEntry {
    std::string source;
    std::string target;  // empty = unmatched
    std::optional<double> score;
};

struct GeneMap {
    std::vector<GeneMapEntry> entries;
};

GeneMap load_gene_map(const std::string& path);
void save_gene_map(const GeneMap& map, const std::string& path);

// drop unmatched sources, keep best-scoring target per source, drop targets
// claimed by several sources; result is one-to-one
GeneMap resolve_gene_map(const GeneMap& raw);

}  // namespace spanova
