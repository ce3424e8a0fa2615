#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "scifield/taxonomy.hpp"

namespace scifield::analytics {

/// Ordered label universe for one matrix level. Rows/columns are sorted by
/// discipline code, then field number, so a field-level matrix decomposes
/// into per-discipline blocks along the diagonal.
struct LabelSpace {
    int level = 0;  // 0 disciplines, 1 fields
    std::vector<std::string> codings;
    std::vector<std::string> names;
    std::unordered_map<std::string, uint32_t> index;

    // Per-discipline block structure. At discipline level each label is its
    // own block.
    std::vector<std::pair<uint32_t, uint32_t>> blocks;  // [begin, end)
    std::vector<uint32_t> block_of;                     // label -> block ordinal
    std::vector<int> block_codes;                       // block ordinal -> discipline code
    std::vector<std::string> block_names;

    size_t dim() const { return codings.size(); }
    uint32_t require(const std::string& coding) const;
};

LabelSpace discipline_space(const Taxonomy& tax);
LabelSpace field_space(const Taxonomy& tax);

/// Square citation-count matrix; rows cite (demand), columns are cited
/// (supply). Counts stay integral until normalization.
struct CountMatrix {
    size_t dim = 0;
    std::vector<int64_t> cells;

    static CountMatrix zeros(size_t dim) { return {dim, std::vector<int64_t>(dim * dim, 0)}; }
    int64_t& at(size_t r, size_t c) { return cells[r * dim + c]; }
    int64_t at(size_t r, size_t c) const { return cells[r * dim + c]; }
};

struct NormMatrix {
    size_t dim = 0;
    std::vector<double> cells;
    std::vector<uint8_t> zero_rows;  // rows left as zero during normalization

    double& at(size_t r, size_t c) { return cells[r * dim + c]; }
    double at(size_t r, size_t c) const { return cells[r * dim + c]; }
};

/// Cartesian product of the two label sets, one tuple per (citing, cited)
/// pair. Inputs are treated as sets; the result contains no duplicates.
std::vector<std::pair<uint32_t, uint32_t>> expand_pairs(const std::vector<uint32_t>& citing,
                                                        const std::vector<uint32_t>& cited);

CountMatrix aggregate(const std::vector<std::pair<uint32_t, uint32_t>>& tuples, size_t dim);
void accumulate(CountMatrix& m, const std::vector<std::pair<uint32_t, uint32_t>>& tuples);
/// Elementwise sum; partial matrices from sharded expansion merge in any
/// order.
void merge(CountMatrix& into, const CountMatrix& part);

CountMatrix transpose(const CountMatrix& m);

/// Right-stochastic normalization: each nonzero row scaled to sum 1. Zero
/// rows stay zero and are flagged, never NaN.
NormMatrix row_normalize(const CountMatrix& m);

/// Normalization by the row sum of absolute values, for matrices with mixed
/// signs (the net-output matrix).
NormMatrix abs_row_normalize(const CountMatrix& m);

struct NetOutput {
    CountMatrix raw;         // outputs minus inputs
    NormMatrix normalized;   // absolute-row-sum normalized
};
NetOutput net_output(const CountMatrix& inputs, const CountMatrix& outputs);

struct BlockSplit {
    CountMatrix intra;    // block-diagonal part
    CountMatrix cross;    // inputs with intra-discipline blocks removed
    CountMatrix cross_t;  // its transpose
};
BlockSplit strip_blocks(const CountMatrix& inputs, const LabelSpace& space);

struct FlowStats {
    std::vector<int64_t> in_degree;   // row sums
    std::vector<int64_t> out_degree;  // row sums of the transpose
    int64_t total = 0;
    int64_t intra = 0;  // trace
    int64_t inter = 0;  // total - intra
};
FlowStats flow_stats(const CountMatrix& m);

/// Per-field score pair: `overlap` is the in/out-citation overlap in [0,1],
/// `imbalance` the signed in-over-out share in [-1,1]. Fields with no
/// citations at all have no score (defined = 0). The +/-1 imbalance
/// endpoints are reachable only by fields whose citations all flow one way;
/// such hits are flagged rather than treated as errors.
struct FieldScores {
    std::vector<double> overlap;
    std::vector<double> imbalance;
    std::vector<int64_t> totals;   // normalizing in+out citation totals
    std::vector<uint8_t> defined;
    std::vector<uint8_t> boundary;  // |imbalance| == 1 exactly
};

/// Scores over one discipline's diagonal block (fields within a discipline).
FieldScores within_scores(const CountMatrix& block);

/// Scores over the full field matrix with intra-discipline blocks removed
/// (interdisciplinarity); totals still count all citations.
FieldScores across_scores(const CountMatrix& inputs, const LabelSpace& space);

struct DisciplineScoreRow {
    int code = 0;
    std::string name;
    double intra_overlap = 0.0, intra_imbalance = 0.0;
    double inter_overlap = 0.0, inter_imbalance = 0.0;
    size_t fields_counted = 0;
};

/// Per-discipline rows: the average of each score over the discipline's
/// fields, simple by default or weighted by each field's citation total.
std::vector<DisciplineScoreRow> discipline_score_table(const FieldScores& within,
                                                       const FieldScores& across,
                                                       const LabelSpace& space,
                                                       bool citation_weighted = false);

/// Cells above the threshold are clipped to it (a display aid for dense
/// heat grids); everything else passes through.
NormMatrix truncate_cells(const NormMatrix& m, double threshold);

// Text formats: coordinate triples for any size, dense CSV for small grids.
std::string matrix_coord_text(const CountMatrix& m, const LabelSpace& space);
std::string matrix_coord_text(const NormMatrix& m, const LabelSpace& space);
std::string matrix_dense_csv(const CountMatrix& m, const LabelSpace& space);
std::string matrix_dense_csv(const NormMatrix& m, const LabelSpace& space);

}  // namespace scifield::analytics
