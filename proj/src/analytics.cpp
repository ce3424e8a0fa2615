#include "scifield/analytics.hpp"

#include <algorithm>
#include <cmath>

#include "scifield/common.hpp"

namespace scifield::analytics {

namespace {

std::pair<int, int> parse_field_coding(const std::string& coding) {
    size_t dash = coding.find('-');
    return {std::stoi(coding.substr(0, dash)), std::stoi(coding.substr(dash + 1))};
}

}  // namespace

uint32_t LabelSpace::require(const std::string& coding) const {
    auto it = index.find(coding);
    if (it == index.end()) throw_data("matrix: label '" + coding + "' is outside the taxonomy");
    return it->second;
}

LabelSpace discipline_space(const Taxonomy& tax) {
    LabelSpace space;
    space.level = 0;
    std::vector<int64_t> ids = tax.leaf_disciplines();
    std::sort(ids.begin(), ids.end(), [&](int64_t a, int64_t b) {
        return tax.discipline_code(a) < tax.discipline_code(b);
    });
    for (int64_t id : ids) {
        const TaxNode& node = tax.node(id);
        uint32_t i = static_cast<uint32_t>(space.codings.size());
        space.index.emplace(node.coding, i);
        space.codings.push_back(node.coding);
        space.names.push_back(node.name);
        space.blocks.emplace_back(i, i + 1);
        space.block_of.push_back(i);
        space.block_codes.push_back(tax.discipline_code(id));
        space.block_names.push_back(node.name);
    }
    return space;
}

LabelSpace field_space(const Taxonomy& tax) {
    LabelSpace space;
    space.level = 1;
    std::vector<int64_t> disciplines = tax.leaf_disciplines();
    std::sort(disciplines.begin(), disciplines.end(), [&](int64_t a, int64_t b) {
        return tax.discipline_code(a) < tax.discipline_code(b);
    });
    for (int64_t d : disciplines) {
        std::vector<int64_t> fields = tax.children(d);
        std::sort(fields.begin(), fields.end(), [&](int64_t a, int64_t b) {
            return parse_field_coding(tax.node(a).coding) < parse_field_coding(tax.node(b).coding);
        });
        uint32_t begin = static_cast<uint32_t>(space.codings.size());
        for (int64_t f : fields) {
            const TaxNode& node = tax.node(f);
            space.index.emplace(node.coding, static_cast<uint32_t>(space.codings.size()));
            space.codings.push_back(node.coding);
            space.names.push_back(node.name);
            space.block_of.push_back(static_cast<uint32_t>(space.blocks.size()));
        }
        space.blocks.emplace_back(begin, static_cast<uint32_t>(space.codings.size()));
        space.block_codes.push_back(tax.discipline_code(d));
        space.block_names.push_back(tax.node(d).name);
    }
    return space;
}

std::vector<std::pair<uint32_t, uint32_t>> expand_pairs(const std::vector<uint32_t>& citing,
                                                        const std::vector<uint32_t>& cited) {
    std::vector<uint32_t> a = citing;
    std::vector<uint32_t> b = cited;
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    std::vector<std::pair<uint32_t, uint32_t>> out;
    out.reserve(a.size() * b.size());
    for (uint32_t x : a) {
        for (uint32_t y : b) out.emplace_back(x, y);
    }
    return out;
}

CountMatrix aggregate(const std::vector<std::pair<uint32_t, uint32_t>>& tuples, size_t dim) {
    CountMatrix m = CountMatrix::zeros(dim);
    accumulate(m, tuples);
    return m;
}

void accumulate(CountMatrix& m, const std::vector<std::pair<uint32_t, uint32_t>>& tuples) {
    for (const auto& [citing, cited] : tuples) {
        if (citing >= m.dim || cited >= m.dim) {
            throw_data("matrix: tuple label outside the " + std::to_string(m.dim) + "-label space");
        }
        ++m.at(citing, cited);
    }
}

void merge(CountMatrix& into, const CountMatrix& part) {
    if (into.dim != part.dim) throw_data("matrix: cannot merge different dimensions");
    for (size_t i = 0; i < into.cells.size(); ++i) into.cells[i] += part.cells[i];
}

CountMatrix transpose(const CountMatrix& m) {
    CountMatrix t = CountMatrix::zeros(m.dim);
    for (size_t r = 0; r < m.dim; ++r) {
        for (size_t c = 0; c < m.dim; ++c) t.at(c, r) = m.at(r, c);
    }
    return t;
}

NormMatrix row_normalize(const CountMatrix& m) {
    NormMatrix out;
    out.dim = m.dim;
    out.cells.assign(m.cells.size(), 0.0);
    out.zero_rows.assign(m.dim, 0);
    for (size_t r = 0; r < m.dim; ++r) {
        int64_t sum = 0;
        for (size_t c = 0; c < m.dim; ++c) {
            int64_t v = m.at(r, c);
            if (v < 0) throw_data("matrix: negative count in row " + std::to_string(r));
            sum += v;
        }
        if (sum == 0) {
            out.zero_rows[r] = 1;
            continue;
        }
        for (size_t c = 0; c < m.dim; ++c) {
            out.at(r, c) = static_cast<double>(m.at(r, c)) / static_cast<double>(sum);
        }
    }
    return out;
}

NormMatrix abs_row_normalize(const CountMatrix& m) {
    NormMatrix out;
    out.dim = m.dim;
    out.cells.assign(m.cells.size(), 0.0);
    out.zero_rows.assign(m.dim, 0);
    for (size_t r = 0; r < m.dim; ++r) {
        int64_t sum = 0;
        for (size_t c = 0; c < m.dim; ++c) sum += std::abs(m.at(r, c));
        if (sum == 0) {
            out.zero_rows[r] = 1;
            continue;
        }
        for (size_t c = 0; c < m.dim; ++c) {
            out.at(r, c) = static_cast<double>(m.at(r, c)) / static_cast<double>(sum);
        }
    }
    return out;
}

NetOutput net_output(const CountMatrix& inputs, const CountMatrix& outputs) {
    if (inputs.dim != outputs.dim) throw_data("matrix: net output needs equal shapes");
    NetOutput net;
    net.raw = CountMatrix::zeros(inputs.dim);
    for (size_t i = 0; i < inputs.cells.size(); ++i) {
        net.raw.cells[i] = outputs.cells[i] - inputs.cells[i];
    }
    net.normalized = abs_row_normalize(net.raw);
    return net;
}

BlockSplit strip_blocks(const CountMatrix& inputs, const LabelSpace& space) {
    if (inputs.dim != space.dim()) throw_data("matrix: block index does not match matrix size");
    BlockSplit split;
    split.intra = CountMatrix::zeros(inputs.dim);
    split.cross = inputs;
    for (const auto& [begin, end] : space.blocks) {
        for (uint32_t r = begin; r < end; ++r) {
            for (uint32_t c = begin; c < end; ++c) {
                split.intra.at(r, c) = inputs.at(r, c);
                split.cross.at(r, c) = 0;
            }
        }
    }
    split.cross_t = transpose(split.cross);
    return split;
}

FlowStats flow_stats(const CountMatrix& m) {
    FlowStats stats;
    stats.in_degree.assign(m.dim, 0);
    stats.out_degree.assign(m.dim, 0);
    for (size_t r = 0; r < m.dim; ++r) {
        for (size_t c = 0; c < m.dim; ++c) {
            int64_t v = m.at(r, c);
            stats.in_degree[r] += v;
            stats.out_degree[c] += v;
            stats.total += v;
            if (r == c) stats.intra += v;
        }
    }
    stats.inter = stats.total - stats.intra;
    return stats;
}

FieldScores within_scores(const CountMatrix& block) {
    const size_t n = block.dim;
    FieldScores scores;
    scores.overlap.assign(n, 0.0);
    scores.imbalance.assign(n, 0.0);
    scores.totals.assign(n, 0);
    scores.defined.assign(n, 0);
    scores.boundary.assign(n, 0);
    for (size_t f = 0; f < n; ++f) {
        // in + out citations of field f, own-diagonal counted once
        int64_t total = -block.at(f, f);
        int64_t abs_net = 0;
        int64_t net = 0;
        for (size_t g = 0; g < n; ++g) {
            int64_t in = block.at(f, g);
            int64_t out = block.at(g, f);  // transpose row = column
            total += in + out;
            abs_net += std::abs(in - out);
            net += in - out;
        }
        scores.totals[f] = total;
        if (total <= 0) continue;
        scores.defined[f] = 1;
        scores.overlap[f] = 1.0 - static_cast<double>(abs_net) / static_cast<double>(total);
        scores.imbalance[f] = static_cast<double>(net) / static_cast<double>(total);
        scores.boundary[f] = std::abs(net) == total;
    }
    return scores;
}

FieldScores across_scores(const CountMatrix& inputs, const LabelSpace& space) {
    if (inputs.dim != space.dim()) throw_data("matrix: label space does not match matrix size");
    const size_t n = inputs.dim;
    FieldScores scores;
    scores.overlap.assign(n, 0.0);
    scores.imbalance.assign(n, 0.0);
    scores.totals.assign(n, 0);
    scores.defined.assign(n, 0);
    scores.boundary.assign(n, 0);
    for (size_t f = 0; f < n; ++f) {
        uint32_t block = space.block_of[f];
        auto [begin, end] = space.blocks[block];
        int64_t total = -inputs.at(f, f);
        int64_t abs_net = 0;
        int64_t net = 0;
        for (size_t g = 0; g < n; ++g) {
            int64_t in = inputs.at(f, g);
            int64_t out = inputs.at(g, f);
            total += in + out;
            if (g < begin || g >= end) {  // cross-discipline cells only
                abs_net += std::abs(in - out);
                net += in - out;
            }
        }
        scores.totals[f] = total;
        if (total <= 0) continue;
        scores.defined[f] = 1;
        scores.overlap[f] = 1.0 - static_cast<double>(abs_net) / static_cast<double>(total);
        scores.imbalance[f] = static_cast<double>(net) / static_cast<double>(total);
        scores.boundary[f] = std::abs(net) == total;
    }
    return scores;
}

std::vector<DisciplineScoreRow> discipline_score_table(const FieldScores& within,
                                                       const FieldScores& across,
                                                       const LabelSpace& space,
                                                       bool citation_weighted) {
    std::vector<DisciplineScoreRow> rows;
    for (size_t b = 0; b < space.blocks.size(); ++b) {
        auto [begin, end] = space.blocks[b];
        DisciplineScoreRow row;
        row.code = space.block_codes[b];
        row.name = space.block_names[b];
        double w_within = 0.0, w_across = 0.0;
        for (uint32_t f = begin; f < end; ++f) {
            if (within.defined[f]) {
                double w = citation_weighted ? static_cast<double>(within.totals[f]) : 1.0;
                row.intra_overlap += w * within.overlap[f];
                row.intra_imbalance += w * within.imbalance[f];
                w_within += w;
            }
            if (across.defined[f]) {
                double w = citation_weighted ? static_cast<double>(across.totals[f]) : 1.0;
                row.inter_overlap += w * across.overlap[f];
                row.inter_imbalance += w * across.imbalance[f];
                w_across += w;
            }
            row.fields_counted += within.defined[f] || across.defined[f];
        }
        if (w_within > 0) {
            row.intra_overlap /= w_within;
            row.intra_imbalance /= w_within;
        }
        if (w_across > 0) {
            row.inter_overlap /= w_across;
            row.inter_imbalance /= w_across;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

NormMatrix truncate_cells(const NormMatrix& m, double threshold) {
    NormMatrix out = m;
    for (double& v : out.cells) v = std::min(v, threshold);
    return out;
}

namespace {

template <typename Matrix, typename Format>
std::string coord_text(const Matrix& m, const LabelSpace& space, Format format) {
    std::string out;
    for (size_t r = 0; r < m.dim; ++r) {
        for (size_t c = 0; c < m.dim; ++c) {
            auto v = m.at(r, c);
            if (v == 0) continue;
            out += space.codings[r];
            out.push_back('\t');
            out += space.codings[c];
            out.push_back('\t');
            out += format(v);
            out.push_back('\n');
        }
    }
    return out;
}

template <typename Matrix, typename Format>
std::string dense_csv(const Matrix& m, const LabelSpace& space, Format format) {
    std::string out = "citing";
    for (size_t c = 0; c < m.dim; ++c) {
        out.push_back(',');
        out += space.codings[c];
    }
    out.push_back('\n');
    for (size_t r = 0; r < m.dim; ++r) {
        out += space.codings[r];
        for (size_t c = 0; c < m.dim; ++c) {
            out.push_back(',');
            out += format(m.at(r, c));
        }
        out.push_back('\n');
    }
    return out;
}

}  // namespace

std::string matrix_coord_text(const CountMatrix& m, const LabelSpace& space) {
    return coord_text(m, space, [](int64_t v) { return std::to_string(v); });
}

std::string matrix_coord_text(const NormMatrix& m, const LabelSpace& space) {
    return coord_text(m, space, [](double v) { return format_double(v, 9); });
}

std::string matrix_dense_csv(const CountMatrix& m, const LabelSpace& space) {
    return dense_csv(m, space, [](int64_t v) { return std::to_string(v); });
}

std::string matrix_dense_csv(const NormMatrix& m, const LabelSpace& space) {
    return dense_csv(m, space, [](double v) { return format_double(v, 9); });
}

}  // namespace scifield::analytics
