#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "scifield/common.hpp"

namespace scifield {

/// One node of the three-level label tree. Level 0 is a discipline, level 1
/// a field, level 2 a subfield. Level-0 nodes that only group other
/// disciplines (e.g. a broad category heading) carry classifiable = false
/// and no coding.
struct TaxNode {
    int64_t id = 0;
    std::string name;
    int level = 0;
    std::optional<int64_t> parent;
    bool classifiable = true;
    // Disciplines: decimal code ("43"). Fields: "43-30". Subfields: "43-30-1".
    // Empty for grouping nodes.
    std::string coding;
};

enum class LabelMode { single, multi };

/// Multi-hot label encoding over the ordered class list of one scope.
/// scope = the parent node whose children are being indexed; no scope at
/// level 0 (the class list is then the classifiable disciplines).
struct LabelVector {
    int level = 0;
    std::optional<int64_t> scope;
    std::vector<uint8_t> bits;
};

/// The label tree, immutable after load. Node order within a level and
/// within a sibling set is file order, which fixes class indices, matrix
/// row order and label-vector layout for the lifetime of the artifact.
class Taxonomy {
public:
    static Taxonomy load(const std::filesystem::path& path);
    static Taxonomy parse(std::istream& in, const std::string& source_name);

    const TaxNode& node(int64_t id) const;
    bool has_node(int64_t id) const { return by_id_.count(id) != 0; }
    const std::vector<TaxNode>& nodes() const { return nodes_; }

    /// Node ids at one level, file order.
    const std::vector<int64_t>& level_nodes(int level) const;

    /// Children of a node, file order.
    const std::vector<int64_t>& children(int64_t id) const;

    /// Classifiable level-0 nodes, file order; grouping nodes are excluded.
    std::vector<int64_t> leaf_disciplines() const;

    /// name -> integer code over classifiable disciplines (a bijection onto
    /// 0..n-1, validated at load).
    const std::map<std::string, int>& discipline_coding() const { return discipline_coding_; }

    const TaxNode* find_by_coding(const std::string& coding) const;
    int64_t require_coding(const std::string& coding) const;

    int discipline_code(int64_t discipline_id) const;

    /// Root-to-leaf path (discipline, field, subfield) for a subfield node.
    std::array<int64_t, 3> path_of(int64_t subfield_id) const;

private:
    void index_and_validate(const std::string& source_name);

    std::vector<TaxNode> nodes_;
    std::unordered_map<int64_t, size_t> by_id_;
    std::array<std::vector<int64_t>, 3> level_index_;
    std::unordered_map<int64_t, std::vector<int64_t>> children_;
    std::map<std::string, int> discipline_coding_;
    std::unordered_map<std::string, int64_t> coding_index_;
};

/// Ordered class universe for one scope: children of `scope`, or the
/// classifiable disciplines when scope is absent (level 0).
std::vector<int64_t> scope_classes(const Taxonomy& tax, int level,
                                   std::optional<int64_t> scope);

LabelVector encode_labels(const Taxonomy& tax, const std::vector<int64_t>& labels,
                          int level, std::optional<int64_t> scope,
                          LabelMode mode = LabelMode::multi);

std::vector<int64_t> decode_labels(const Taxonomy& tax, const LabelVector& vec);

}  // namespace scifield
