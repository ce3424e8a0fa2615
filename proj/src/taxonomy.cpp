#include "scifield/taxonomy.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace scifield {

namespace {

int64_t parse_int(std::string_view text, const std::string& context) {
    int64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw_data("taxonomy: expected integer, got '" + std::string(text) + "' (" + context + ")");
    }
    return value;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw_data("taxonomy: cannot open " + path.string());
    return parse(in, path.string());
}

// File format, tab separated, one node per line:
//   id  level  parent  classifiable  coding  name
// parent is "-" at level 0; coding is "-" for grouping nodes.
// Lines starting with '#' and blank lines are skipped.
Taxonomy Taxonomy::parse(std::istream& in, const std::string& source_name) {
    Taxonomy tax;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        auto fields = split_view(view, '\t');
        if (fields.size() != 6) {
            throw_data("taxonomy: " + source_name + ":" + std::to_string(lineno) +
                       ": expected 6 tab-separated fields, got " + std::to_string(fields.size()));
        }
        TaxNode node;
        const std::string where = source_name + ":" + std::to_string(lineno);
        node.id = parse_int(trim(fields[0]), where);
        node.level = static_cast<int>(parse_int(trim(fields[1]), where));
        std::string_view parent = trim(fields[2]);
        if (parent != "-") node.parent = parse_int(parent, where);
        std::string_view flag = trim(fields[3]);
        if (flag != "0" && flag != "1") {
            throw_data("taxonomy: " + where + ": classifiable flag must be 0 or 1");
        }
        node.classifiable = flag == "1";
        std::string_view coding = trim(fields[4]);
        if (coding != "-") node.coding = std::string(coding);
        node.name = std::string(trim(fields[5]));
        tax.nodes_.push_back(std::move(node));
    }
    tax.index_and_validate(source_name);
    return tax;
}

void Taxonomy::index_and_validate(const std::string& source_name) {
    auto fail = [&](const TaxNode& node, const std::string& what) {
        throw_data("taxonomy: " + source_name + ": node " + std::to_string(node.id) +
                   " ('" + node.name + "'): " + what);
    };

    for (size_t i = 0; i < nodes_.size(); ++i) {
        const TaxNode& node = nodes_[i];
        if (node.level < 0 || node.level > 2) fail(node, "level must be 0, 1 or 2");
        if ((node.level == 0) != !node.parent.has_value()) {
            fail(node, "parent must be present exactly when level > 0");
        }
        if (!by_id_.emplace(node.id, i).second) fail(node, "duplicate node id");
    }

    for (const TaxNode& node : nodes_) {
        level_index_[node.level].push_back(node.id);
        if (node.parent) {
            auto it = by_id_.find(*node.parent);
            if (it == by_id_.end()) {
                fail(node, "dangling parent " + std::to_string(*node.parent));
            }
            const TaxNode& parent = nodes_[it->second];
            if (parent.level != node.level - 1) {
                fail(node, "parent level " + std::to_string(parent.level) +
                           " does not precede level " + std::to_string(node.level));
            }
            children_[parent.id].push_back(node.id);
        }
    }

    // Discipline codes: unique integers forming 0..n-1 over classifiable
    // level-0 nodes; keyed by node name.
    std::set<int> codes;
    for (int64_t id : level_index_[0]) {
        const TaxNode& node = nodes_[by_id_[id]];
        if (!node.classifiable) {
            if (!node.coding.empty()) fail(node, "grouping node must not carry a coding");
            continue;
        }
        if (node.coding.empty()) fail(node, "classifiable discipline requires a coding");
        int code = static_cast<int>(parse_int(node.coding, "discipline coding"));
        if (!codes.insert(code).second) fail(node, "duplicate discipline code " + node.coding);
        if (!discipline_coding_.emplace(node.name, code).second) {
            fail(node, "duplicate discipline name");
        }
        coding_index_.emplace(node.coding, id);
    }
    if (!codes.empty()) {
        if (*codes.begin() != 0 || *codes.rbegin() != static_cast<int>(codes.size()) - 1) {
            throw_data("taxonomy: " + source_name + ": discipline codes must form 0.." +
                       std::to_string(codes.size() - 1));
        }
    }

    // Field codings "d-f" must be globally unique and reference the parent's
    // discipline code; subfields extend their field's coding.
    for (int level = 1; level <= 2; ++level) {
        for (int64_t id : level_index_[level]) {
            const TaxNode& node = nodes_[by_id_[id]];
            if (node.coding.empty()) fail(node, "missing coding");
            const TaxNode& parent = nodes_[by_id_[*node.parent]];
            size_t cut = node.coding.rfind('-');
            if (cut == std::string::npos) fail(node, "coding '" + node.coding + "' lacks a parent prefix");
            std::string prefix = node.coding.substr(0, cut);
            if (level == 1) {
                auto it = coding_index_.find(prefix);
                if (it == coding_index_.end()) {
                    fail(node, "dangling parent: coding '" + node.coding +
                               "' references unknown discipline code " + prefix);
                }
                if (it->second != parent.id) {
                    fail(node, "coding '" + node.coding + "' disagrees with parent node " +
                               std::to_string(parent.id));
                }
            } else if (prefix != parent.coding) {
                fail(node, "coding '" + node.coding + "' disagrees with parent coding '" +
                           parent.coding + "'");
            }
            if (!coding_index_.emplace(node.coding, id).second) {
                fail(node, "duplicate coding '" + node.coding + "'");
            }
        }
    }
}

const TaxNode& Taxonomy::node(int64_t id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw_data("taxonomy: unknown node id " + std::to_string(id));
    return nodes_[it->second];
}

const std::vector<int64_t>& Taxonomy::level_nodes(int level) const {
    if (level < 0 || level > 2) throw_usage("taxonomy: level must be 0, 1 or 2");
    return level_index_[level];
}

const std::vector<int64_t>& Taxonomy::children(int64_t id) const {
    static const std::vector<int64_t> empty;
    auto it = children_.find(id);
    return it == children_.end() ? empty : it->second;
}

std::vector<int64_t> Taxonomy::leaf_disciplines() const {
    std::vector<int64_t> out;
    for (int64_t id : level_index_[0]) {
        if (node(id).classifiable) out.push_back(id);
    }
    return out;
}

const TaxNode* Taxonomy::find_by_coding(const std::string& coding) const {
    auto it = coding_index_.find(coding);
    return it == coding_index_.end() ? nullptr : &node(it->second);
}

int64_t Taxonomy::require_coding(const std::string& coding) const {
    const TaxNode* n = find_by_coding(coding);
    if (!n) throw_data("taxonomy: unknown coding '" + coding + "'");
    return n->id;
}

int Taxonomy::discipline_code(int64_t discipline_id) const {
    const TaxNode& n = node(discipline_id);
    if (n.level != 0 || !n.classifiable) {
        throw_usage("taxonomy: node " + std::to_string(discipline_id) + " is not a classifiable discipline");
    }
    return static_cast<int>(std::stoll(n.coding));
}

std::array<int64_t, 3> Taxonomy::path_of(int64_t subfield_id) const {
    const TaxNode& sub = node(subfield_id);
    if (sub.level != 2) throw_usage("taxonomy: node " + std::to_string(subfield_id) + " is not a subfield");
    const TaxNode& field = node(*sub.parent);
    return {*field.parent, field.id, sub.id};
}

std::vector<int64_t> scope_classes(const Taxonomy& tax, int level,
                                   std::optional<int64_t> scope) {
    if (!scope) {
        if (level != 0) throw_usage("labels: a scope is required above level 0");
        return tax.leaf_disciplines();
    }
    const TaxNode& parent = tax.node(*scope);
    if (parent.level != level - 1) {
        throw_usage("labels: scope node " + std::to_string(*scope) + " is at level " +
                    std::to_string(parent.level) + ", expected " + std::to_string(level - 1));
    }
    return tax.children(*scope);
}

LabelVector encode_labels(const Taxonomy& tax, const std::vector<int64_t>& labels,
                          int level, std::optional<int64_t> scope, LabelMode mode) {
    std::vector<int64_t> classes = scope_classes(tax, level, scope);
    LabelVector vec;
    vec.level = level;
    vec.scope = scope;
    vec.bits.assign(classes.size(), 0);
    for (int64_t label : labels) {
        if (!tax.has_node(label)) throw_data("labels: unknown label id " + std::to_string(label));
        auto it = std::find(classes.begin(), classes.end(), label);
        if (it == classes.end()) {
            throw_data("labels: node " + std::to_string(label) + " is outside the scope");
        }
        vec.bits[static_cast<size_t>(it - classes.begin())] = 1;
    }
    size_t set = 0;
    for (uint8_t b : vec.bits) set += b;
    if (mode == LabelMode::single && set != 1) {
        throw_data("labels: single-label vector requires exactly one class, got " + std::to_string(set));
    }
    if (mode == LabelMode::multi && set == 0) {
        throw_data("labels: multi-label vector requires at least one class");
    }
    return vec;
}

std::vector<int64_t> decode_labels(const Taxonomy& tax, const LabelVector& vec) {
    std::vector<int64_t> classes = scope_classes(tax, vec.level, vec.scope);
    if (classes.size() != vec.bits.size()) {
        throw_data("labels: vector length " + std::to_string(vec.bits.size()) +
                   " does not match scope size " + std::to_string(classes.size()));
    }
    std::vector<int64_t> out;
    for (size_t i = 0; i < vec.bits.size(); ++i) {
        if (vec.bits[i]) out.push_back(classes[i]);
    }
    return out;
}

}  // namespace scifield
