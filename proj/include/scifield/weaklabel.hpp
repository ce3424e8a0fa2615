#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "scifield/taxonomy.hpp"

namespace scifield::weaklabel {

/// A field-of-study keyword, normalized with the same pipeline as abstract
/// text. Singleton = one token after splitting.
struct FosTag {
    std::string text;
    std::vector<std::string> tokens;
    std::optional<int> level;  // source scheme depth, when the input carries one

    bool singleton() const { return tokens.size() == 1; }
};

FosTag make_tag(std::string_view raw, std::optional<int> level = std::nullopt);

/// What a subfield looks like in text: the normalized description and the
/// topic nouns extracted from it. Non-singleton tags match against the
/// description, singleton tags against the nouns.
struct SubfieldDescriptor {
    int64_t subfield = 0;
    std::vector<std::string> wikitext_tokens;
    std::unordered_set<std::string> topic_nouns;
};

/// Non-singleton: the tag's tokens occur as a contiguous token run in the
/// descriptor text. Singleton: the token is one of the topic nouns.
bool match_tag(const FosTag& tag, const SubfieldDescriptor& desc);

/// Descriptor collection with lookup indices; iteration order is input order.
class DescriptorSet {
public:
    void add(SubfieldDescriptor desc);
    const std::vector<SubfieldDescriptor>& all() const { return descriptors_; }

    /// Candidate descriptor indices for a tag (superset of actual matches).
    std::vector<size_t> candidates(const FosTag& tag) const;

    /// One record per line: subfield_coding \t wikitext \t noun noun ...
    static DescriptorSet load(const std::filesystem::path& path, const Taxonomy& tax);

private:
    std::vector<SubfieldDescriptor> descriptors_;
    std::unordered_map<std::string, std::vector<size_t>> by_noun_;
    std::unordered_map<std::string, std::vector<size_t>> by_first_token_;
};

struct AnnotatedPaper {
    int64_t paper_id = 0;
    std::vector<std::array<int64_t, 3>> triplets;  // (discipline, field, subfield), sorted, unique
};

/// Matches every tag against every subfield descriptor; a matched subfield
/// contributes its full root-to-leaf path. Returns nullopt when nothing
/// matches (the paper goes to the inference pool).
std::optional<AnnotatedPaper> annotate_paper(int64_t paper_id,
                                             const std::vector<FosTag>& tags,
                                             const DescriptorSet& descriptors,
                                             const Taxonomy& tax);

enum class SplitSlot { train, validation, test };

struct SplitConfig {
    double validation_fraction = 0.4;
    uint64_t seed = 0;
};

struct SplitResult {
    // paper -> slot, in input order (annotated first, then unmatched)
    std::vector<std::pair<int64_t, SplitSlot>> assignment;
    std::vector<std::string> warnings;

    size_t count(SplitSlot slot) const;
    std::string to_manifest() const;  // paper_id \t {train|validation|test}
};

/// Stratified train/validation split of the matched papers; each stratum is
/// split at 1 - validation_fraction with the count rounded to the nearest
/// paper. Strata with fewer than two papers go wholly to train with a
/// warning. Unmatched papers all go to the test pool. Deterministic for a
/// fixed seed.
SplitResult split_corpus(const std::vector<std::pair<int64_t, std::string>>& labeled,
                         const std::vector<int64_t>& unmatched,
                         const SplitConfig& config);

}  // namespace scifield::weaklabel
