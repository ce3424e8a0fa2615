#include "scifield/weaklabel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "scifield/ingest.hpp"

namespace scifield::weaklabel {

namespace {
// Tags and descriptors are short; normalize without the abstract cap.
constexpr size_t kNoCap = static_cast<size_t>(-1);
}  // namespace

FosTag make_tag(std::string_view raw, std::optional<int> level) {
    FosTag tag;
    tag.text = std::string(raw);
    tag.tokens = ingest::normalize_tokens(raw, kNoCap);
    tag.level = level;
    return tag;
}

bool match_tag(const FosTag& tag, const SubfieldDescriptor& desc) {
    if (tag.tokens.empty()) return false;
    if (tag.singleton()) {
        return desc.topic_nouns.count(tag.tokens.front()) != 0;
    }
    const auto& text = desc.wikitext_tokens;
    if (tag.tokens.size() > text.size()) return false;
    for (size_t i = 0; i + tag.tokens.size() <= text.size(); ++i) {
        if (std::equal(tag.tokens.begin(), tag.tokens.end(), text.begin() + i)) return true;
    }
    return false;
}

void DescriptorSet::add(SubfieldDescriptor desc) {
    size_t idx = descriptors_.size();
    for (const std::string& noun : desc.topic_nouns) {
        by_noun_[noun].push_back(idx);
    }
    std::set<std::string> firsts(desc.wikitext_tokens.begin(), desc.wikitext_tokens.end());
    for (const std::string& token : firsts) {
        by_first_token_[token].push_back(idx);
    }
    descriptors_.push_back(std::move(desc));
}

std::vector<size_t> DescriptorSet::candidates(const FosTag& tag) const {
    if (tag.tokens.empty()) return {};
    const auto& index = tag.singleton() ? by_noun_ : by_first_token_;
    auto it = index.find(tag.tokens.front());
    if (it == index.end()) return {};
    return it->second;
}

DescriptorSet DescriptorSet::load(const std::filesystem::path& path, const Taxonomy& tax) {
    DescriptorSet set;
    std::string content = read_file(path);
    size_t lineno = 0;
    for (std::string_view line : split_view(content, '\n')) {
        ++lineno;
        if (line.empty() || line.front() == '#') continue;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        auto fields = split_view(line, '\t');
        if (fields.size() != 3) {
            throw_data("descriptors: " + path.string() + ":" + std::to_string(lineno) +
                       ": expected subfield \\t wikitext \\t nouns");
        }
        SubfieldDescriptor desc;
        desc.subfield = tax.require_coding(std::string(fields[0]));
        if (tax.node(desc.subfield).level != 2) {
            throw_data("descriptors: " + std::string(fields[0]) + " is not a subfield");
        }
        desc.wikitext_tokens = ingest::normalize_tokens(fields[1], kNoCap);
        for (const std::string& noun : ingest::normalize_tokens(fields[2], kNoCap)) {
            desc.topic_nouns.insert(noun);
        }
        set.add(std::move(desc));
    }
    return set;
}

std::optional<AnnotatedPaper> annotate_paper(int64_t paper_id,
                                             const std::vector<FosTag>& tags,
                                             const DescriptorSet& descriptors,
                                             const Taxonomy& tax) {
    std::set<int64_t> matched;
    for (const FosTag& tag : tags) {
        for (size_t idx : descriptors.candidates(tag)) {
            const SubfieldDescriptor& desc = descriptors.all()[idx];
            if (matched.count(desc.subfield)) continue;
            if (match_tag(tag, desc)) matched.insert(desc.subfield);
        }
    }
    if (matched.empty()) return std::nullopt;
    AnnotatedPaper paper;
    paper.paper_id = paper_id;
    for (int64_t subfield : matched) {
        paper.triplets.push_back(tax.path_of(subfield));
    }
    std::sort(paper.triplets.begin(), paper.triplets.end());
    return paper;
}

size_t SplitResult::count(SplitSlot slot) const {
    size_t n = 0;
    for (const auto& [paper, s] : assignment) {
        if (s == slot) ++n;
    }
    return n;
}

std::string SplitResult::to_manifest() const {
    std::string out;
    for (const auto& [paper, slot] : assignment) {
        out += std::to_string(paper);
        out.push_back('\t');
        switch (slot) {
            case SplitSlot::train: out += "train"; break;
            case SplitSlot::validation: out += "validation"; break;
            case SplitSlot::test: out += "test"; break;
        }
        out.push_back('\n');
    }
    return out;
}

SplitResult split_corpus(const std::vector<std::pair<int64_t, std::string>>& labeled,
                         const std::vector<int64_t>& unmatched,
                         const SplitConfig& config) {
    if (labeled.empty()) throw_data("split: no annotated papers, nothing to train on");
    if (config.validation_fraction < 0.0 || config.validation_fraction >= 1.0) {
        throw_usage("split: validation fraction must be in [0, 1)");
    }

    // Group papers by stratum, strata ordered by first appearance.
    std::vector<std::string> strata;
    std::unordered_map<std::string, std::vector<size_t>> groups;
    for (size_t i = 0; i < labeled.size(); ++i) {
        auto [it, inserted] = groups.try_emplace(labeled[i].second);
        if (inserted) strata.push_back(labeled[i].second);
        it->second.push_back(i);
    }

    SplitResult result;
    result.assignment.resize(labeled.size());
    for (const std::string& stratum : strata) {
        std::vector<size_t>& members = groups[stratum];
        if (members.size() < 2) {
            result.warnings.push_back("stratum '" + stratum + "' has " +
                                      std::to_string(members.size()) +
                                      " paper(s); placed wholly in train");
            for (size_t i : members) {
                result.assignment[i] = {labeled[i].first, SplitSlot::train};
            }
            continue;
        }
        // Per-stratum generator so the assignment of one class is
        // insensitive to the size of the others.
        std::mt19937_64 rng(config.seed ^ fnv1a64(stratum));
        std::shuffle(members.begin(), members.end(), rng);
        auto n_train = static_cast<size_t>(
            std::llround(static_cast<double>(members.size()) * (1.0 - config.validation_fraction)));
        n_train = std::min(n_train, members.size());
        for (size_t j = 0; j < members.size(); ++j) {
            size_t i = members[j];
            result.assignment[i] = {labeled[i].first,
                                    j < n_train ? SplitSlot::train : SplitSlot::validation};
        }
    }
    for (int64_t paper : unmatched) {
        result.assignment.emplace_back(paper, SplitSlot::test);
    }
    return result;
}

}  // namespace scifield::weaklabel
