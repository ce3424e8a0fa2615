#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "scifield/common.hpp"

namespace scifield::ingest {

/// An abstract stored as token -> positions. Valid records cover positions
/// 0..index_length-1 exactly once; decode rejects anything else.
struct AbstractRecord {
    int64_t paper_id = 0;
    int64_t index_length = 0;
    std::map<std::string, std::vector<int64_t>> positions;
};

std::string decode_abstract(const AbstractRecord& rec);
AbstractRecord encode_abstract(int64_t paper_id, std::string_view text);

/// Input line layout: paper_id \t index_length \t {"token": [positions...]}.
AbstractRecord parse_abstract_line(std::string_view line);
std::string format_abstract_line(const AbstractRecord& rec);

constexpr size_t kDefaultMaxLen = 200;

/// Lowercase, strip ASCII punctuation, split on whitespace, cap at max_len
/// tokens. Bytes outside ASCII pass through untouched.
std::vector<std::string> normalize_tokens(std::string_view text,
                                          size_t max_len = kDefaultMaxLen);

/// Top-k token vocabulary. Ids run 1..k; id 0 is reserved for both
/// out-of-vocabulary tokens and padding.
struct VocabIndex {
    size_t k = 0;
    std::vector<std::string> tokens;  // tokens[i] has id i+1
    std::unordered_map<std::string, uint32_t> token_to_id;

    uint32_t id_of(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? 0u : it->second;
    }
    size_t size() const { return tokens.size(); }

    std::string serialize() const;  // token \t id lines
    static VocabIndex deserialize(std::string_view content);
    void save(const std::filesystem::path& path) const;
    static VocabIndex load(const std::filesystem::path& path);
    uint64_t content_hash() const { return fnv1a64(serialize()); }
};

/// Streaming frequency counter. Ranking is by count descending, ties broken
/// by first occurrence in the scan order, so the result is a pure function
/// of the corpus sequence.
class VocabBuilder {
public:
    void add(const std::vector<std::string>& tokens);
    VocabIndex finish(size_t k) const;

private:
    struct Entry {
        uint64_t count = 0;
        uint64_t first_seen = 0;
    };
    std::unordered_map<std::string, Entry> counts_;
    uint64_t next_position_ = 0;
};

/// Token-id sequence, zero-padded to max_len for batch assembly.
struct TokenSeq {
    int64_t paper_id = 0;
    std::vector<uint32_t> ids;
};

TokenSeq vectorize(int64_t paper_id, const std::vector<std::string>& tokens,
                   const VocabIndex& vocab, size_t max_len = kDefaultMaxLen);

/// Term-frequency counts over vocabulary ids 1..k as (feature, count) pairs
/// with feature = id - 1; the 0 id (padding / out-of-vocabulary) is dropped.
std::vector<std::pair<uint32_t, double>> bow_features(const std::vector<uint32_t>& ids);

}  // namespace scifield::ingest
