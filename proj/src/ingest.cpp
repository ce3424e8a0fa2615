#include "scifield/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "json.hpp"

namespace scifield::ingest {

namespace {

[[noreturn]] void malformed(int64_t paper_id, const std::string& what) {
    throw_data("abstract record " + std::to_string(paper_id) + ": " + what);
}

}  // namespace

std::string decode_abstract(const AbstractRecord& rec) {
    if (rec.index_length < 0) malformed(rec.paper_id, "negative index length");
    std::vector<const std::string*> slots(static_cast<size_t>(rec.index_length), nullptr);
    for (const auto& [token, positions] : rec.positions) {
        for (int64_t pos : positions) {
            if (pos < 0 || pos >= rec.index_length) {
                malformed(rec.paper_id, "position " + std::to_string(pos) +
                                            " outside 0.." + std::to_string(rec.index_length - 1));
            }
            if (slots[static_cast<size_t>(pos)] != nullptr) {
                malformed(rec.paper_id, "duplicate position " + std::to_string(pos));
            }
            slots[static_cast<size_t>(pos)] = &token;
        }
    }
    std::string out;
    for (size_t i = 0; i < slots.size(); ++i) {
        if (slots[i] == nullptr) {
            malformed(rec.paper_id, "missing position " + std::to_string(i));
        }
        if (i > 0) out.push_back(' ');
        out += *slots[i];
    }
    return out;
}

AbstractRecord encode_abstract(int64_t paper_id, std::string_view text) {
    AbstractRecord rec;
    rec.paper_id = paper_id;
    int64_t pos = 0;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) {
            rec.positions[std::string(text.substr(start, i - start))].push_back(pos++);
        }
    }
    rec.index_length = pos;
    return rec;
}

AbstractRecord parse_abstract_line(std::string_view line) {
    auto fields = split_view(line, '\t');
    if (fields.size() != 3) {
        throw_data("abstract line: expected 3 tab-separated fields, got " +
                   std::to_string(fields.size()));
    }
    AbstractRecord rec;
    auto parse_i64 = [&](std::string_view s, const char* what) {
        int64_t v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) {
            throw_data(std::string("abstract line: bad ") + what + " '" + std::string(s) + "'");
        }
        return v;
    };
    rec.paper_id = parse_i64(fields[0], "paper id");
    rec.index_length = parse_i64(fields[1], "index length");

    nlohmann::json doc = nlohmann::json::parse(fields[2], nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        malformed(rec.paper_id, "inverted index is not a JSON object");
    }
    for (const auto& [token, positions] : doc.items()) {
        if (!positions.is_array()) malformed(rec.paper_id, "positions of '" + token + "' are not an array");
        std::vector<int64_t>& out = rec.positions[token];
        for (const auto& p : positions) {
            if (!p.is_number_integer()) malformed(rec.paper_id, "non-integer position for '" + token + "'");
            out.push_back(p.get<int64_t>());
        }
        std::sort(out.begin(), out.end());
    }
    return rec;
}

std::string format_abstract_line(const AbstractRecord& rec) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [token, positions] : rec.positions) {
        doc[token] = positions;
    }
    return std::to_string(rec.paper_id) + "\t" + std::to_string(rec.index_length) + "\t" + doc.dump();
}

std::vector<std::string> normalize_tokens(std::string_view text, size_t max_len) {
    static constexpr std::string_view punct = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && tokens.size() < max_len) tokens.push_back(current);
        current.clear();
    };
    for (char raw : text) {
        unsigned char c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            flush();
            if (tokens.size() >= max_len) break;
            continue;
        }
        if (punct.find(raw) != std::string_view::npos) continue;  // removed, not split
        current.push_back(static_cast<char>(std::tolower(c)));
    }
    flush();
    return tokens;
}

std::string VocabIndex::serialize() const {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        out += tokens[i];
        out.push_back('\t');
        out += std::to_string(i + 1);
        out.push_back('\n');
    }
    return out;
}

VocabIndex VocabIndex::deserialize(std::string_view content) {
    VocabIndex vocab;
    for (std::string_view line : split_view(content, '\n')) {
        if (line.empty()) continue;
        auto fields = split_view(line, '\t');
        if (fields.size() != 2) throw_data("vocab: malformed line '" + std::string(line) + "'");
        uint32_t id = 0;
        auto [ptr, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), id);
        if (ec != std::errc() || ptr != fields[1].data() + fields[1].size() || id == 0) {
            throw_data("vocab: bad id on line '" + std::string(line) + "'");
        }
        if (id != vocab.tokens.size() + 1) throw_data("vocab: ids must be consecutive from 1");
        vocab.tokens.emplace_back(fields[0]);
        vocab.token_to_id.emplace(vocab.tokens.back(), id);
    }
    vocab.k = vocab.tokens.size();
    return vocab;
}

void VocabIndex::save(const std::filesystem::path& path) const {
    write_file_atomic(path, serialize());
}

VocabIndex VocabIndex::load(const std::filesystem::path& path) {
    return deserialize(read_file(path));
}

void VocabBuilder::add(const std::vector<std::string>& tokens) {
    for (const std::string& token : tokens) {
        auto [it, inserted] = counts_.try_emplace(token);
        if (inserted) it->second.first_seen = next_position_;
        ++it->second.count;
        ++next_position_;
    }
}

VocabIndex VocabBuilder::finish(size_t k) const {
    if (k < 1) throw_usage("vocab: k must be at least 1");
    std::vector<std::pair<const std::string*, Entry>> ranked;
    ranked.reserve(counts_.size());
    for (const auto& [token, entry] : counts_) ranked.emplace_back(&token, entry);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.count != b.second.count) return a.second.count > b.second.count;
        return a.second.first_seen < b.second.first_seen;
    });
    if (ranked.size() > k) ranked.resize(k);

    VocabIndex vocab;
    vocab.k = k;
    vocab.tokens.reserve(ranked.size());
    for (size_t i = 0; i < ranked.size(); ++i) {
        vocab.tokens.push_back(*ranked[i].first);
        vocab.token_to_id.emplace(vocab.tokens.back(), static_cast<uint32_t>(i + 1));
    }
    return vocab;
}

TokenSeq vectorize(int64_t paper_id, const std::vector<std::string>& tokens,
                   const VocabIndex& vocab, size_t max_len) {
    TokenSeq seq;
    seq.paper_id = paper_id;
    seq.ids.assign(max_len, 0);
    size_t n = std::min(tokens.size(), max_len);
    for (size_t i = 0; i < n; ++i) seq.ids[i] = vocab.id_of(tokens[i]);
    return seq;
}

std::vector<std::pair<uint32_t, double>> bow_features(const std::vector<uint32_t>& ids) {
    std::vector<uint32_t> sorted;
    sorted.reserve(ids.size());
    for (uint32_t id : ids) {
        if (id != 0) sorted.push_back(id - 1);
    }
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::pair<uint32_t, double>> out;
    for (size_t i = 0; i < sorted.size();) {
        size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        out.emplace_back(sorted[i], static_cast<double>(j - i));
        i = j;
    }
    return out;
}

}  // namespace scifield::ingest
