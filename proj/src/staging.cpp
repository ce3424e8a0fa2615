#include "scifield/staging.hpp"

namespace scifield::ingest {

std::string batch_key(uint64_t batch_index) {
    std::string key(8, '\0');
    for (int i = 0; i < 8; ++i) {
        key[i] = static_cast<char>((batch_index >> (8 * (7 - i))) & 0xffu);
    }
    return key;
}

std::string encode_batch(std::span<const TokenSeq> batch) {
    std::string out;
    put_u64(out, batch.size());
    for (const TokenSeq& seq : batch) {
        put_u64(out, static_cast<uint64_t>(seq.paper_id));
        put_u32(out, static_cast<uint32_t>(seq.ids.size()));
        for (uint32_t id : seq.ids) put_u32(out, id);
    }
    return out;
}

std::vector<TokenSeq> decode_batch(std::string_view bytes) {
    if (bytes.size() < 8) throw_data("batch: truncated header");
    uint64_t count = get_u64(bytes, 0);
    size_t offset = 8;
    std::vector<TokenSeq> out;
    out.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        if (offset + 12 > bytes.size()) throw_data("batch: truncated record");
        TokenSeq seq;
        seq.paper_id = static_cast<int64_t>(get_u64(bytes, offset));
        uint32_t len = get_u32(bytes, offset + 8);
        offset += 12;
        if (offset + 4ull * len > bytes.size()) throw_data("batch: truncated ids");
        seq.ids.resize(len);
        for (uint32_t j = 0; j < len; ++j) seq.ids[j] = get_u32(bytes, offset + 4ull * j);
        offset += 4ull * len;
        out.push_back(std::move(seq));
    }
    return out;
}

size_t stage_batches(std::span<const TokenSeq> seqs, size_t batch_size, KvStore& store) {
    if (batch_size == 0) throw_usage("staging: batch size must be positive");
    size_t batches = 0;
    for (size_t start = 0; start < seqs.size(); start += batch_size, ++batches) {
        size_t n = std::min(batch_size, seqs.size() - start);
        store.put(batch_key(batches), encode_batch(seqs.subspan(start, n)));
    }
    return batches;
}

std::vector<TokenSeq> fetch_batch(const KvStore& store, uint64_t batch_index) {
    std::optional<std::string> value = store.get(batch_key(batch_index));
    if (!value) throw_data("staging: missing batch " + std::to_string(batch_index));
    return decode_batch(*value);
}

size_t batch_count(const KvStore& store) {
    return store.size();
}

}  // namespace scifield::ingest
