#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scifield/ingest.hpp"
#include "scifield/kvstore.hpp"

namespace scifield::ingest {

/// Batch keys are the batch index as 8 bytes big-endian, so byte order on
/// keys equals numeric order on batch indices.
std::string batch_key(uint64_t batch_index);

std::string encode_batch(std::span<const TokenSeq> batch);
std::vector<TokenSeq> decode_batch(std::string_view bytes);

/// Chunks the sequences in order into batches of batch_size and stages them
/// under consecutive batch indices. Returns the number of batches written.
/// Call store.commit() to publish.
size_t stage_batches(std::span<const TokenSeq> seqs, size_t batch_size, KvStore& store);

/// Missing batch index is a data error.
std::vector<TokenSeq> fetch_batch(const KvStore& store, uint64_t batch_index);

size_t batch_count(const KvStore& store);

}  // namespace scifield::ingest
