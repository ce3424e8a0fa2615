#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scifield {

/// Embedded ordered key-value store backing the per-discipline staging
/// areas. Contract: ordered byte keys, memory-mapped reads, many concurrent
/// readers alongside a single writer, and crash-consistent commits.
///
/// Single file `store.skv` per instance:
///
///   [meta slot 0][meta slot 1][records... index blocks...]
///
/// Writers append records and a fresh sorted index, fsync, then flip to the
/// other meta slot (txid, index offset, committed size, crc32) and fsync
/// again. A torn write leaves the previous slot intact, so readers always
/// observe a complete committed state. Committed bytes are never modified,
/// which is what makes lock-free concurrent readers safe.
class KvStore {
public:
    KvStore(const KvStore&) = delete;
    KvStore& operator=(const KvStore&) = delete;
    KvStore(KvStore&& other) noexcept;
    KvStore& operator=(KvStore&&) = delete;
    ~KvStore();

    /// Opens (creating if needed) for writing; takes the instance's writer
    /// lock and fails if another writer holds it.
    static KvStore open_writer(const std::filesystem::path& dir);
    static KvStore open_reader(const std::filesystem::path& dir);

    /// Stages a pair; visible to get() on this handle immediately, to other
    /// handles only after commit(). Re-putting a key replaces its value.
    void put(std::string_view key, std::string_view value);
    void commit();

    std::optional<std::string> get(std::string_view key) const;
    bool contains(std::string_view key) const { return get(key).has_value(); }

    /// All committed + staged keys in byte order.
    std::vector<std::string> keys() const;
    size_t size() const;

private:
    KvStore() = default;

    void load_committed();
    void remap(uint64_t size);
    std::string_view mapped(uint64_t offset, uint64_t length) const;

    std::filesystem::path dir_;
    int fd_ = -1;
    int lock_fd_ = -1;
    bool writable_ = false;

    uint64_t txid_ = 0;
    uint64_t committed_size_ = 0;
    void* map_ = nullptr;
    size_t map_size_ = 0;

    struct Slot {
        uint64_t offset = 0;  // record offset in file
        uint32_t key_len = 0;
        uint32_t val_len = 0;
    };
    std::map<std::string, Slot> committed_;
    std::map<std::string, std::string> staged_;
};

}  // namespace scifield
