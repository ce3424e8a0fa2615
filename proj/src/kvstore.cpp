#include "scifield/kvstore.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cstring>

#include "scifield/common.hpp"

namespace scifield {

namespace {

constexpr uint64_t kMagic = 0x31524f5453564b53ull;  // "SKVSTOR1"
constexpr uint64_t kMetaSize = 64;
constexpr uint64_t kPayloadStart = 2 * kMetaSize;

struct Meta {
    uint64_t txid = 0;
    uint64_t index_off = 0;
    uint64_t index_count = 0;
    uint64_t file_size = 0;
};

std::string encode_meta(const Meta& m) {
    std::string buf;
    buf.reserve(kMetaSize);
    put_u64(buf, kMagic);
    put_u64(buf, m.txid);
    put_u64(buf, m.index_off);
    put_u64(buf, m.index_count);
    put_u64(buf, m.file_size);
    put_u64(buf, 0);
    put_u64(buf, 0);
    put_u32(buf, crc32(std::string_view(buf.data(), 56)));
    put_u32(buf, 0);
    return buf;
}

std::optional<Meta> decode_meta(std::string_view buf) {
    if (buf.size() < kMetaSize) return std::nullopt;
    if (get_u64(buf, 0) != kMagic) return std::nullopt;
    if (get_u32(buf, 56) != crc32(buf.substr(0, 56))) return std::nullopt;
    Meta m;
    m.txid = get_u64(buf, 8);
    m.index_off = get_u64(buf, 16);
    m.index_count = get_u64(buf, 24);
    m.file_size = get_u64(buf, 32);
    return m;
}

void pwrite_all(int fd, std::string_view bytes, uint64_t offset, const std::string& what) {
    size_t done = 0;
    while (done < bytes.size()) {
        ssize_t n = ::pwrite(fd, bytes.data() + done, bytes.size() - done,
                             static_cast<off_t>(offset + done));
        if (n < 0) throw_internal("store: write failed (" + what + "): " + std::strerror(errno));
        done += static_cast<size_t>(n);
    }
}

}  // namespace

KvStore::KvStore(KvStore&& other) noexcept {
    dir_ = std::move(other.dir_);
    fd_ = other.fd_;
    lock_fd_ = other.lock_fd_;
    writable_ = other.writable_;
    txid_ = other.txid_;
    committed_size_ = other.committed_size_;
    map_ = other.map_;
    map_size_ = other.map_size_;
    committed_ = std::move(other.committed_);
    staged_ = std::move(other.staged_);
    other.fd_ = -1;
    other.lock_fd_ = -1;
    other.map_ = nullptr;
    other.map_size_ = 0;
}

KvStore::~KvStore() {
    if (map_) ::munmap(map_, map_size_);
    if (fd_ >= 0) ::close(fd_);
    if (lock_fd_ >= 0) ::close(lock_fd_);  // closing releases the flock
}

KvStore KvStore::open_writer(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    KvStore store;
    store.dir_ = dir;
    store.writable_ = true;

    std::filesystem::path lock_path = dir / "write.lock";
    store.lock_fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
    if (store.lock_fd_ < 0) throw_internal("store: cannot open " + lock_path.string());
    if (::flock(store.lock_fd_, LOCK_EX | LOCK_NB) != 0) {
        throw_data("store: another writer holds " + lock_path.string());
    }

    std::filesystem::path data = dir / "store.skv";
    bool fresh = !std::filesystem::exists(data);
    store.fd_ = ::open(data.c_str(), O_CREAT | O_RDWR, 0644);
    if (store.fd_ < 0) throw_internal("store: cannot open " + data.string());

    if (fresh) {
        // txid 1 lands in slot 1, so the first real commit (txid 2, slot 0)
        // never overwrites the only valid slot.
        Meta init;
        init.txid = 1;
        init.index_off = kPayloadStart;
        init.index_count = 0;
        init.file_size = kPayloadStart;
        std::string empty(kMetaSize, '\0');
        pwrite_all(store.fd_, empty, 0, "init meta");
        pwrite_all(store.fd_, encode_meta(init), kMetaSize, "init meta");
        ::fsync(store.fd_);
    }
    store.load_committed();
    return store;
}

KvStore KvStore::open_reader(const std::filesystem::path& dir) {
    KvStore store;
    store.dir_ = dir;
    store.writable_ = false;
    std::filesystem::path data = dir / "store.skv";
    store.fd_ = ::open(data.c_str(), O_RDONLY);
    if (store.fd_ < 0) throw_data("store: cannot open " + data.string());
    store.load_committed();
    return store;
}

void KvStore::load_committed() {
    char buf[2 * kMetaSize];
    ssize_t n = ::pread(fd_, buf, sizeof(buf), 0);
    if (n < static_cast<ssize_t>(2 * kMetaSize)) throw_data("store: truncated meta in " + dir_.string());

    std::optional<Meta> a = decode_meta(std::string_view(buf, kMetaSize));
    std::optional<Meta> b = decode_meta(std::string_view(buf + kMetaSize, kMetaSize));
    std::optional<Meta> best;
    if (a && (!best || a->txid > best->txid)) best = a;
    if (b && (!best || b->txid > best->txid)) best = b;
    if (!best) throw_data("store: no valid meta slot in " + dir_.string());

    txid_ = best->txid;
    committed_size_ = best->file_size;
    remap(committed_size_);

    committed_.clear();
    for (uint64_t i = 0; i < best->index_count; ++i) {
        uint64_t rec_off = get_u64(mapped(best->index_off + 8 * i, 8), 0);
        std::string_view header = mapped(rec_off, 8);
        Slot slot;
        slot.offset = rec_off;
        slot.key_len = get_u32(header, 0);
        slot.val_len = get_u32(header, 4);
        std::string_view key = mapped(rec_off + 8, slot.key_len);
        committed_.emplace(std::string(key), slot);
    }
}

void KvStore::remap(uint64_t size) {
    if (map_) {
        ::munmap(map_, map_size_);
        map_ = nullptr;
        map_size_ = 0;
    }
    if (size == 0) return;
    void* p = ::mmap(nullptr, size, PROT_READ, MAP_SHARED, fd_, 0);
    if (p == MAP_FAILED) throw_internal("store: mmap failed: " + std::string(std::strerror(errno)));
    map_ = p;
    map_size_ = size;
}

std::string_view KvStore::mapped(uint64_t offset, uint64_t length) const {
    if (offset + length > map_size_) throw_data("store: offset past committed extent in " + dir_.string());
    return std::string_view(static_cast<const char*>(map_) + offset, length);
}

void KvStore::put(std::string_view key, std::string_view value) {
    if (!writable_) throw_usage("store: put on a read-only handle");
    staged_[std::string(key)] = std::string(value);
}

void KvStore::commit() {
    if (!writable_) throw_usage("store: commit on a read-only handle");
    if (staged_.empty()) return;

    // Append the new records, then a full sorted index over old + new keys.
    std::string payload;
    std::map<std::string, Slot> next = committed_;
    uint64_t cursor = committed_size_;
    for (const auto& [key, value] : staged_) {
        Slot slot;
        slot.offset = cursor;
        slot.key_len = static_cast<uint32_t>(key.size());
        slot.val_len = static_cast<uint32_t>(value.size());
        put_u32(payload, slot.key_len);
        put_u32(payload, slot.val_len);
        payload += key;
        payload += value;
        cursor += 8 + key.size() + value.size();
        next[key] = slot;
    }
    uint64_t index_off = cursor;
    for (const auto& [key, slot] : next) {  // std::map iterates in byte order
        put_u64(payload, slot.offset);
        cursor += 8;
    }

    pwrite_all(fd_, payload, committed_size_, "payload");
    if (::fsync(fd_) != 0) throw_internal("store: fsync failed");

    Meta meta;
    meta.txid = txid_ + 1;
    meta.index_off = index_off;
    meta.index_count = next.size();
    meta.file_size = cursor;
    pwrite_all(fd_, encode_meta(meta), (meta.txid % 2) * kMetaSize, "meta");
    if (::fsync(fd_) != 0) throw_internal("store: fsync failed");

    txid_ = meta.txid;
    committed_size_ = cursor;
    committed_ = std::move(next);
    staged_.clear();
    remap(committed_size_);
}

std::optional<std::string> KvStore::get(std::string_view key) const {
    auto staged = staged_.find(std::string(key));
    if (staged != staged_.end()) return staged->second;
    auto it = committed_.find(std::string(key));
    if (it == committed_.end()) return std::nullopt;
    const Slot& slot = it->second;
    return std::string(mapped(slot.offset + 8 + slot.key_len, slot.val_len));
}

std::vector<std::string> KvStore::keys() const {
    std::vector<std::string> out;
    auto c = committed_.begin();
    auto s = staged_.begin();
    while (c != committed_.end() || s != staged_.end()) {
        if (s == staged_.end() || (c != committed_.end() && c->first < s->first)) {
            out.push_back(c->first);
            ++c;
        } else {
            if (c != committed_.end() && c->first == s->first) ++c;
            out.push_back(s->first);
            ++s;
        }
    }
    return out;
}

size_t KvStore::size() const {
    size_t n = committed_.size();
    for (const auto& [key, value] : staged_) {
        if (!committed_.count(key)) ++n;
    }
    return n;
}

}  // namespace scifield
