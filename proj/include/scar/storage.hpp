/*
 * Copyright 2026 The SCAR Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scar/timestamps.hpp"
#include "scar/types.hpp"

namespace scar {

/// Deterministic load-time value of a record.
inline std::string initial_value(const Key& key, std::size_t size) {
    std::string v(size, '\0');
    std::uint64_t x = (static_cast<std::uint64_t>(key.partition) << 32) ^ key.row ^ 0x9e3779b97f4a7c15ULL;
    for (std::size_t i = 0; i < size; ++i) {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        v[i] = static_cast<char>('a' + x % 26);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Placement

/// Replica list per partition; the first entry is the primary.
class PlacementMap {
   public:
    PlacementMap() = default;

    PlacementMap(std::vector<std::vector<NodeId>> replicas) : replicas_(std::move(replicas)) {
        for (const auto& r : replicas_) {
            if (r.empty()) throw std::invalid_argument("partition without replicas");
            auto sorted = r;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
                throw std::invalid_argument("replicas of a partition must be on distinct nodes");
        }
    }

    /// Partition p gets its primary on node p % nodes and backups on the next
    /// replicas-1 nodes.
    static PlacementMap round_robin(std::size_t partitions, std::size_t nodes, std::size_t replicas) {
        if (replicas == 0 || replicas > nodes)
            throw std::invalid_argument("replica count must be in [1, node count]");
        std::vector<std::vector<NodeId>> out(partitions);
        for (std::size_t p = 0; p < partitions; ++p)
            for (std::size_t i = 0; i < replicas; ++i) out[p].push_back(static_cast<NodeId>((p + i) % nodes));
        return PlacementMap(std::move(out));
    }

    std::size_t partitions() const { return replicas_.size(); }
    NodeId primary(PartitionId p) const { return replicas_.at(p).front(); }
    std::span<const NodeId> replicas(PartitionId p) const { return replicas_.at(p); }
    std::span<const NodeId> backups(PartitionId p) const {
        return std::span<const NodeId>(replicas_.at(p)).subspan(1);
    }
    bool hosts(PartitionId p, NodeId n) const {
        const auto& r = replicas_.at(p);
        return std::find(r.begin(), r.end(), n) != r.end();
    }
    bool is_primary(PartitionId p, NodeId n) const { return primary(p) == n; }

    /// Drops a node from every replica list; the next listed replica takes over
    /// as primary. Returns the partitions whose primary changed.
    std::vector<PartitionId> remove_node(NodeId n) {
        std::vector<PartitionId> promoted;
        for (PartitionId p = 0; p < replicas_.size(); ++p) {
            auto& r = replicas_[p];
            auto it = std::find(r.begin(), r.end(), n);
            if (it == r.end()) continue;
            if (r.size() == 1) throw std::runtime_error("partition " + std::to_string(p) + " lost all replicas");
            if (it == r.begin()) promoted.push_back(p);
            r.erase(it);
        }
        return promoted;
    }

    void add_backup(PartitionId p, NodeId n) {
        auto& r = replicas_.at(p);
        if (std::find(r.begin(), r.end(), n) == r.end()) r.push_back(n);
    }

   private:
    std::vector<std::vector<NodeId>> replicas_;
};

// ---------------------------------------------------------------------------
// Records

enum class Role : std::uint8_t { kPrimary, kBackup };

/// One row. `value`/`meta`/`epoch` are the live version; `shadow_*` hold the
/// newest version from an already closed epoch, used to roll back.
struct Record {
    std::string value;
    TsMeta meta;
    std::uint32_t shared_holders = 0;  // S2PL read locks
    Epoch epoch = 0;                   // epoch of the transaction that wrote the live version

    std::string shadow_value;
    LogicalTs shadow_wts;
    Epoch shadow_epoch = 0;

    mutable SpinLatch latch;

    Record() = default;
    Record(const Record& o) { assign(o); }
    Record& operator=(const Record& o) {
        if (this != &o) assign(o);
        return *this;
    }

   private:
    void assign(const Record& o) {
        value = o.value;
        meta = o.meta;
        shared_holders = o.shared_holders;
        epoch = o.epoch;
        shadow_value = o.shadow_value;
        shadow_wts = o.shadow_wts;
        shadow_epoch = o.shadow_epoch;
    }
};

struct ReadResult {
    std::string value;
    LogicalTs wts;
    LogicalTs rts;
    bool locked = false;
};

enum class LockStatus : std::uint8_t { kAcquired, kBusy, kStale };
struct LockResult {
    LockStatus status = LockStatus::kBusy;
    LogicalTs wts;
    LogicalTs rts;
};

enum class ExtendStatus : std::uint8_t { kExtended, kStale, kBlocked };
struct ExtendResult {
    ExtendStatus status = ExtendStatus::kStale;
    LogicalTs rts;
};

enum class ApplyStatus : std::uint8_t { kApplied, kSkipped };

/// (key, value, wts) of one replica; used for byte-exact state comparisons.
struct RecordDump {
    Key key;
    std::string value;
    LogicalTs wts;

    friend bool operator==(const RecordDump&, const RecordDump&) = default;
};

struct Partition {
    PartitionId id = 0;
    Role role = Role::kBackup;
    bool catching_up = false;  // recovering copy not yet installed
    std::vector<Record> rows;
};

struct StoreConfig {
    std::size_t partitions = 16;
    std::size_t rows_per_partition = 10'000;
    std::size_t value_size = 100;
};

/// All replicas hosted by one node. Every operation takes the record latch, so
/// a store can be shared by several worker threads.
class NodeStore {
   public:
    NodeStore() = default;

    NodeStore(NodeId node, const StoreConfig& cfg, const PlacementMap& placement) : node_(node), cfg_(cfg) {
        parts_.resize(cfg.partitions);
        for (PartitionId p = 0; p < cfg.partitions; ++p) {
            if (!placement.hosts(p, node)) continue;
            load_partition(p, placement.is_primary(p, node) ? Role::kPrimary : Role::kBackup);
        }
    }

    NodeId node() const { return node_; }
    const StoreConfig& config() const { return cfg_; }

    bool hosts(PartitionId p) const { return p < parts_.size() && parts_[p].has_value(); }
    bool readable(PartitionId p) const { return hosts(p) && !parts_[p]->catching_up; }
    Role role(PartitionId p) const { return parts_.at(p).value().role; }
    void set_role(PartitionId p, Role r) { parts_.at(p).value().role = r; }

    /// (Re)creates a partition in its load state.
    void load_partition(PartitionId p, Role role) {
        Partition part;
        part.id = p;
        part.role = role;
        part.rows.resize(cfg_.rows_per_partition);
        for (std::uint64_t r = 0; r < cfg_.rows_per_partition; ++r) {
            auto& rec = part.rows[r];
            rec.value = initial_value(Key{p, r}, cfg_.value_size);
            rec.shadow_value = rec.value;
        }
        parts_[p] = std::move(part);
    }

    void drop_partition(PartitionId p) { parts_.at(p).reset(); }
    void mark_catching_up(PartitionId p, bool v) { parts_.at(p).value().catching_up = v; }

    std::vector<PartitionId> hosted_partitions() const {
        std::vector<PartitionId> out;
        for (PartitionId p = 0; p < parts_.size(); ++p)
            if (parts_[p]) out.push_back(p);
        return out;
    }

    // -- reads -------------------------------------------------------------

    std::optional<ReadResult> local_read(const Key& k) const {
        if (!readable(k.partition)) return std::nullopt;
        const Record& rec = at(k);
        std::lock_guard g(rec.latch);
        return ReadResult{rec.value, rec.meta.wts, rec.meta.rts, rec.meta.locked};
    }

    MetaSnapshot snapshot_meta(const Key& k) const {
        const Record& rec = at(k);
        std::lock_guard g(rec.latch);
        return MetaSnapshot{rec.meta.wts, rec.meta.rts, rec.meta.locked};
    }

    // -- write locks -------------------------------------------------------

    /// NO_WAIT write lock. `expected_wts` is the version the transaction read,
    /// absent for blind writes.
    LockResult try_lock(const Key& k, std::optional<LogicalTs> expected_wts, TxnId txn) {
        Record& rec = at(k);
        std::lock_guard g(rec.latch);
        if ((rec.meta.locked && rec.meta.lock_owner != txn) || rec.shared_holders > 0)
            return {LockStatus::kBusy, rec.meta.wts, rec.meta.rts};
        if (expected_wts && rec.meta.wts != *expected_wts) return {LockStatus::kStale, rec.meta.wts, rec.meta.rts};
        rec.meta.locked = true;
        rec.meta.lock_owner = txn;
        return {LockStatus::kAcquired, rec.meta.wts, rec.meta.rts};
    }

    void unlock(const Key& k, TxnId txn) {
        Record& rec = at(k);
        std::lock_guard g(rec.latch);
        if (rec.meta.locked && rec.meta.lock_owner == txn) {
            rec.meta.locked = false;
            rec.meta.lock_owner = TxnId{};
        }
    }

    // -- S2PL shared/exclusive locks ----------------------------------------

    bool acquire_shared(const Key& k, TxnId txn) {
        Record& rec = at(k);
        std::lock_guard g(rec.latch);
        if (rec.meta.locked && rec.meta.lock_owner != txn) return false;
        ++rec.shared_holders;
        return true;
    }

    /// Exclusive lock; `holds_shared` lets the sole reader upgrade.
    bool acquire_exclusive(const Key& k, TxnId txn, bool holds_shared) {
        Record& rec = at(k);
        std::lock_guard g(rec.latch);
        if (rec.meta.locked) return rec.meta.lock_owner == txn;
        const std::uint32_t others = rec.shared_holders - (holds_shared ? 1u : 0u);
        if (others > 0) return false;
        rec.meta.locked = true;
        rec.meta.lock_owner = txn;
        return true;
    }

    void release_shared(const Key& k) {
        Record& rec = at(k);
        std::lock_guard g(rec.latch);
        if (rec.shared_holders > 0) --rec.shared_holders;
    }

    // -- writes ------------------------------------------------------------

    /// Installs a committed write on the primary; the caller holds the lock.
    void primary_apply(const Key& k, std::string_view value, LogicalTs cts, Epoch epoch, TxnId txn,
                       bool release_lock = true) {
        Record& rec = at(k);
        std::lock_guard g(rec.latch);
        assert(rec.meta.locked && rec.meta.lock_owner == txn);
        (void)txn;
        install(rec, value, cts, epoch);
        if (release_lock) {
            rec.meta.locked = false;
            rec.meta.lock_owner = TxnId{};
        }
    }

    /// Thomas write rule: applied iff cts is newer than the stored version.
    ApplyStatus replica_apply(const Key& k, std::string_view value, LogicalTs cts, Epoch epoch) {
        Record& rec = at(k);
        std::lock_guard g(rec.latch);
        if (cts <= rec.meta.wts) return ApplyStatus::kSkipped;
        install(rec, value, cts, epoch);
        return ApplyStatus::kApplied;
    }

    // -- validation --------------------------------------------------------

    /// Extends rts so that version `expected_wts` stays valid through `target`.
    ExtendResult extend_rts(const Key& k, LogicalTs expected_wts, LogicalTs target, TxnId txn) {
        Record& rec = at(k);
        std::lock_guard g(rec.latch);
        if (rec.meta.wts != expected_wts) return {ExtendStatus::kStale, rec.meta.rts};
        if (rec.meta.rts >= target) return {ExtendStatus::kExtended, rec.meta.rts};
        if (rec.meta.locked && rec.meta.lock_owner != txn) return {ExtendStatus::kBlocked, rec.meta.rts};
        rec.meta.rts = target;
        return {ExtendStatus::kExtended, rec.meta.rts};
    }

    /// Version check used by the OCC baseline: unchanged and not write-locked by
    /// someone else.
    ExtendStatus check_version(const Key& k, LogicalTs expected_wts, TxnId txn) const {
        const Record& rec = at(k);
        std::lock_guard g(rec.latch);
        if (rec.meta.wts != expected_wts) return ExtendStatus::kStale;
        if (rec.meta.locked && rec.meta.lock_owner != txn) return ExtendStatus::kBlocked;
        return ExtendStatus::kExtended;
    }

    /// Timestamp synchronization on a backup: only grows rts of the same version.
    bool update_rts(const Key& k, LogicalTs wts, LogicalTs rts) {
        Record& rec = at(k);
        std::lock_guard g(rec.latch);
        if (rec.meta.wts != wts || rec.meta.rts >= rts) return false;
        rec.meta.rts = rts;
        return true;
    }

    /// Raises rts to at least `rts` regardless of version (used after failover).
    void raise_rts(const Key& k, LogicalTs rts) {
        Record& rec = at(k);
        std::lock_guard g(rec.latch);
        rec.meta.rts = std::max(rec.meta.rts, rts);
    }

    // -- epochs ------------------------------------------------------------

    /// Records that `epoch` closed. Shadows are maintained lazily on the first
    /// write of a newer epoch, so nothing is copied here.
    void close_epoch_snapshot(Epoch epoch) { closed_epoch_ = std::max(closed_epoch_, epoch); }
    Epoch closed_epoch() const { return closed_epoch_; }

    /// Reverts every record written after the last closed epoch. rts is kept.
    void rollback_to_shadow() {
        for (auto& part : parts_) {
            if (!part) continue;
            for (auto& rec : part->rows) {
                std::lock_guard g(rec.latch);
                if (rec.epoch <= closed_epoch_) continue;
                rec.value = rec.shadow_value;
                rec.meta.wts = rec.shadow_wts;
                rec.meta.rts = std::max(rec.meta.rts, rec.shadow_wts);
                rec.epoch = rec.shadow_epoch;
            }
        }
    }

    void clear_locks() {
        for (auto& part : parts_) {
            if (!part) continue;
            for (auto& rec : part->rows) {
                std::lock_guard g(rec.latch);
                rec.meta.locked = false;
                rec.meta.lock_owner = TxnId{};
                rec.shared_holders = 0;
            }
        }
    }

    // -- recovery ----------------------------------------------------------

    /// Copy of a partition, taken at a primary.
    std::vector<Record> copy_partition(PartitionId p) const {
        const auto& rows = parts_.at(p).value().rows;
        std::vector<Record> out(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::lock_guard g(rows[i].latch);
            out[i] = rows[i];
            out[i].meta.locked = false;
            out[i].meta.lock_owner = TxnId{};
            out[i].shared_holders = 0;
        }
        return out;
    }

    /// Merges a copied partition: for every row the newer version (by wts)
    /// wins, as with replicated writes.
    void install_copy(PartitionId p, const std::vector<Record>& copy) {
        auto& rows = parts_.at(p).value().rows;
        for (std::size_t i = 0; i < rows.size() && i < copy.size(); ++i) {
            Record& rec = rows[i];
            const Record& src = copy[i];
            std::lock_guard g(rec.latch);
            if (src.meta.wts > rec.meta.wts) {
                rec.value = src.value;
                rec.meta.wts = src.meta.wts;
                rec.meta.rts = std::max(src.meta.rts, src.meta.wts);
                rec.epoch = src.epoch;
                rec.shadow_value = src.shadow_value;
                rec.shadow_wts = src.shadow_wts;
                rec.shadow_epoch = src.shadow_epoch;
            } else {
                if (src.meta.wts == rec.meta.wts) rec.meta.rts = std::max(rec.meta.rts, src.meta.rts);
                if (rec.epoch > src.epoch) {
                    rec.shadow_value = src.value;
                    rec.shadow_wts = src.meta.wts;
                    rec.shadow_epoch = src.epoch;
                } else if (rec.epoch == src.epoch) {
                    rec.shadow_value = src.shadow_value;
                    rec.shadow_wts = src.shadow_wts;
                    rec.shadow_epoch = src.shadow_epoch;
                }
            }
        }
        parts_.at(p).value().catching_up = false;
    }

    // -- inspection --------------------------------------------------------

    std::vector<RecordDump> dump() const {
        std::vector<RecordDump> out;
        for (const auto& part : parts_) {
            if (!part) continue;
            for (std::uint64_t r = 0; r < part->rows.size(); ++r) {
                const auto& rec = part->rows[r];
                std::lock_guard g(rec.latch);
                out.push_back(RecordDump{Key{part->id, r}, rec.value, rec.meta.wts});
            }
        }
        return out;
    }

    std::vector<RecordDump> dump_partition(PartitionId p) const {
        std::vector<RecordDump> out;
        const auto& rows = parts_.at(p).value().rows;
        for (std::uint64_t r = 0; r < rows.size(); ++r) {
            std::lock_guard g(rows[r].latch);
            out.push_back(RecordDump{Key{p, r}, rows[r].value, rows[r].meta.wts});
        }
        return out;
    }

    const Record& record(const Key& k) const { return at(k); }

    /// Overwrites a record's live state; for tests and scripted scenarios.
    void seed(const Key& k, std::string value, LogicalTs wts, LogicalTs rts) {
        Record& rec = at(k);
        std::lock_guard g(rec.latch);
        rec.value = std::move(value);
        rec.meta.wts = wts;
        rec.meta.rts = rts;
        rec.shadow_value = rec.value;
        rec.shadow_wts = wts;
    }

   private:
    Record& at(const Key& k) { return parts_.at(k.partition).value().rows.at(k.row); }
    const Record& at(const Key& k) const { return parts_.at(k.partition).value().rows.at(k.row); }

    static void install(Record& rec, std::string_view value, LogicalTs cts, Epoch epoch) {
        if (rec.epoch < epoch) {
            rec.shadow_value = rec.value;
            rec.shadow_wts = rec.meta.wts;
            rec.shadow_epoch = rec.epoch;
        }
        rec.value.assign(value);
        rec.meta.wts = cts;
        rec.meta.rts = cts;
        rec.epoch = std::max(rec.epoch, epoch);
    }

    NodeId node_ = 0;
    StoreConfig cfg_;
    std::vector<std::optional<Partition>> parts_;
    Epoch closed_epoch_ = 0;
};

}  // namespace scar
