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
#include <cstdint>
#include <string>
#include <vector>

#include "scar/timestamps.hpp"
#include "scar/transport.hpp"
#include "scar/types.hpp"

namespace scar {

// ---------------------------------------------------------------------------
// Transaction programs produced by the workload generators

enum class OpKind : std::uint8_t {
    kRead,    // read a record
    kUpdate,  // read-modify-write
    kWrite,   // blind write
};

struct Op {
    OpKind kind = OpKind::kRead;
    Key key;

    friend bool operator==(const Op&, const Op&) = default;
};

struct TxnProgram {
    std::vector<Op> ops;
    std::string type;  // e.g. "ycsb", "get_timeline", "new_order"

    bool read_only() const {
        return std::all_of(ops.begin(), ops.end(), [](const Op& o) { return o.kind == OpKind::kRead; });
    }
    friend bool operator==(const TxnProgram&, const TxnProgram&) = default;
};

// ---------------------------------------------------------------------------
// Transaction state

/// Factor-analysis switches.
struct ProtocolToggles {
    bool local_read = true;        // LR: read local backup copies
    bool local_validation = true;  // LV: skip validation when rts already covers the commit ts
    bool ts_sync = true;           // TS: push extended rts to backups
    bool plv = true;               // PLV: lock and validate in one round (SI only)

    friend bool operator==(const ProtocolToggles&, const ProtocolToggles&) = default;
};

enum class ReadSource : std::uint8_t { kLocalPrimary, kLocalBackup, kRemotePrimary };

struct RwSetEntry {
    Key key;
    std::string value;
    LogicalTs wts;
    LogicalTs rts;
    bool is_write = false;
    bool lock_held = false;
    bool validated_locally = false;
    bool in_read_set = false;  // write entry whose key was read first
    ReadSource source = ReadSource::kRemotePrimary;
};

enum class TxnOutcome : std::uint8_t { kRunning, kAborted, kCommitted };

struct TxnContext {
    TxnId tid;
    Protocol protocol = Protocol::kScar;
    Isolation isolation = Isolation::kSerializable;
    Epoch epoch = 0;
    std::vector<RwSetEntry> read_set;
    std::vector<RwSetEntry> write_set;
    LogicalTs cts;
    LogicalTs crts;
    TxnOutcome outcome = TxnOutcome::kRunning;
    AbortReason abort_reason = AbortReason::kNone;
    bool serializable_flag = false;
    MessageCounters msgs;
    std::uint32_t validation_rounds = 0;
    SimTime start_time = 0;

    /// (key, wts, new rts) for every rts extension that succeeded.
    std::vector<RwSetEntry> extended;

    RwSetEntry* find_read(const Key& k) {
        for (auto& e : read_set)
            if (e.key == k) return &e;
        return nullptr;
    }
    const RwSetEntry* find_read(const Key& k) const { return const_cast<TxnContext*>(this)->find_read(k); }
    RwSetEntry* find_write(const Key& k) {
        for (auto& e : write_set)
            if (e.key == k) return &e;
        return nullptr;
    }
    bool writes(const Key& k) const {
        return std::any_of(write_set.begin(), write_set.end(), [&](const RwSetEntry& e) { return e.key == k; });
    }

    void abort(AbortReason r) {
        outcome = TxnOutcome::kAborted;
        abort_reason = r;
    }
};

/// Value written by a transaction; unique per (attempt, key) so the oracle can
/// match final states byte for byte.
inline std::string written_value(TxnId tid, const Key& key, std::size_t size) {
    std::string v(size, '\0');
    std::uint64_t x = tid.value * 0x9e3779b97f4a7c15ULL ^ (static_cast<std::uint64_t>(key.partition) << 40) ^ key.row;
    for (std::size_t i = 0; i < size; ++i) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        v[i] = static_cast<char>('A' + (z ^ (z >> 31)) % 26);
    }
    return v;
}

}  // namespace scar
