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

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace scar {

using NodeId = std::uint16_t;
using PartitionId = std::uint32_t;
using Epoch = std::uint64_t;

/// Simulated (or wall-clock, in socket mode) time in nanoseconds.
using SimTime = std::uint64_t;

inline constexpr SimTime kMicrosecond = 1000;
inline constexpr SimTime kMillisecond = 1000 * kMicrosecond;
inline constexpr SimTime kSecond = 1000 * kMillisecond;

/// Endpoint id of the epoch manager. It is not a storage node and never fails.
inline constexpr NodeId kManagerNode = 0xFFFF;

struct Key {
    PartitionId partition = 0;
    std::uint64_t row = 0;

    friend constexpr auto operator<=>(const Key&, const Key&) = default;
};

struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
        std::uint64_t h = (static_cast<std::uint64_t>(k.partition) << 40) ^ k.row;
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdULL;
        h ^= h >> 33;
        return static_cast<std::size_t>(h);
    }
};

/// Unique transaction-attempt id: node (16 bits) | worker (16 bits) | sequence (32 bits).
/// Only used for routing replies and for breaking commit-timestamp ties in the oracle.
struct TxnId {
    std::uint64_t value = 0;

    static constexpr TxnId make(NodeId node, std::uint16_t worker, std::uint32_t seq) {
        return TxnId{(static_cast<std::uint64_t>(node) << 48) |
                     (static_cast<std::uint64_t>(worker) << 32) | seq};
    }
    constexpr NodeId node() const { return static_cast<NodeId>(value >> 48); }
    constexpr std::uint16_t worker() const { return static_cast<std::uint16_t>(value >> 32); }
    constexpr std::uint32_t seq() const { return static_cast<std::uint32_t>(value); }
    constexpr bool valid() const { return value != 0; }

    friend constexpr auto operator<=>(const TxnId&, const TxnId&) = default;
};

enum class Isolation : std::uint8_t { kSerializable, kSnapshot };

enum class Protocol : std::uint8_t { kScar, kS2pl, kOcc, kRc };

enum class AbortReason : std::uint8_t {
    kNone,
    kBusy,         // write lock held by another transaction (NO_WAIT)
    kStale,        // record changed since it was read
    kBlocked,      // rts extension blocked by another transaction's lock
    kNodeFailure,  // failure observed, or rolled back by epoch recovery
};
inline constexpr std::size_t kAbortReasonCount = 5;

inline std::string_view to_string(Isolation iso) {
    return iso == Isolation::kSerializable ? "SR" : "SI";
}

inline std::string_view to_string(Protocol p) {
    switch (p) {
        case Protocol::kScar: return "scar";
        case Protocol::kS2pl: return "s2pl";
        case Protocol::kOcc: return "occ";
        case Protocol::kRc: return "rc";
    }
    return "?";
}

inline std::string_view to_string(AbortReason r) {
    switch (r) {
        case AbortReason::kNone: return "none";
        case AbortReason::kBusy: return "busy";
        case AbortReason::kStale: return "stale";
        case AbortReason::kBlocked: return "blocked";
        case AbortReason::kNodeFailure: return "node_failure";
    }
    return "?";
}

inline Protocol parse_protocol(std::string_view s) {
    if (s == "scar") return Protocol::kScar;
    if (s == "s2pl") return Protocol::kS2pl;
    if (s == "occ") return Protocol::kOcc;
    if (s == "rc") return Protocol::kRc;
    throw std::invalid_argument("unknown protocol: " + std::string(s));
}

inline Isolation parse_isolation(std::string_view s) {
    if (s == "SR" || s == "sr" || s == "serializable") return Isolation::kSerializable;
    if (s == "SI" || s == "si" || s == "snapshot") return Isolation::kSnapshot;
    throw std::invalid_argument("unknown isolation level: " + std::string(s));
}

inline std::string to_string(const Key& k) {
    return std::to_string(k.partition) + ":" + std::to_string(k.row);
}

}  // namespace scar
