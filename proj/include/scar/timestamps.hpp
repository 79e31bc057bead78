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
#include <atomic>
#include <compare>
#include <cstdint>
#include <ostream>
#include <ranges>
#include <thread>

#include "scar/types.hpp"

namespace scar {

/// A 64-bit logical time. Records start at 0.
struct LogicalTs {
    std::uint64_t value = 0;

    constexpr LogicalTs next() const { return LogicalTs{value + 1}; }

    friend constexpr auto operator<=>(const LogicalTs&, const LogicalTs&) = default;
    friend std::ostream& operator<<(std::ostream& os, LogicalTs ts) { return os << ts.value; }
};

/// Per-record timestamp pair plus lock word. A version is readable at any
/// logical time in [wts, rts].
struct TsMeta {
    LogicalTs wts;
    LogicalTs rts;
    bool locked = false;
    TxnId lock_owner;

    friend constexpr bool operator==(const TsMeta&, const TsMeta&) = default;
};

/// What a reader observes about a record's metadata in one consistent snapshot.
struct MetaSnapshot {
    LogicalTs wts;
    LogicalTs rts;
    bool locked = false;

    friend constexpr bool operator==(const MetaSnapshot&, const MetaSnapshot&) = default;
};

/// Commit timestamps of a transaction. Under serializability crts == cts.
struct CommitStamp {
    LogicalTs cts;
    LogicalTs crts;
};

/// Test-and-test-and-set latch. Guards a record's value and metadata so that
/// readers never observe a torn (value, wts, rts, locked) tuple.
class SpinLatch {
   public:
    void lock() noexcept {
        for (;;) {
            if (!flag_.exchange(true, std::memory_order_acquire)) return;
            while (flag_.load(std::memory_order_relaxed)) std::this_thread::yield();
        }
    }
    void unlock() noexcept { flag_.store(false, std::memory_order_release); }

   private:
    std::atomic<bool> flag_{false};
};

// Anything with `wts` and `rts` members of type LogicalTs can take part in
// commit timestamp computation (read/write set entries, test fixtures).
template <typename E>
concept TimestampedEntry = requires(const E& e) {
    { e.wts } -> std::convertible_to<LogicalTs>;
    { e.rts } -> std::convertible_to<LogicalTs>;
};

/// Smallest ts with ts >= every read wts and ts > every write rts.
/// Write entries must carry the rts refreshed when the lock was taken.
template <std::ranges::input_range R, std::ranges::input_range W>
    requires TimestampedEntry<std::ranges::range_value_t<R>> &&
             TimestampedEntry<std::ranges::range_value_t<W>>
constexpr LogicalTs compute_cts(const R& read_set, const W& write_set) {
    LogicalTs cts{0};
    for (const auto& e : read_set) cts = std::max(cts, LogicalTs(e.wts));
    for (const auto& e : write_set) cts = std::max(cts, LogicalTs(e.rts).next());
    return cts;
}

/// Snapshot time of an SI transaction: the largest wts in its read set.
template <std::ranges::input_range R>
    requires TimestampedEntry<std::ranges::range_value_t<R>>
constexpr LogicalTs compute_crts(const R& read_set) {
    LogicalTs crts{0};
    for (const auto& e : read_set) crts = std::max(crts, LogicalTs(e.wts));
    return crts;
}

}  // namespace scar
