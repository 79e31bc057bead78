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

// Offline correctness checks over committed transaction histories.
//
// A history lists every committed transaction with the versions it observed
// (key, wts) and the values it wrote, plus the final state of every primary
// record that was ever written. Versions are identified by wts: on a primary
// wts only grows, so (key, wts) names exactly one committed write.

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "scar/storage.hpp"
#include "scar/timestamps.hpp"
#include "scar/types.hpp"

namespace scar {

enum class HistoryLevel : std::uint8_t { kSerializable, kSnapshot, kReadCommitted };

inline std::string_view to_string(HistoryLevel l) {
    switch (l) {
        case HistoryLevel::kSerializable: return "SR";
        case HistoryLevel::kSnapshot: return "SI";
        case HistoryLevel::kReadCommitted: return "RC";
    }
    return "?";
}

struct ObservedRead {
    Key key;
    LogicalTs wts;
    friend bool operator==(const ObservedRead&, const ObservedRead&) = default;
};

struct RecordedWrite {
    Key key;
    std::string value;
    friend bool operator==(const RecordedWrite&, const RecordedWrite&) = default;
};

struct HistoryRecord {
    TxnId tid;
    HistoryLevel level = HistoryLevel::kSerializable;
    Epoch epoch = 0;
    LogicalTs cts;
    LogicalTs crts;
    bool serializable_flag = true;
    /// Order of commit decisions. Breaks cts ties: a reader may share its
    /// writer's cts but always decides after it.
    std::uint64_t seq = 0;
    std::vector<ObservedRead> reads;
    std::vector<RecordedWrite> writes;

    friend bool operator==(const HistoryRecord&, const HistoryRecord&) = default;
};

struct FinalRecord {
    std::string value;
    LogicalTs wts;
    friend bool operator==(const FinalRecord&, const FinalRecord&) = default;
};

struct History {
    std::vector<HistoryRecord> txns;
    /// Final primary state of every record with wts > 0. Empty when not captured.
    std::map<Key, FinalRecord> final_state;
    bool has_final_state = false;

    friend bool operator==(const History&, const History&) = default;
};

struct CheckResult {
    bool pass = true;
    std::string details;
    std::optional<TxnId> txn;
    std::optional<Key> key;

    explicit operator bool() const { return pass; }
    static CheckResult ok() { return {}; }
    static CheckResult violation(std::string d, std::optional<TxnId> t = std::nullopt, std::optional<Key> k = std::nullopt) {
        return CheckResult{false, std::move(d), t, k};
    }
};

// ---------------------------------------------------------------------------
// History file

namespace history_io {

inline std::string hex(std::string_view s) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(s.size() * 2);
    for (unsigned char c : s) {
        out.push_back(kDigits[c >> 4]);
        out.push_back(kDigits[c & 15]);
    }
    return out;
}

inline std::string unhex(std::string_view s) {
    if (s.size() % 2) throw std::invalid_argument("odd-length hex string");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        throw std::invalid_argument("bad hex digit");
    };
    std::string out(s.size() / 2, '\0');
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<char>(nib(s[2 * i]) * 16 + nib(s[2 * i + 1]));
    return out;
}

inline Key parse_key(std::string_view s) {
    auto colon = s.find(':');
    if (colon == std::string_view::npos) throw std::invalid_argument("bad key: " + std::string(s));
    return Key{static_cast<PartitionId>(std::stoul(std::string(s.substr(0, colon)))),
               std::stoull(std::string(s.substr(colon + 1)))};
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace history_io

/// One line per record:
///   txn tid=<n> level=SR|SI|RC epoch=<n> cts=<n> crts=<n> flag=0|1 seq=<n> reads=<p:r@wts,...> writes=<p:r=hex,...>
///   state key=<p:r> wts=<n> value=<hex>
inline void write_history(std::ostream& os, const History& h) {
    os << "# scar history v1\n";
    for (const auto& t : h.txns) {
        os << "txn tid=" << t.tid.value << " level=" << to_string(t.level) << " epoch=" << t.epoch
           << " cts=" << t.cts.value << " crts=" << t.crts.value << " flag=" << (t.serializable_flag ? 1 : 0)
           << " seq=" << t.seq << " reads=";
        for (std::size_t i = 0; i < t.reads.size(); ++i)
            os << (i ? "," : "") << to_string(t.reads[i].key) << "@" << t.reads[i].wts.value;
        os << " writes=";
        for (std::size_t i = 0; i < t.writes.size(); ++i)
            os << (i ? "," : "") << to_string(t.writes[i].key) << "=" << history_io::hex(t.writes[i].value);
        os << "\n";
    }
    if (h.has_final_state) {
        os << "final\n";
        for (const auto& [k, rec] : h.final_state)
            os << "state key=" << to_string(k) << " wts=" << rec.wts.value << " value=" << history_io::hex(rec.value)
               << "\n";
    }
}

inline History read_history(std::istream& is) {
    using namespace history_io;
    History h;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        std::map<std::string, std::string> fields;
        std::string tok;
        while (ls >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("history line " + std::to_string(lineno) + ": bad field");
            fields[tok.substr(0, eq)] = tok.substr(eq + 1);
        }
        try {
            if (tag == "txn") {
                HistoryRecord t;
                t.tid = TxnId{std::stoull(fields.at("tid"))};
                const auto& lvl = fields.at("level");
                t.level = lvl == "SR" ? HistoryLevel::kSerializable
                        : lvl == "SI" ? HistoryLevel::kSnapshot
                        : lvl == "RC" ? HistoryLevel::kReadCommitted
                                      : throw std::invalid_argument("bad level");
                t.epoch = std::stoull(fields.at("epoch"));
                t.cts = LogicalTs{std::stoull(fields.at("cts"))};
                t.crts = LogicalTs{std::stoull(fields.at("crts"))};
                t.serializable_flag = fields.at("flag") == "1";
                if (auto it = fields.find("seq"); it != fields.end()) t.seq = std::stoull(it->second);
                for (auto r : split(fields["reads"], ',')) {
                    auto at = r.find('@');
                    t.reads.push_back({parse_key(r.substr(0, at)), LogicalTs{std::stoull(std::string(r.substr(at + 1)))}});
                }
                for (auto w : split(fields["writes"], ',')) {
                    auto eq = w.find('=');
                    t.writes.push_back({parse_key(w.substr(0, eq)), unhex(w.substr(eq + 1))});
                }
                h.txns.push_back(std::move(t));
            } else if (tag == "final") {
                h.has_final_state = true;
            } else if (tag == "state") {
                h.has_final_state = true;
                h.final_state[parse_key(fields.at("key"))] =
                    FinalRecord{unhex(fields.at("value")), LogicalTs{std::stoull(fields.at("wts"))}};
            } else {
                throw std::invalid_argument("unknown record tag '" + tag + "'");
            }
        } catch (const std::out_of_range&) {
            throw std::invalid_argument("history line " + std::to_string(lineno) + ": missing field");
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Checks

enum class ReadScope : std::uint8_t {
    kAll,               // verify the reads of every committed transaction
    kSerializableOnly,  // only SR transactions and SI transactions flagged serializable
};

namespace detail {

inline bool in_scope(const HistoryRecord& t, ReadScope scope) {
    if (scope == ReadScope::kAll) return true;
    return t.level == HistoryLevel::kSerializable || (t.level == HistoryLevel::kSnapshot && t.serializable_flag);
}

struct ReplayState {
    std::unordered_map<Key, FinalRecord, KeyHash> store;

    LogicalTs wts(const Key& k) const {
        auto it = store.find(k);
        return it == store.end() ? LogicalTs{0} : it->second.wts;
    }
};

inline CheckResult compare_final(const ReplayState& replay, const History& h) {
    if (!h.has_final_state) return CheckResult::ok();
    for (const auto& [k, rec] : replay.store) {
        auto it = h.final_state.find(k);
        if (it == h.final_state.end())
            return CheckResult::violation("final state lacks written key " + to_string(k), std::nullopt, k);
        if (!(it->second == rec))
            return CheckResult::violation("final state of " + to_string(k) + " differs from replay (system wts=" +
                                              std::to_string(it->second.wts.value) +
                                              ", replay wts=" + std::to_string(rec.wts.value) + ")",
                                          std::nullopt, k);
    }
    for (const auto& [k, rec] : h.final_state)
        if (!replay.store.contains(k))
            return CheckResult::violation("key " + to_string(k) + " written by no committed transaction", std::nullopt, k);
    return CheckResult::ok();
}

inline std::vector<std::size_t> commit_order(const History& h) {
    std::vector<std::size_t> order(h.txns.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = h.txns[a];
        const auto& y = h.txns[b];
        if (x.cts != y.cts) return x.cts < y.cts;
        if (x.seq != y.seq) return x.seq < y.seq;
        return x.tid < y.tid;
    });
    return order;
}

}  // namespace detail

/// Replays committed transactions serially in (cts, seq, tid) order against a fresh
/// store. Every in-scope read must observe the version current at that point,
/// and the replayed store must equal the system's final primary state.
inline CheckResult check_serializable(const History& h, ReadScope scope = ReadScope::kAll) {
    detail::ReplayState replay;
    for (std::size_t idx : detail::commit_order(h)) {
        const auto& t = h.txns[idx];
        if (detail::in_scope(t, scope)) {
            for (const auto& r : t.reads) {
                const auto expect = replay.wts(r.key);
                if (expect != r.wts)
                    return CheckResult::violation("txn " + std::to_string(t.tid.value) + " at cts " +
                                                      std::to_string(t.cts.value) + " observed " + to_string(r.key) +
                                                      "@" + std::to_string(r.wts.value) + " but serial replay has @" +
                                                      std::to_string(expect.value),
                                                  t.tid, r.key);
            }
        }
        for (const auto& w : t.writes) replay.store[w.key] = FinalRecord{w.value, t.cts};
    }
    return detail::compare_final(replay, h);
}

/// Snapshot isolation: each SI transaction read the versions current at its
/// crts, and nobody else wrote its write set in (crts, cts].
inline CheckResult check_si(const History& h) {
    std::unordered_map<Key, std::vector<std::pair<LogicalTs, TxnId>>, KeyHash> writes;
    for (const auto& t : h.txns)
        for (const auto& w : t.writes) writes[w.key].emplace_back(t.cts, t.tid);
    for (auto& [k, v] : writes) std::sort(v.begin(), v.end());

    for (const auto& t : h.txns) {
        if (t.level != HistoryLevel::kSnapshot) continue;
        if (t.crts > t.cts)
            return CheckResult::violation("txn " + std::to_string(t.tid.value) + " has crts > cts", t.tid);
        for (const auto& r : t.reads) {
            LogicalTs latest{0};
            if (auto it = writes.find(r.key); it != writes.end())
                for (const auto& [cts, writer] : it->second) {
                    if (cts > t.crts) break;
                    if (writer != t.tid) latest = cts;
                }
            if (latest != r.wts)
                return CheckResult::violation("txn " + std::to_string(t.tid.value) + " read " + to_string(r.key) + "@" +
                                                  std::to_string(r.wts.value) + " but snapshot at crts " +
                                                  std::to_string(t.crts.value) + " holds @" +
                                                  std::to_string(latest.value),
                                              t.tid, r.key);
        }
        for (const auto& w : t.writes) {
            for (const auto& [cts, writer] : writes[w.key]) {
                if (writer == t.tid) continue;
                if (cts > t.crts && cts <= t.cts)
                    return CheckResult::violation("txn " + std::to_string(t.tid.value) + " write to " +
                                                      to_string(w.key) + " conflicts with concurrent write at " +
                                                      std::to_string(cts.value),
                                                  t.tid, w.key);
            }
        }
    }
    if (h.has_final_state) {
        detail::ReplayState replay;
        for (std::size_t idx : detail::commit_order(h))
            for (const auto& w : h.txns[idx].writes) replay.store[w.key] = FinalRecord{w.value, h.txns[idx].cts};
        return detail::compare_final(replay, h);
    }
    return CheckResult::ok();
}

/// Read committed: every observed version is the load state or some committed write.
inline CheckResult check_read_committed(const History& h) {
    std::unordered_map<Key, std::vector<LogicalTs>, KeyHash> versions;
    for (const auto& t : h.txns)
        for (const auto& w : t.writes) versions[w.key].push_back(t.cts);
    for (const auto& t : h.txns)
        for (const auto& r : t.reads) {
            if (r.wts == LogicalTs{0}) continue;
            const auto& v = versions[r.key];
            if (std::find(v.begin(), v.end(), r.wts) == v.end())
                return CheckResult::violation("txn " + std::to_string(t.tid.value) + " read uncommitted version " +
                                                  to_string(r.key) + "@" + std::to_string(r.wts.value),
                                              t.tid, r.key);
        }
    return CheckResult::ok();
}

struct BruteForceResult {
    bool pass = false;
    std::size_t witnesses = 0;
    std::vector<TxnId> first_witness;
};

inline constexpr std::size_t kBruteForceLimit = 8;

/// Tries every serial order of a tiny history. An order is a witness when every
/// read observes the preceding write and the final state matches.
inline BruteForceResult brute_force_equivalent(const History& h) {
    if (h.txns.size() > kBruteForceLimit) throw std::invalid_argument("brute force limited to 8 transactions");
    std::vector<std::size_t> perm(h.txns.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    BruteForceResult out;
    do {
        detail::ReplayState replay;
        bool ok = true;
        for (std::size_t idx : perm) {
            const auto& t = h.txns[idx];
            for (const auto& r : t.reads)
                if (replay.wts(r.key) != r.wts) {
                    ok = false;
                    break;
                }
            if (!ok) break;
            for (const auto& w : t.writes) replay.store[w.key] = FinalRecord{w.value, t.cts};
        }
        if (ok && detail::compare_final(replay, h)) {
            if (out.witnesses++ == 0)
                for (std::size_t idx : perm) out.first_witness.push_back(h.txns[idx].tid);
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    out.pass = out.witnesses > 0;
    return out;
}

}  // namespace scar
