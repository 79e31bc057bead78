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

// Protocol messages and their binary encoding.
//
// Frame layout (all integers little-endian):
//
//   u32  body length (bytes following this field)
//   u8   kind
//   u16  src
//   u16  dst
//   u32  generation
//   u64  txn
//   u32  token
//   u64  epoch
//   u64  aux
//   u8   flags
//   u16  item count
//   items...
//
// Each item starts with its key (u32 partition, u64 row) followed by the
// fields selected for the message kind, in this order:
//
//   status u8 | item flags u8 | wts u64 | rts u64 | value (u16 length + bytes)
//
//   kind            status flags wts rts value   header aux
//   read_req          -     x    -   -    -
//   read_rep          x     -    x   x    x
//   lock_req          -     x    x   -    -
//   lock_rep          x     -    x   x    -
//   validate_req      -     -    x   -    -       target ts
//   validate_rep      x     -    -   x    -
//   write_req         -     -    -   -    x       cts
//   replicate_req     -     -    -   -    x       cts
//   replicate_ack     (no items)
//   ts_sync           -     -    x   x    -
//   unlock            -     x    -   -    -
//   epoch_barrier     (no items)                  phase
//   barrier_ack       (no items)

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "scar/timestamps.hpp"
#include "scar/types.hpp"

namespace scar {

enum class MsgKind : std::uint8_t {
    kReadReq,
    kReadRep,
    kLockReq,
    kLockRep,
    kValidateReq,
    kValidateRep,
    kWriteReq,
    kReplicateReq,
    kReplicateAck,
    kTsSync,
    kUnlock,
    kEpochBarrier,
    kBarrierAck,
};
inline constexpr std::size_t kMsgKindCount = 13;

inline constexpr std::array<std::string_view, kMsgKindCount> kMsgKindNames = {
    "read_req",  "read_rep",     "lock_req",      "lock_rep", "validate_req", "validate_rep",  "write_req",
    "replicate_req", "replicate_ack", "ts_sync", "unlock",   "epoch_barrier", "barrier_ack"};

inline std::string_view to_string(MsgKind k) { return kMsgKindNames.at(static_cast<std::size_t>(k)); }

// Message-level flags.
namespace msg_flags {
inline constexpr std::uint8_t kKeepLock = 0x01;  // write_req: S2PL keeps the lock until replication is acked
inline constexpr std::uint8_t kOccCheck = 0x02;  // validate_req: version check instead of rts extension
}  // namespace msg_flags

// Item-level flags.
namespace item_flags {
inline constexpr std::uint8_t kHasExpected = 0x01;  // lock_req: wts carries the version read
inline constexpr std::uint8_t kShared = 0x02;       // read_req/unlock: S2PL shared lock
inline constexpr std::uint8_t kExclusive = 0x04;    // read_req/lock_req/unlock: S2PL exclusive lock
inline constexpr std::uint8_t kUpgrade = 0x08;      // lock_req: requester already holds a shared lock
}  // namespace item_flags

// Reply status codes.
namespace status {
inline constexpr std::uint8_t kOk = 0;
inline constexpr std::uint8_t kBusy = 1;
inline constexpr std::uint8_t kStale = 2;
inline constexpr std::uint8_t kBlocked = 3;
inline constexpr std::uint8_t kUnavailable = 4;
}  // namespace status

namespace barrier_phase {
inline constexpr std::uint64_t kDrain = 0;    // stop entering commit, ack once epoch writes are acked
inline constexpr std::uint64_t kAdvance = 1;  // epoch closed, continue in the next one
}  // namespace barrier_phase

struct MsgItem {
    Key key{};
    std::uint8_t status = 0;
    std::uint8_t flags = 0;
    LogicalTs wts{};
    LogicalTs rts{};
    std::string value{};

    friend bool operator==(const MsgItem&, const MsgItem&) = default;
};

struct Msg {
    MsgKind kind = MsgKind::kReadReq;
    NodeId src = 0;
    NodeId dst = 0;
    std::uint32_t generation = 0;
    TxnId txn;
    std::uint32_t token = 0;
    Epoch epoch = 0;
    std::uint64_t aux = 0;
    std::uint8_t flags = 0;
    std::vector<MsgItem> items;

    // Transport metadata, not encoded.
    SimTime send_time = 0;
    SimTime deliver_time = 0;

    /// Equality over the encoded fields only.
    bool same_payload(const Msg& o) const {
        return kind == o.kind && src == o.src && dst == o.dst && generation == o.generation && txn == o.txn &&
               token == o.token && epoch == o.epoch && aux == o.aux && flags == o.flags && items == o.items;
    }
};

namespace wire {

struct ItemLayout {
    bool status, flags, wts, rts, value;
};

inline constexpr ItemLayout layout(MsgKind k) {
    switch (k) {
        case MsgKind::kReadReq: return {false, true, false, false, false};
        case MsgKind::kReadRep: return {true, false, true, true, true};
        case MsgKind::kLockReq: return {false, true, true, false, false};
        case MsgKind::kLockRep: return {true, false, true, true, false};
        case MsgKind::kValidateReq: return {false, false, true, false, false};
        case MsgKind::kValidateRep: return {true, false, false, true, false};
        case MsgKind::kWriteReq: return {false, false, false, false, true};
        case MsgKind::kReplicateReq: return {false, false, false, false, true};
        case MsgKind::kTsSync: return {false, false, true, true, false};
        case MsgKind::kUnlock: return {false, true, false, false, false};
        case MsgKind::kReplicateAck:
        case MsgKind::kEpochBarrier:
        case MsgKind::kBarrierAck: return {false, false, false, false, false};
    }
    return {false, false, false, false, false};
}

inline bool has_items(MsgKind k) {
    return k != MsgKind::kReplicateAck && k != MsgKind::kEpochBarrier && k != MsgKind::kBarrierAck;
}

class Writer {
   public:
    explicit Writer(std::string& out) : out_(out) {}
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void bytes(std::string_view s) { out_.append(s); }

   private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string& out_;
};

class Reader {
   public:
    explicit Reader(std::string_view in) : in_(in) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }

   private:
    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) throw std::runtime_error("truncated message frame");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

/// Appends one length-prefixed frame to `out`.
inline void encode(const Msg& m, std::string& out) {
    std::string body;
    Writer w(body);
    w.u8(static_cast<std::uint8_t>(m.kind));
    w.u16(m.src);
    w.u16(m.dst);
    w.u32(m.generation);
    w.u64(m.txn.value);
    w.u32(m.token);
    w.u64(m.epoch);
    w.u64(m.aux);
    w.u8(m.flags);
    const auto lay = layout(m.kind);
    const std::size_t count = has_items(m.kind) ? m.items.size() : 0;
    if (count > 0xffff) throw std::length_error("too many items in one message");
    w.u16(static_cast<std::uint16_t>(count));
    for (std::size_t i = 0; i < count; ++i) {
        const auto& it = m.items[i];
        w.u32(it.key.partition);
        w.u64(it.key.row);
        if (lay.status) w.u8(it.status);
        if (lay.flags) w.u8(it.flags);
        if (lay.wts) w.u64(it.wts.value);
        if (lay.rts) w.u64(it.rts.value);
        if (lay.value) {
            if (it.value.size() > 0xffff) throw std::length_error("value too large");
            w.u16(static_cast<std::uint16_t>(it.value.size()));
            w.bytes(it.value);
        }
    }
    Writer(out).u32(static_cast<std::uint32_t>(body.size()));
    out += body;
}

inline std::string encode(const Msg& m) {
    std::string out;
    encode(m, out);
    return out;
}

/// Decodes a frame body (without the length prefix).
inline Msg decode_body(std::string_view body) {
    Reader r(body);
    Msg m;
    const auto kind = r.u8();
    if (kind >= kMsgKindCount) throw std::runtime_error("unknown message kind");
    m.kind = static_cast<MsgKind>(kind);
    m.src = r.u16();
    m.dst = r.u16();
    m.generation = r.u32();
    m.txn = TxnId{r.u64()};
    m.token = r.u32();
    m.epoch = r.u64();
    m.aux = r.u64();
    m.flags = r.u8();
    const auto count = r.u16();
    const auto lay = layout(m.kind);
    m.items.resize(count);
    for (auto& it : m.items) {
        it.key.partition = r.u32();
        it.key.row = r.u64();
        if (lay.status) it.status = r.u8();
        if (lay.flags) it.flags = r.u8();
        if (lay.wts) it.wts = LogicalTs{r.u64()};
        if (lay.rts) it.rts = LogicalTs{r.u64()};
        if (lay.value) it.value = r.bytes(r.u16());
    }
    if (!r.done()) throw std::runtime_error("trailing bytes in message frame");
    return m;
}

/// Decodes one complete frame including its length prefix.
inline Msg decode(std::string_view frame) {
    Reader r(frame);
    const auto len = r.u32();
    if (frame.size() != 4 + static_cast<std::size_t>(len)) throw std::runtime_error("frame length mismatch");
    return decode_body(frame.substr(4));
}

/// Pops complete frames off the front of a stream buffer.
inline std::vector<Msg> drain_frames(std::string& buffer) {
    std::vector<Msg> out;
    std::size_t pos = 0;
    while (buffer.size() - pos >= 4) {
        Reader r(std::string_view(buffer).substr(pos, 4));
        const std::size_t len = r.u32();
        if (buffer.size() - pos - 4 < len) break;
        out.push_back(decode_body(std::string_view(buffer).substr(pos + 4, len)));
        pos += 4 + len;
    }
    buffer.erase(0, pos);
    return out;
}

}  // namespace wire
}  // namespace scar
