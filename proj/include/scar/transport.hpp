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
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "scar/types.hpp"
#include "scar/wire.hpp"

namespace scar {

// ---------------------------------------------------------------------------
// Latency profiles

/// One-way latency between every pair of nodes, plus uniform jitter expressed
/// as a fraction of the base latency.
class LatencyProfile {
   public:
    LatencyProfile() = default;

    LatencyProfile(std::vector<std::vector<SimTime>> one_way, double jitter = 0.0)
        : matrix_(std::move(one_way)), jitter_(jitter) {
        for (const auto& row : matrix_)
            if (row.size() != matrix_.size()) throw std::invalid_argument("latency matrix must be square");
        if (jitter_ < 0.0) throw std::invalid_argument("jitter must be non-negative");
    }

    /// Same latency between every pair of distinct nodes.
    static LatencyProfile uniform(std::size_t nodes, SimTime one_way, double jitter = 0.0) {
        std::vector<std::vector<SimTime>> m(nodes, std::vector<SimTime>(nodes, one_way));
        for (std::size_t i = 0; i < nodes; ++i) m[i][i] = 0;
        return LatencyProfile(std::move(m), jitter);
    }

    /// Local-area default: 0.1 ms one way.
    static LatencyProfile lan(std::size_t nodes, double jitter = 0.2) {
        return uniform(nodes, 100 * kMicrosecond, jitter);
    }

    /// Plain text matrix in milliseconds, one row per node; '#' starts a comment.
    static LatencyProfile parse(std::istream& in, double jitter = 0.0) {
        std::vector<std::vector<SimTime>> m;
        std::string line;
        while (std::getline(in, line)) {
            if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
            std::istringstream ls(line);
            std::vector<SimTime> row;
            double ms;
            while (ls >> ms) {
                if (ms < 0) throw std::invalid_argument("negative latency in profile");
                row.push_back(static_cast<SimTime>(std::llround(ms * static_cast<double>(kMillisecond))));
            }
            if (!ls.eof()) throw std::invalid_argument("malformed latency profile line: " + line);
            if (!row.empty()) m.push_back(std::move(row));
        }
        if (m.empty()) throw std::invalid_argument("empty latency profile");
        return LatencyProfile(std::move(m), jitter);
    }

    static LatencyProfile load(const std::string& path, double jitter = 0.0) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open latency profile: " + path);
        return parse(in, jitter);
    }

    std::size_t nodes() const { return matrix_.size(); }
    double jitter() const { return jitter_; }
    void set_jitter(double j) { jitter_ = j; }

    /// The epoch manager sits next to node 0.
    SimTime base(NodeId src, NodeId dst) const {
        const std::size_t s = src == kManagerNode ? 0 : src;
        const std::size_t d = dst == kManagerNode ? 0 : dst;
        return matrix_.at(s).at(d);
    }

   private:
    std::vector<std::vector<SimTime>> matrix_;
    double jitter_ = 0.0;
};

// ---------------------------------------------------------------------------
// Counters

class MessageCounters {
   public:
    void bump(MsgKind k) { ++counts_[static_cast<std::size_t>(k)]; }
    std::uint64_t operator[](MsgKind k) const { return counts_[static_cast<std::size_t>(k)]; }
    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts_) t += c;
        return t;
    }
    void reset() { counts_.fill(0); }
    void merge(const MessageCounters& o) {
        for (std::size_t i = 0; i < kMsgKindCount; ++i) counts_[i] += o.counts_[i];
    }
    std::map<std::string, std::uint64_t> as_map() const {
        std::map<std::string, std::uint64_t> m;
        for (std::size_t i = 0; i < kMsgKindCount; ++i)
            if (counts_[i]) m[std::string(kMsgKindNames[i])] = counts_[i];
        return m;
    }

   private:
    std::array<std::uint64_t, kMsgKindCount> counts_{};
};

struct TraceEntry {
    SimTime send_time = 0;
    SimTime deliver_time = 0;
    MsgKind kind = MsgKind::kReadReq;
    NodeId src = 0;
    NodeId dst = 0;
    TxnId txn;
    std::uint32_t token = 0;

    friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

// ---------------------------------------------------------------------------
// Environment seen by a node

/// What a node needs from its transport: a clock, message sending and timers.
class NodeEnv {
   public:
    virtual ~NodeEnv() = default;
    virtual SimTime now() const = 0;
    virtual void send(Msg msg) = 0;
    virtual void schedule(SimTime delay, std::function<void()> fn) = 0;
};

/// Receives messages for one endpoint.
class Endpoint {
   public:
    virtual ~Endpoint() = default;
    virtual void deliver(Msg msg) = 0;
    /// A message sent by this endpoint could not reach its (failed) destination.
    virtual void undeliverable(const Msg& msg) = 0;
};

// ---------------------------------------------------------------------------
// Deterministic simulated network

struct SimNetworkConfig {
    LatencyProfile latency;
    std::uint64_t seed = 1;
    bool force_fifo = false;
    SimTime timeout = 5 * kMillisecond;
    bool record_trace = false;
};

/// Single-threaded discrete event loop. Events fire in (time, sequence) order,
/// so identical inputs produce identical runs.
class SimNetwork {
   public:
    explicit SimNetwork(SimNetworkConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {}

    SimTime now() const { return now_; }
    std::uint32_t generation() const { return generation_; }

    /// Messages stamped with an older generation are dropped on delivery.
    void bump_generation() { ++generation_; }

    void attach(NodeId id, Endpoint* ep) { endpoints_[id] = ep; }
    void set_alive(NodeId id, bool alive) { alive_[id] = alive; }
    bool alive(NodeId id) const {
        auto it = alive_.find(id);
        return it == alive_.end() || it->second;
    }

    void send(Msg msg) {
        msg.generation = generation_;
        counters_.bump(msg.kind);
        msg.send_time = now_;
        if (!alive(msg.dst)) {
            const NodeId src = msg.src;
            ++dropped_;
            push(now_ + cfg_.timeout, Callback([this, src, m = std::move(msg)] {
                     if (m.generation != generation_ || !alive(src)) return;
                     if (auto it = endpoints_.find(src); it != endpoints_.end()) it->second->undeliverable(m);
                 }));
            return;
        }
        SimTime t = now_ + cfg_.latency.base(msg.src, msg.dst);
        if (cfg_.latency.jitter() > 0.0) {
            const auto span = static_cast<double>(cfg_.latency.base(msg.src, msg.dst)) * cfg_.latency.jitter();
            t += static_cast<SimTime>(std::uniform_real_distribution<double>(0.0, span)(rng_));
        }
        if (cfg_.force_fifo) {
            auto& last = fifo_[(static_cast<std::uint32_t>(msg.src) << 16) | msg.dst];
            t = std::max(t, last);
            last = t;
        }
        msg.deliver_time = t;
        if (cfg_.record_trace)
            trace_.push_back({msg.send_time, t, msg.kind, msg.src, msg.dst, msg.txn, msg.token});
        push(t, std::move(msg));
    }

    void schedule(SimTime delay, std::function<void()> fn) { push(now_ + delay, Callback(std::move(fn))); }
    void schedule_at(SimTime at, std::function<void()> fn) { push(std::max(at, now_), Callback(std::move(fn))); }

    bool empty() const { return heap_.empty(); }

    /// Runs one event. Returns false when no events remain.
    bool step() {
        if (heap_.empty()) return false;
        std::pop_heap(heap_.begin(), heap_.end(), Later{});
        Event ev = std::move(heap_.back());
        heap_.pop_back();
        now_ = ev.time;
        ++events_;
        if (auto* cb = std::get_if<Callback>(&ev.payload)) {
            (*cb)();
        } else {
            auto& msg = std::get<Msg>(ev.payload);
            if (msg.generation != generation_ || !alive(msg.dst)) {
                ++dropped_;
                return true;
            }
            auto it = endpoints_.find(msg.dst);
            if (it != endpoints_.end()) it->second->deliver(std::move(msg));
        }
        return true;
    }

    /// Drains the queue. Returns the number of events processed.
    std::uint64_t run_until_quiescent() {
        const auto start = events_;
        while (step()) {
        }
        return events_ - start;
    }

    void run_until(SimTime t) {
        while (!heap_.empty() && heap_.front().time <= t) step();
        now_ = std::max(now_, t);
    }

    template <typename Pred>
    void run_while(Pred keep_going) {
        while (keep_going() && step()) {
        }
    }

    const MessageCounters& counters() const { return counters_; }
    void reset_counters() { counters_.reset(); }
    const std::vector<TraceEntry>& trace() const { return trace_; }
    void clear_trace() { trace_.clear(); }
    std::uint64_t dropped() const { return dropped_; }
    std::uint64_t events() const { return events_; }
    const SimNetworkConfig& config() const { return cfg_; }

   private:
    using Callback = std::function<void()>;
    struct Event {
        SimTime time;
        std::uint64_t seq;
        std::variant<Msg, Callback> payload;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            return a.time != b.time ? a.time > b.time : a.seq > b.seq;
        }
    };

    template <typename P>
    void push(SimTime t, P&& payload) {
        heap_.push_back(Event{t, next_seq_++, std::forward<P>(payload)});
        std::push_heap(heap_.begin(), heap_.end(), Later{});
    }

    SimNetworkConfig cfg_;
    std::mt19937_64 rng_;
    SimTime now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t events_ = 0;
    std::uint64_t dropped_ = 0;
    std::uint32_t generation_ = 0;
    std::vector<Event> heap_;
    std::unordered_map<NodeId, Endpoint*> endpoints_;
    std::unordered_map<NodeId, bool> alive_;
    std::unordered_map<std::uint32_t, SimTime> fifo_;
    MessageCounters counters_;
    std::vector<TraceEntry> trace_;
};

/// NodeEnv over a shared SimNetwork.
class SimNodeEnv final : public NodeEnv {
   public:
    SimNodeEnv(SimNetwork& net) : net_(net) {}
    SimTime now() const override { return net_.now(); }
    void send(Msg msg) override { net_.send(std::move(msg)); }
    void schedule(SimTime delay, std::function<void()> fn) override { net_.schedule(delay, std::move(fn)); }

   private:
    SimNetwork& net_;
};

}  // namespace scar
