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

#include <functional>
#include <set>
#include <vector>

#include "scar/transport.hpp"
#include "scar/types.hpp"
#include "scar/wire.hpp"

namespace scar {

/// Extended rts values headed for one backup node.
struct SyncBatch {
    struct Entry {
        Key key;
        LogicalTs wts;
        LogicalTs rts;
    };
    std::vector<Entry> entries;

    void add(const Key& k, LogicalTs wts, LogicalTs rts) { entries.push_back({k, wts, rts}); }
    bool empty() const { return entries.empty(); }

    Msg to_msg(NodeId src, NodeId dst, TxnId txn) const {
        Msg m;
        m.kind = MsgKind::kTsSync;
        m.src = src;
        m.dst = dst;
        m.txn = txn;
        for (const auto& e : entries) {
            MsgItem it;
            it.key = e.key;
            it.wts = e.wts;
            it.rts = e.rts;
            m.items.push_back(std::move(it));
        }
        return m;
    }
};

/// Global barrier driver. Every interval it asks all live nodes to drain
/// (stop admitting transactions into commit and wait for their replication
/// acks). Once every node has acknowledged, the epoch is closed and nodes are
/// told to advance. Epochs therefore never overlap.
class EpochManager final : public Endpoint {
   public:
    using AliveFn = std::function<std::vector<NodeId>()>;

    EpochManager(NodeEnv& env, SimTime interval, AliveFn alive) : env_(env), interval_(interval), alive_(std::move(alive)) {}

    /// Invoked when an epoch closes, before any node learns about it.
    std::function<void(Epoch)> on_close;

    void start() {
        stopped_ = false;
        schedule_tick();
    }
    void stop() {
        stopped_ = true;
        ++incarnation_;
    }

    Epoch current() const { return current_; }
    Epoch closed() const { return closed_; }
    bool draining() const { return draining_; }

    /// Abandons an in-progress barrier after a failure; the next epoch starts
    /// right after the last closed one.
    void reset() {
        ++incarnation_;
        draining_ = false;
        acked_.clear();
        current_ = closed_ + 1;
        if (!stopped_) schedule_tick();
    }

    /// A recovered node joins the barrier protocol.
    void add_node(NodeId n) {
        if (draining_) send_phase(n, barrier_phase::kDrain, current_);
    }

    void deliver(Msg m) override {
        if (m.kind != MsgKind::kBarrierAck || !draining_ || m.epoch != current_) return;
        acked_.insert(m.src);
        try_close();
    }
    void undeliverable(const Msg&) override {}

    /// Re-evaluates the barrier, e.g. after a node left the alive set.
    void try_close() {
        if (!draining_) return;
        for (NodeId n : alive_())
            if (!acked_.contains(n)) return;
        const Epoch e = current_;
        closed_ = e;
        draining_ = false;
        acked_.clear();
        if (on_close) on_close(e);
        for (NodeId n : alive_()) send_phase(n, barrier_phase::kAdvance, e);
        current_ = e + 1;
        schedule_tick();
    }

   private:
    void schedule_tick() {
        const auto inc = incarnation_;
        env_.schedule(interval_, [this, inc] {
            if (inc == incarnation_ && !stopped_) tick();
        });
    }

    void tick() {
        draining_ = true;
        acked_.clear();
        for (NodeId n : alive_()) send_phase(n, barrier_phase::kDrain, current_);
    }

    void send_phase(NodeId n, std::uint64_t phase, Epoch e) {
        Msg m;
        m.kind = MsgKind::kEpochBarrier;
        m.src = kManagerNode;
        m.dst = n;
        m.epoch = e;
        m.aux = phase;
        env_.send(std::move(m));
    }

    NodeEnv& env_;
    SimTime interval_;
    AliveFn alive_;
    Epoch current_ = 1;
    Epoch closed_ = 0;
    bool draining_ = false;
    bool stopped_ = true;
    std::uint64_t incarnation_ = 0;
    std::set<NodeId> acked_;
};

}  // namespace scar
