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

// A storage node: participant message handlers, worker coroutines, the
// commit gate used by epoch barriers, and group commit. The coordinator logic
// of each protocol lives in scar_engine.hpp and baselines.hpp; include
// engine.hpp to get all of it.

#pragma once

#include <algorithm>
#include <atomic>
#include <coroutine>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "scar/epoch.hpp"
#include "scar/metrics.hpp"
#include "scar/oracle.hpp"
#include "scar/storage.hpp"
#include "scar/task.hpp"
#include "scar/transport.hpp"
#include "scar/txn.hpp"
#include "scar/wire.hpp"
#include "scar/workloads.hpp"

namespace scar {

struct EngineConfig {
    Protocol protocol = Protocol::kScar;
    Isolation isolation = Isolation::kSerializable;
    ProtocolToggles toggles;
    std::size_t workers = 4;
    std::size_t value_size = 100;
    SimTime op_cost = 1 * kMicrosecond;  // CPU time charged per operation
    SimTime backoff_base = 20 * kMicrosecond;
    SimTime backoff_max = 2 * kMillisecond;
    bool record_history = false;
};

/// Cluster-wide counters. Atomic so socket-mode node threads can share them.
struct SharedState {
    std::atomic<std::uint64_t> budget{0};     // transaction programs not yet started
    std::atomic<std::uint64_t> sequencer{0};  // commit labels for the baselines
    std::atomic<std::uint64_t> max_ts{0};     // largest timestamp handed out by any coordinator
    std::atomic<std::uint64_t> commit_seq{0};  // order of commit decisions, for histories

    bool claim() {
        auto b = budget.load();
        while (b > 0)
            if (budget.compare_exchange_weak(b, b - 1)) return true;
        return false;
    }
    LogicalTs next_label() {
        const LogicalTs l{sequencer.fetch_add(1) + 1};
        observe(l);
        return l;
    }
    void observe(LogicalTs t) {
        auto cur = max_ts.load();
        while (cur < t.value && !max_ts.compare_exchange_weak(cur, t.value)) {
        }
    }
};

/// A transaction that passed validation and waits for its epoch to close.
struct BufferedTxn {
    Epoch epoch = 0;
    SimTime latency = 0;
    bool snapshot = false;
    bool flag = false;
    std::uint32_t rounds = 0;
    std::optional<HistoryRecord> record;
};

class Node final : public Endpoint {
   public:
    using CompletionFn = std::function<void(const TxnContext&)>;

    Node(NodeId id, NodeEnv& env, const PlacementMap& placement, const StoreConfig& store_cfg, const EngineConfig& cfg,
         SharedState& shared, const WorkloadSpec& workload, std::uint64_t seed)
        : id_(id), env_(env), placement_(placement), store_(id, store_cfg, placement), cfg_(cfg), shared_(shared),
          workload_(workload), seed_(seed) {
        for (PartitionId p = 0; p < placement.partitions(); ++p)
            if (placement.is_primary(p, id)) home_partitions_.push_back(p);
        if (home_partitions_.empty()) home_partitions_.push_back(static_cast<PartitionId>(id % placement.partitions()));
        for (std::size_t w = 0; w < cfg.workers; ++w) add_worker(false);
    }

    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    NodeId id() const { return id_; }
    NodeStore& store() { return store_; }
    const NodeStore& store() const { return store_; }
    Metrics& metrics() { return metrics_; }
    const Metrics& metrics() const { return metrics_; }
    std::vector<HistoryRecord>& history() { return history_; }
    const std::vector<HistoryRecord>& history() const { return history_; }
    const EngineConfig& config() const { return cfg_; }
    Epoch current_epoch() const { return current_epoch_; }
    bool paused() const { return paused_; }
    std::size_t in_commit() const { return in_commit_; }
    std::size_t pending_acks() const { return pending_acks_; }
    std::size_t buffered() const { return buffered_.size(); }

    /// Home partition of closed-loop worker `w`.
    PartitionId home_partition(std::size_t w) const { return home_partitions_[w % home_partitions_.size()]; }

    /// Starts the closed-loop workers; they run until the shared budget is spent.
    void start_workers() {
        for (auto& w : workers_)
            if (!w.scripted) launch(w);
    }

    /// Runs one program once (no retry) on a fresh worker. `done` fires when it
    /// commits (before group commit) or aborts.
    void submit(TxnProgram program, CompletionFn done) {
        Worker& w = add_worker(true);
        w.script.push_back(std::move(program));
        w.on_done = std::move(done);
        launch(w);
    }

    /// No running worker and nothing left to group-commit.
    bool idle() const {
        if (in_commit_ != 0 || pending_acks_ != 0 || !buffered_.empty()) return false;
        return std::none_of(workers_.begin(), workers_.end(), [](const Worker& w) { return w.active; });
    }
    bool workers_finished() const {
        return std::none_of(workers_.begin(), workers_.end(), [](const Worker& w) { return w.active; });
    }

    // -- Endpoint ---------------------------------------------------------

    void deliver(Msg m) override {
        switch (m.kind) {
            case MsgKind::kReadReq: on_read_req(m); break;
            case MsgKind::kLockReq: on_lock_req(m); break;
            case MsgKind::kValidateReq: on_validate_req(m); break;
            case MsgKind::kWriteReq: on_write_req(m); break;
            case MsgKind::kReplicateReq: on_replicate_req(m); break;
            case MsgKind::kTsSync: on_ts_sync(m); break;
            case MsgKind::kUnlock: on_unlock(m); break;
            case MsgKind::kEpochBarrier: on_barrier(m); break;
            case MsgKind::kReplicateAck:
                if (m.token == 0) {
                    ack_received();
                    break;
                }
                [[fallthrough]];
            case MsgKind::kReadRep:
            case MsgKind::kLockRep:
            case MsgKind::kValidateRep: on_reply(std::move(m)); break;
            case MsgKind::kBarrierAck: break;
        }
    }

    void undeliverable(const Msg& m) override {
        if (m.kind == MsgKind::kWriteReq || m.kind == MsgKind::kReplicateReq) {
            if (m.token == 0) {
                ack_received();
                return;
            }
        }
        if (m.token == 0) return;
        Msg rep;
        rep.kind = MsgKind::kReadRep;
        rep.src = m.dst;
        rep.dst = id_;
        rep.txn = m.txn;
        rep.token = m.token;
        for (const auto& it : m.items) {
            MsgItem r;
            r.key = it.key;
            r.status = status::kUnavailable;
            rep.items.push_back(std::move(r));
        }
        if (rep.items.empty()) rep.items.push_back(MsgItem{.key = {}, .status = status::kUnavailable});
        on_reply(std::move(rep));
    }

    // -- failure support (simulation) -------------------------------------

    /// Kills every in-flight attempt. Surviving workers retry their program
    /// after a backoff when `restart` is set.
    void abort_inflight(bool restart) {
        for (auto& w : workers_) {
            if (!w.active) continue;
            ++w.incarnation;
            w.task = Task<void>{};
            w.round = Round{};
            if (w.in_attempt) {
                ++metrics_.aborts[static_cast<std::size_t>(AbortReason::kNodeFailure)];
                w.in_attempt = false;
                if (w.on_done) {
                    TxnContext ctx;
                    ctx.abort(AbortReason::kNodeFailure);
                    w.on_done(ctx);
                }
            }
            if (w.scripted) {
                w.program.reset();
                w.script.clear();
                w.active = false;
                continue;
            }
            if (!restart) {
                w.active = false;
                continue;
            }
            const auto inc = w.incarnation;
            Worker* wp = &w;
            env_.schedule(backoff(w), [this, wp, inc] {
                if (wp->incarnation == inc) relaunch(*wp);
            });
        }
        gated_.clear();
        in_commit_ = 0;
        pending_acks_ = 0;
    }

    /// Reports every buffered transaction of an epoch <= `closed` as committed.
    void group_commit(Epoch closed) {
        auto keep = buffered_.begin();
        for (auto it = buffered_.begin(); it != buffered_.end(); ++it) {
            if (it->epoch > closed) {
                *keep++ = std::move(*it);
                continue;
            }
            ++metrics_.committed;
            metrics_.latencies.push_back(it->latency);
            metrics_.validation_rounds += it->rounds;
            if (it->snapshot) {
                ++metrics_.si_committed;
                if (it->flag) ++metrics_.si_flagged;
            }
            if (it->record) history_.push_back(std::move(*it->record));
        }
        buffered_.erase(keep, buffered_.end());
        metrics_.duration = std::max(metrics_.duration, env_.now() - measure_start_);
    }

    /// Drops transactions of epochs after `closed`; they are rolled back.
    std::size_t discard_buffered() {
        const auto n = buffered_.size();
        metrics_.aborts[static_cast<std::size_t>(AbortReason::kNodeFailure)] += n;
        metrics_.rolled_back += n;
        buffered_.clear();
        return n;
    }

    /// Brings the epoch state in line with the manager after a failure.
    void reset_epoch(Epoch current) {
        current_epoch_ = current;
        paused_ = false;
        barrier_acked_ = false;
        drain_epoch_ = 0;
    }

    /// Restarts the closed-loop workers of a recovered node.
    /// Starts a fresh measurement window (after a warm-up).
    void reset_metrics() {
        metrics_ = Metrics{};
        measure_start_ = env_.now();
    }

    void restart_workers() {
        for (auto& w : workers_)
            if (!w.scripted && !w.active) launch(w);
    }

   private:

    // -- workers ----------------------------------------------------------

    struct Round {
        std::uint32_t token = 0;
        std::size_t outstanding = 0;
        std::vector<Msg> replies;
        std::coroutine_handle<> waiter;
    };

    struct Worker {
        std::uint16_t id = 0;
        bool scripted = false;
        std::unique_ptr<WorkloadGenerator> gen;
        Rng rng;
        Task<void> task;
        std::uint64_t incarnation = 0;
        bool active = false;
        bool in_attempt = false;
        std::optional<TxnProgram> program;
        SimTime program_start = 0;
        std::uint32_t attempts = 0;
        std::uint32_t seq = 0;
        std::uint32_t next_token = 0;
        Round round;
        LogicalTs crts_floor;  // SI retry: snapshot must not precede a blind-write version seen before
        std::deque<TxnProgram> script;
        CompletionFn on_done;
    };

    struct GatedWorker {
        Worker* w;
        std::uint64_t incarnation;
        std::coroutine_handle<> h;
    };

    Worker& add_worker(bool scripted) {
        Worker& w = workers_.emplace_back();
        w.id = static_cast<std::uint16_t>(workers_.size() - 1);
        w.scripted = scripted;
        const auto stream = (static_cast<std::uint64_t>(id_) << 20) | w.id;
        w.rng.seed(derive_seed(seed_, stream * 2 + 1));
        if (!scripted)
            w.gen = std::make_unique<WorkloadGenerator>(workload_, placement_.partitions(), home_partition(w.id),
                                                        derive_seed(seed_, stream * 2));
        return w;
    }

    void launch(Worker& w) {
        w.active = true;
        ++w.incarnation;
        w.task = worker_loop(w);
        w.task.start();
    }
    void relaunch(Worker& w) {
        w.task = worker_loop(w);
        w.task.start();
    }

    SimTime backoff(Worker& w) {
        const auto shift = std::min<std::uint32_t>(w.attempts, 16);
        const SimTime cap = std::min(cfg_.backoff_max, cfg_.backoff_base << shift);
        return cap == 0 ? 0 : uniform_below(w.rng, cap) + 1;
    }

    Task<void> worker_loop(Worker& w);
    Task<void> scar_attempt(Worker& w, TxnContext& ctx, const TxnProgram& prog);
    Task<void> scar_validate_sr(Worker& w, TxnContext& ctx);
    Task<void> scar_validate_si(Worker& w, TxnContext& ctx);
    Task<void> occ_attempt(Worker& w, TxnContext& ctx, const TxnProgram& prog);
    Task<void> s2pl_attempt(Worker& w, TxnContext& ctx, const TxnProgram& prog);
    Task<void> execute_reads(Worker& w, TxnContext& ctx, const TxnProgram& prog);
    Task<void> lock_and_validate(Worker& w, TxnContext& ctx, bool lock, std::optional<LogicalTs> validate_at,
                                 bool version_check);

    // -- awaitables -------------------------------------------------------

    struct SleepAwaiter {
        Node& n;
        Worker& w;
        SimTime delay;
        bool await_ready() const noexcept { return delay == 0; }
        void await_suspend(std::coroutine_handle<> h) {
            Worker* wp = &w;
            const auto inc = w.incarnation;
            n.env_.schedule(delay, [wp, inc, h] {
                if (wp->incarnation == inc) h.resume();
            });
        }
        void await_resume() const noexcept {}
    };
    SleepAwaiter sleep(Worker& w, SimTime d) { return SleepAwaiter{*this, w, d}; }

    struct RoundAwaiter {
        Worker& w;
        bool await_ready() const noexcept { return w.round.outstanding == 0; }
        void await_suspend(std::coroutine_handle<> h) noexcept { w.round.waiter = h; }
        std::vector<Msg> await_resume() { return std::move(w.round.replies); }
    };
    RoundAwaiter wait_round(Worker& w) { return RoundAwaiter{w}; }

    /// Blocks while the node is draining for an epoch barrier.
    struct GateAwaiter {
        Node& n;
        Worker& w;
        bool await_ready() const noexcept { return !n.paused_; }
        void await_suspend(std::coroutine_handle<> h) { n.gated_.push_back({&w, w.incarnation, h}); }
        void await_resume() const noexcept {}
    };
    GateAwaiter commit_gate(Worker& w) { return GateAwaiter{*this, w}; }

    void begin_round(Worker& w) {
        w.round.token = ++w.next_token;
        w.round.outstanding = 0;
        w.round.replies.clear();
        w.round.waiter = {};
    }

    void rpc(Worker& w, TxnContext& ctx, Msg m) {
        m.src = id_;
        m.txn = ctx.tid;
        m.token = w.round.token;
        ++w.round.outstanding;
        ctx.msgs.bump(m.kind);
        env_.send(std::move(m));
    }

    void send_txn(TxnContext& ctx, Msg m) {
        m.src = id_;
        m.txn = ctx.tid;
        ctx.msgs.bump(m.kind);
        env_.send(std::move(m));
    }

    void on_reply(Msg m) {
        const auto widx = m.txn.worker();
        if (m.txn.node() != id_ || widx >= workers_.size()) return;
        Worker& w = workers_[widx];
        if (m.token != w.round.token || w.round.outstanding == 0) return;
        w.round.replies.push_back(std::move(m));
        if (--w.round.outstanding == 0 && w.round.waiter) std::exchange(w.round.waiter, {}).resume();
    }

    // -- epoch ------------------------------------------------------------

    void enter_commit(TxnContext& ctx) {
        ++in_commit_;
        ctx.epoch = current_epoch_;
    }

    void leave_commit() {
        if (in_commit_ > 0) --in_commit_;
        maybe_ack_barrier();
    }

    void ack_received() {
        if (pending_acks_ > 0) --pending_acks_;
        maybe_ack_barrier();
    }

    void maybe_ack_barrier() {
        if (!paused_ || barrier_acked_ || in_commit_ != 0 || pending_acks_ != 0) return;
        barrier_acked_ = true;
        Msg m;
        m.kind = MsgKind::kBarrierAck;
        m.src = id_;
        m.dst = kManagerNode;
        m.epoch = drain_epoch_;
        env_.send(std::move(m));
    }

    void on_barrier(const Msg& m) {
        if (m.aux == barrier_phase::kDrain) {
            paused_ = true;
            barrier_acked_ = false;
            drain_epoch_ = m.epoch;
            maybe_ack_barrier();
            return;
        }
        group_commit(m.epoch);
        store_.close_epoch_snapshot(m.epoch);
        current_epoch_ = m.epoch + 1;
        paused_ = false;
        barrier_acked_ = false;
        auto gated = std::move(gated_);
        gated_.clear();
        for (const auto& g : gated) {
            Worker* wp = g.w;
            const auto inc = g.incarnation;
            const auto h = g.h;
            env_.schedule(0, [wp, inc, h] {
                if (wp->incarnation == inc) h.resume();
            });
        }
    }

    // -- coordinator helpers shared by all protocols ------------------------

    bool primary_here(const Key& k) const { return placement_.primary(k.partition) == id_; }

    /// Adds a write-set entry, carrying over the observed version of an earlier read.
    void add_write(TxnContext& ctx, const Key& k) {
        if (ctx.find_write(k)) return;
        RwSetEntry e;
        e.key = k;
        e.is_write = true;
        e.value = written_value(ctx.tid, k, cfg_.value_size);
        if (const RwSetEntry* r = ctx.find_read(k)) {
            e.wts = r->wts;
            e.rts = r->rts;
            e.in_read_set = true;
        }
        ctx.write_set.push_back(std::move(e));
    }

    /// Sends the write set to primaries and backups. Without `w` the acks are
    /// collected per node for the epoch barrier; with `w` they form a round.
    void send_writes(TxnContext& ctx, Worker* w, bool keep_lock) {
        std::map<NodeId, Msg> writes, replicas;
        for (const auto& e : ctx.write_set) {
            const PartitionId p = e.key.partition;
            const NodeId primary = placement_.primary(p);
            if (primary == id_) {
                store_.primary_apply(e.key, e.value, ctx.cts, ctx.epoch, ctx.tid, !keep_lock);
            } else {
                auto& m = writes[primary];
                m.kind = MsgKind::kWriteReq;
                m.dst = primary;
                m.items.push_back(MsgItem{e.key, 0, 0, {}, {}, e.value});
            }
            for (NodeId b : placement_.backups(p)) {
                if (b == id_) {
                    if (store_.hosts(p)) store_.replica_apply(e.key, e.value, ctx.cts, ctx.epoch);
                    continue;
                }
                auto& m = replicas[b];
                m.kind = MsgKind::kReplicateReq;
                m.dst = b;
                m.items.push_back(MsgItem{e.key, 0, 0, {}, {}, e.value});
            }
        }
        for (auto* group : {&writes, &replicas})
            for (auto& [dst, m] : *group) {
                m.aux = ctx.cts.value;
                m.epoch = ctx.epoch;
                m.flags = keep_lock ? msg_flags::kKeepLock : 0;
                if (w) {
                    rpc(*w, ctx, std::move(m));
                } else {
                    ++pending_acks_;
                    send_txn(ctx, std::move(m));
                }
            }
    }

    /// Releases write locks taken during validation (abort path).
    void release_write_locks(TxnContext& ctx) {
        std::map<NodeId, Msg> unlocks;
        for (auto& e : ctx.write_set) {
            if (!e.lock_held) continue;
            e.lock_held = false;
            const NodeId primary = placement_.primary(e.key.partition);
            if (primary == id_) {
                store_.unlock(e.key, ctx.tid);
                continue;
            }
            auto& m = unlocks[primary];
            m.kind = MsgKind::kUnlock;
            m.dst = primary;
            m.items.push_back(MsgItem{.key = e.key});
        }
        for (auto& [dst, m] : unlocks) send_txn(ctx, std::move(m));
    }

    /// Pushes rts extensions to the backups of the extended records.
    void sync_timestamps(TxnContext& ctx) {
        if (!cfg_.toggles.ts_sync || ctx.extended.empty()) return;
        std::map<NodeId, SyncBatch> batches;
        for (const auto& e : ctx.extended)
            for (NodeId b : placement_.backups(e.key.partition)) {
                if (b == id_) {
                    if (store_.hosts(e.key.partition)) store_.update_rts(e.key, e.wts, e.rts);
                    continue;
                }
                batches[b].add(e.key, e.wts, e.rts);
            }
        for (auto& [dst, batch] : batches) send_txn(ctx, batch.to_msg(id_, dst, ctx.tid));
    }

    void buffer_commit(const TxnContext& ctx, SimTime latency) {
        BufferedTxn b;
        b.epoch = ctx.epoch;
        b.latency = latency;
        b.snapshot = ctx.isolation == Isolation::kSnapshot && ctx.protocol == Protocol::kScar;
        b.flag = ctx.serializable_flag;
        b.rounds = ctx.validation_rounds;
        if (cfg_.record_history) {
            HistoryRecord r;
            r.tid = ctx.tid;
            r.level = ctx.protocol == Protocol::kRc ? HistoryLevel::kReadCommitted
                      : b.snapshot                  ? HistoryLevel::kSnapshot
                                                    : HistoryLevel::kSerializable;
            r.epoch = ctx.epoch;
            r.cts = ctx.cts;
            r.crts = ctx.crts;
            r.serializable_flag = ctx.serializable_flag;
            r.seq = shared_.commit_seq.fetch_add(1) + 1;
            for (const auto& e : ctx.read_set) r.reads.push_back(ObservedRead{e.key, e.wts});
            for (const auto& e : ctx.write_set) r.writes.push_back(RecordedWrite{e.key, e.value});
            b.record = std::move(r);
        }
        buffered_.push_back(std::move(b));
    }

    static AbortReason reason_for(std::uint8_t st) {
        switch (st) {
            case status::kBusy: return AbortReason::kBusy;
            case status::kStale: return AbortReason::kStale;
            case status::kBlocked: return AbortReason::kBlocked;
            default: return AbortReason::kNodeFailure;
        }
    }

    void note_read_source(ReadSource s) {
        switch (s) {
            case ReadSource::kLocalPrimary: ++metrics_.reads_local_primary; break;
            case ReadSource::kLocalBackup: ++metrics_.reads_local_backup; break;
            case ReadSource::kRemotePrimary: ++metrics_.reads_remote; break;
        }
    }

    // -- participant handlers ----------------------------------------------

    Msg reply_to(const Msg& req, MsgKind kind) const {
        Msg r;
        r.kind = kind;
        r.src = id_;
        r.dst = req.src;
        r.txn = req.txn;
        r.token = req.token;
        r.epoch = req.epoch;
        return r;
    }

    bool serves_primary(const Key& k) const { return store_.hosts(k.partition) && store_.readable(k.partition); }

    void on_read_req(const Msg& m) {
        Msg rep = reply_to(m, MsgKind::kReadRep);
        for (const auto& it : m.items) {
            MsgItem out;
            out.key = it.key;
            if (!serves_primary(it.key)) {
                out.status = status::kUnavailable;
            } else {
                bool ok = true;
                if (it.flags & item_flags::kShared) ok = store_.acquire_shared(it.key, m.txn);
                else if (it.flags & item_flags::kExclusive) ok = store_.acquire_exclusive(it.key, m.txn, false);
                if (!ok) {
                    out.status = status::kBusy;
                } else {
                    auto r = store_.local_read(it.key);
                    out.status = status::kOk;
                    out.wts = r->wts;
                    out.rts = r->rts;
                    out.value = std::move(r->value);
                }
            }
            rep.items.push_back(std::move(out));
        }
        env_.send(std::move(rep));
    }

    void on_lock_req(const Msg& m) {
        Msg rep = reply_to(m, MsgKind::kLockRep);
        for (const auto& it : m.items) {
            MsgItem out;
            out.key = it.key;
            if (!serves_primary(it.key)) {
                out.status = status::kUnavailable;
            } else if (it.flags & item_flags::kExclusive) {
                const bool ok = store_.acquire_exclusive(it.key, m.txn, (it.flags & item_flags::kUpgrade) != 0);
                const auto snap = store_.snapshot_meta(it.key);
                out.status = ok ? status::kOk : status::kBusy;
                out.wts = snap.wts;
                out.rts = snap.rts;
            } else {
                std::optional<LogicalTs> expected;
                if (it.flags & item_flags::kHasExpected) expected = it.wts;
                const auto r = store_.try_lock(it.key, expected, m.txn);
                out.status = r.status == LockStatus::kAcquired ? status::kOk
                             : r.status == LockStatus::kBusy   ? status::kBusy
                                                               : status::kStale;
                out.wts = r.wts;
                out.rts = r.rts;
            }
            rep.items.push_back(std::move(out));
        }
        env_.send(std::move(rep));
    }

    void on_validate_req(const Msg& m) {
        Msg rep = reply_to(m, MsgKind::kValidateRep);
        const LogicalTs target{m.aux};
        for (const auto& it : m.items) {
            MsgItem out;
            out.key = it.key;
            if (!serves_primary(it.key)) {
                out.status = status::kUnavailable;
            } else {
                ExtendStatus st;
                if (m.flags & msg_flags::kOccCheck) {
                    st = store_.check_version(it.key, it.wts, m.txn);
                    out.rts = store_.snapshot_meta(it.key).rts;
                } else {
                    const auto r = store_.extend_rts(it.key, it.wts, target, m.txn);
                    st = r.status;
                    out.rts = r.rts;
                }
                out.status = st == ExtendStatus::kExtended ? status::kOk
                             : st == ExtendStatus::kStale  ? status::kStale
                                                           : status::kBlocked;
            }
            rep.items.push_back(std::move(out));
        }
        env_.send(std::move(rep));
    }

    void on_write_req(const Msg& m) {
        const LogicalTs cts{m.aux};
        const bool keep = (m.flags & msg_flags::kKeepLock) != 0;
        for (const auto& it : m.items)
            if (store_.hosts(it.key.partition)) store_.primary_apply(it.key, it.value, cts, m.epoch, m.txn, !keep);
        env_.send(reply_to(m, MsgKind::kReplicateAck));
    }

    void on_replicate_req(const Msg& m) {
        const LogicalTs cts{m.aux};
        for (const auto& it : m.items)
            if (store_.hosts(it.key.partition)) store_.replica_apply(it.key, it.value, cts, m.epoch);
        env_.send(reply_to(m, MsgKind::kReplicateAck));
    }

    void on_ts_sync(const Msg& m) {
        for (const auto& it : m.items)
            if (store_.hosts(it.key.partition)) store_.update_rts(it.key, it.wts, it.rts);
    }

    void on_unlock(const Msg& m) {
        for (const auto& it : m.items) {
            if (!store_.hosts(it.key.partition)) continue;
            if (it.flags & item_flags::kShared) store_.release_shared(it.key);
            if (!(it.flags & item_flags::kShared) || (it.flags & item_flags::kExclusive)) store_.unlock(it.key, m.txn);
        }
    }

    // -- state -------------------------------------------------------------

    NodeId id_;
    NodeEnv& env_;
    const PlacementMap& placement_;
    NodeStore store_;
    EngineConfig cfg_;
    SharedState& shared_;
    WorkloadSpec workload_;
    std::uint64_t seed_;
    std::vector<PartitionId> home_partitions_;

    std::deque<Worker> workers_;
    std::vector<GatedWorker> gated_;

    Epoch current_epoch_ = 1;
    Epoch drain_epoch_ = 0;
    bool paused_ = false;
    bool barrier_acked_ = false;
    std::size_t in_commit_ = 0;
    std::size_t pending_acks_ = 0;
    std::vector<BufferedTxn> buffered_;

    Metrics metrics_;
    std::vector<HistoryRecord> history_;
    SimTime measure_start_ = 0;
};

// ---------------------------------------------------------------------------
// Worker loop

inline Task<void> Node::worker_loop(Worker& w) {
    for (;;) {
        if (!w.program) {
            if (w.scripted) {
                if (w.script.empty()) break;
                w.program = std::move(w.script.front());
                w.script.pop_front();
            } else {
                if (!shared_.claim()) break;
                w.program = w.gen->next();
            }
            w.program_start = env_.now();
            w.attempts = 0;
            w.crts_floor = LogicalTs{};
        }
        TxnContext ctx;
        ctx.tid = TxnId::make(id_, w.id, ++w.seq);
        ctx.protocol = cfg_.protocol;
        ctx.isolation = cfg_.protocol == Protocol::kScar ? cfg_.isolation : Isolation::kSerializable;
        ctx.start_time = w.program_start;
        ++metrics_.attempted;
        w.in_attempt = true;
        co_await sleep(w, cfg_.op_cost * w.program->ops.size());
        if (cfg_.protocol == Protocol::kScar) {
            co_await scar_attempt(w, ctx, *w.program);
        } else if (cfg_.protocol == Protocol::kS2pl) {
            co_await s2pl_attempt(w, ctx, *w.program);
        } else {
            co_await occ_attempt(w, ctx, *w.program);
        }
        w.in_attempt = false;
        const bool committed = ctx.outcome == TxnOutcome::kCommitted;
        if (!committed) ++metrics_.aborts[static_cast<std::size_t>(ctx.abort_reason)];
        if (w.on_done) w.on_done(ctx);
        if (committed || w.scripted) {
            w.program.reset();
            continue;
        }
        ++w.attempts;
        co_await sleep(w, backoff(w));
    }
    w.active = false;
}

// ---------------------------------------------------------------------------
// Execution phase of the optimistic protocols (SCAR, OCC, RC)

inline Task<void> Node::execute_reads(Worker& w, TxnContext& ctx, const TxnProgram& prog) {
    for (const Op& op : prog.ops) {
        const Key& k = op.key;
        if (op.kind != OpKind::kWrite && !ctx.find_write(k) && !ctx.find_read(k)) {
            RwSetEntry e;
            e.key = k;
            const bool here = cfg_.toggles.local_read ? store_.readable(k.partition)
                                                      : primary_here(k) && store_.readable(k.partition);
            if (here) {
                auto r = store_.local_read(k);
                e.value = std::move(r->value);
                e.wts = r->wts;
                e.rts = r->rts;
                e.source = primary_here(k) ? ReadSource::kLocalPrimary : ReadSource::kLocalBackup;
            } else {
                begin_round(w);
                Msg m;
                m.kind = MsgKind::kReadReq;
                m.dst = placement_.primary(k.partition);
                m.items.push_back(MsgItem{.key = k});
                rpc(w, ctx, std::move(m));
                auto replies = co_await wait_round(w);
                const MsgItem& it = replies.front().items.front();
                if (it.status != status::kOk) {
                    ctx.abort(reason_for(it.status));
                    co_return;
                }
                e.value = it.value;
                e.wts = it.wts;
                e.rts = it.rts;
                e.source = ReadSource::kRemotePrimary;
            }
            note_read_source(e.source);
            ctx.read_set.push_back(std::move(e));
        }
        if (op.kind != OpKind::kRead) add_write(ctx, k);
    }
}

/// One message round: lock the write set and/or validate the read-only part of
/// the read set at `validate_at`. Work on local primaries is done in place.
/// `version_check` selects OCC-style validation (version unchanged, no rts).
inline Task<void> Node::lock_and_validate(Worker& w, TxnContext& ctx, bool lock, std::optional<LogicalTs> validate_at,
                                          bool version_check) {
    begin_round(w);
    std::map<NodeId, Msg> lock_msgs, val_msgs;

    if (lock)
        for (auto& e : ctx.write_set) {
            std::optional<LogicalTs> expected;
            if (e.in_read_set) expected = e.wts;
            if (primary_here(e.key)) {
                const auto r = store_.try_lock(e.key, expected, ctx.tid);
                if (r.status != LockStatus::kAcquired) {
                    ctx.abort(r.status == LockStatus::kBusy ? AbortReason::kBusy : AbortReason::kStale);
                    break;
                }
                e.lock_held = true;
                e.rts = r.rts;
                if (!e.in_read_set) e.wts = r.wts;
                continue;
            }
            const NodeId dst = placement_.primary(e.key.partition);
            auto& m = lock_msgs[dst];
            m.kind = MsgKind::kLockReq;
            m.dst = dst;
            MsgItem it;
            it.key = e.key;
            if (expected) {
                it.flags = item_flags::kHasExpected;
                it.wts = *expected;
            }
            m.items.push_back(std::move(it));
        }

    if (validate_at && ctx.outcome != TxnOutcome::kAborted)
        for (auto& e : ctx.read_set) {
            if (ctx.writes(e.key)) continue;  // covered by the write lock and its version check
            const bool backup_read = e.source == ReadSource::kLocalBackup;
            if (backup_read) ++metrics_.backup_reads_validated;
            if (!version_check && cfg_.toggles.local_validation && e.rts >= *validate_at) {
                e.validated_locally = true;
                if (backup_read) ++metrics_.backup_reads_local_ok;
                continue;
            }
            if (primary_here(e.key)) {
                ExtendStatus st;
                if (version_check) {
                    st = store_.check_version(e.key, e.wts, ctx.tid);
                } else {
                    const auto r = store_.extend_rts(e.key, e.wts, *validate_at, ctx.tid);
                    st = r.status;
                    if (st == ExtendStatus::kExtended) {
                        e.rts = r.rts;
                        ctx.extended.push_back(e);
                    }
                }
                if (st != ExtendStatus::kExtended) {
                    ctx.abort(st == ExtendStatus::kStale ? AbortReason::kStale : AbortReason::kBlocked);
                    break;
                }
                continue;
            }
            const NodeId dst = placement_.primary(e.key.partition);
            auto& m = val_msgs[dst];
            m.kind = MsgKind::kValidateReq;
            m.dst = dst;
            m.aux = validate_at->value;
            if (version_check) m.flags = msg_flags::kOccCheck;
            MsgItem it;
            it.key = e.key;
            it.wts = e.wts;
            m.items.push_back(std::move(it));
        }

    if (ctx.outcome == TxnOutcome::kAborted) co_return;
    if (lock_msgs.empty() && val_msgs.empty()) co_return;

    ++ctx.validation_rounds;
    for (auto& [dst, m] : lock_msgs) rpc(w, ctx, std::move(m));
    for (auto& [dst, m] : val_msgs) rpc(w, ctx, std::move(m));
    auto replies = co_await wait_round(w);

    for (const Msg& rep : replies) {
        for (const MsgItem& it : rep.items) {
            if (rep.kind == MsgKind::kLockRep) {
                RwSetEntry* e = ctx.find_write(it.key);
                if (!e) continue;
                if (it.status == status::kOk) {
                    e->lock_held = true;
                    e->rts = it.rts;
                    if (!e->in_read_set) e->wts = it.wts;
                } else if (ctx.outcome != TxnOutcome::kAborted) {
                    ctx.abort(reason_for(it.status));
                }
            } else {
                RwSetEntry* e = ctx.find_read(it.key);
                if (it.status == status::kOk) {
                    if (e && !version_check) {
                        e->rts = it.rts;
                        ctx.extended.push_back(*e);
                    }
                } else if (ctx.outcome != TxnOutcome::kAborted) {
                    ctx.abort(reason_for(it.status));
                }
            }
        }
    }
}

}  // namespace scar
