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
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scar/engine.hpp"
#include "scar/epoch.hpp"
#include "scar/oracle.hpp"
#include "scar/storage.hpp"
#include "scar/transport.hpp"

namespace scar {

/// More nodes failed than the replication factor tolerates.
class UnrecoverableFailure : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct FailureEvent {
    enum class Action : std::uint8_t { kFail, kRecover };
    SimTime at = 0;
    Action action = Action::kFail;
    NodeId node = 0;
};

struct ClusterConfig {
    std::size_t nodes = 4;
    std::size_t replicas = 3;
    std::size_t partitions = 0;  // 0: one per worker thread
    std::size_t value_size = 100;
    EngineConfig engine;
    WorkloadSpec workload;
    SimTime epoch_interval = 10 * kMillisecond;
    std::optional<LatencyProfile> latency;  // default: LAN with `jitter`
    double jitter = 0.2;
    std::uint64_t seed = 1;
    bool force_fifo = false;
    bool record_trace = false;
    std::uint64_t txn_budget = 0;
    std::uint64_t warmup_txns = 0;  // run first, then metrics restart from zero
    std::vector<FailureEvent> failures;
    SimTime time_limit = 3600 * kSecond;  // simulated-time safety stop

    std::size_t partition_count() const { return partitions != 0 ? partitions : nodes * engine.workers; }
};

/// A simulated deployment: nodes, placement, network and epoch manager in
/// one deterministic event loop.
class Cluster {
   public:
    explicit Cluster(ClusterConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.nodes == 0) throw std::invalid_argument("need at least one node");
        if (cfg_.replicas == 0 || cfg_.replicas > cfg_.nodes)
            throw std::invalid_argument("replicas must be in [1, nodes]");
        cfg_.engine.value_size = cfg_.value_size;

        SimNetworkConfig net_cfg;
        net_cfg.latency = cfg_.latency ? *cfg_.latency : LatencyProfile::lan(cfg_.nodes, cfg_.jitter);
        if (net_cfg.latency.nodes() < cfg_.nodes) throw std::invalid_argument("latency profile has too few nodes");
        net_cfg.seed = derive_seed(cfg_.seed, 0xC0FFEE);
        net_cfg.force_fifo = cfg_.force_fifo;
        net_cfg.record_trace = cfg_.record_trace;
        net_ = std::make_unique<SimNetwork>(std::move(net_cfg));
        env_ = std::make_unique<SimNodeEnv>(*net_);

        original_placement_ = PlacementMap::round_robin(cfg_.partition_count(), cfg_.nodes, cfg_.replicas);
        placement_ = original_placement_;

        store_cfg_.partitions = cfg_.partition_count();
        store_cfg_.rows_per_partition = cfg_.workload.rows_per_partition();
        store_cfg_.value_size = cfg_.value_size;

        alive_.assign(cfg_.nodes, true);
        for (NodeId n = 0; n < cfg_.nodes; ++n) {
            nodes_.push_back(std::make_unique<Node>(n, *env_, placement_, store_cfg_, cfg_.engine, shared_,
                                                    cfg_.workload, cfg_.seed));
            net_->attach(n, nodes_.back().get());
        }

        manager_ = std::make_unique<EpochManager>(*env_, cfg_.epoch_interval, [this] { return alive_nodes(); });
        manager_->on_close = [this](Epoch e) { epoch_closed(e); };
        net_->attach(kManagerNode, manager_.get());
    }

    Cluster(const Cluster&) = delete;
    Cluster& operator=(const Cluster&) = delete;

    /// Called when an epoch closes; every node's live state is then exactly
    /// the durable state.
    std::function<void(Epoch)> on_epoch_close;

    // -- running ------------------------------------------------------------

    /// Starts the epoch manager (idempotent).
    void start() {
        if (started_) return;
        started_ = true;
        manager_->start();
    }

    /// Runs the configured workload until its budget is spent and every
    /// transaction has been group-committed, then drains the network.
    void run() {
        start();
        if (cfg_.warmup_txns > 0) {
            shared_.budget = cfg_.warmup_txns;
            for (NodeId n = 0; n < cfg_.nodes; ++n)
                if (alive_[n]) nodes_[n]->start_workers();
            net_->run_while([this] { return !quiet() && net_->now() < cfg_.time_limit; });
            for (auto& node : nodes_) node->reset_metrics();
            net_->reset_counters();
        }
        shared_.budget = cfg_.txn_budget;
        for (const auto& f : cfg_.failures)
            net_->schedule_at(f.at, [this, f] {
                if (finished_) return;
                if (f.action == FailureEvent::Action::kFail) fail_node(f.node);
                else recover_node(f.node);
            });
        for (NodeId n = 0; n < cfg_.nodes; ++n)
            if (alive_[n]) nodes_[n]->start_workers();
        net_->run_while([this] { return !quiet() && net_->now() < cfg_.time_limit; });
        timed_out_ = !quiet();
        finish();
    }

    /// Stops the epoch manager and delivers whatever is still in flight.
    void finish() {
        finished_ = true;
        manager_->stop();
        net_->run_until_quiescent();
    }

    bool timed_out() const { return timed_out_; }

    /// Runs one program on node `n` and returns its context once it commits
    /// (before group commit) or aborts.
    TxnContext execute(NodeId n, TxnProgram program) {
        start();
        std::optional<TxnContext> out;
        nodes_.at(n)->submit(std::move(program), [&out](const TxnContext& c) { out = c; });
        net_->run_while([&] { return !out.has_value(); });
        if (!out) throw std::logic_error("scripted transaction did not finish");
        return *out;
    }

    void submit(NodeId n, TxnProgram program, Node::CompletionFn done) {
        start();
        nodes_.at(n)->submit(std::move(program), std::move(done));
    }

    /// Runs until every node is idle (all transactions group-committed).
    void settle() {
        start();
        net_->run_while([this] { return !quiet(); });
    }

    /// No worker running, nothing buffered, no recovery pending.
    bool quiet() const {
        if (!recoveries_.empty()) return false;
        for (NodeId n = 0; n < cfg_.nodes; ++n)
            if (alive_[n] && !nodes_[n]->idle()) return false;
        return true;
    }

    // -- failures -------------------------------------------------------------

    /// Crashes `n`: primaries fail over, every node rolls back to the last
    /// closed epoch and in-flight transactions abort.
    void fail_node(NodeId n) {
        if (n >= cfg_.nodes || !alive_[n]) throw std::invalid_argument("node " + std::to_string(n) + " is not alive");
        const std::size_t failed = static_cast<std::size_t>(std::count(alive_.begin(), alive_.end(), false)) + 1;
        if (failed > cfg_.replicas - 1)
            throw UnrecoverableFailure("failing node " + std::to_string(n) + " exceeds the tolerated " +
                                       std::to_string(cfg_.replicas - 1) + " failure(s)");
        for (const auto& r : recoveries_)
            if (r.node == n) throw UnrecoverableFailure("node failed again while catching up");

        std::vector<PartitionId> promoted;
        try {
            promoted = placement_.remove_node(n);
        } catch (const std::runtime_error& e) {
            throw UnrecoverableFailure(e.what());
        }
        alive_[n] = false;
        net_->set_alive(n, false);
        net_->bump_generation();
        ++failures_;

        const Epoch closed = manager_->closed();
        for (auto& node : nodes_) node->group_commit(closed);

        Node& dead = *nodes_[n];
        dead.abort_inflight(false);
        dead.discard_buffered();
        for (PartitionId p : dead.store().hosted_partitions()) dead.store().drop_partition(p);

        for (NodeId m = 0; m < cfg_.nodes; ++m) {
            if (!alive_[m]) continue;
            Node& node = *nodes_[m];
            node.abort_inflight(true);
            node.discard_buffered();
            node.store().clear_locks();
            node.store().close_epoch_snapshot(closed);
            node.store().rollback_to_shadow();
            node.reset_epoch(closed + 1);
        }

        // Extended rts values of the lost primary are unknown; no committed
        // reader can have been promised more than the largest timestamp issued.
        const LogicalTs bound{shared_.max_ts.load()};
        for (PartitionId p : promoted) {
            for (NodeId r : placement_.replicas(p)) {
                NodeStore& s = nodes_[r]->store();
                if (!s.hosts(p)) continue;
                if (r == placement_.primary(p)) s.set_role(p, Role::kPrimary);
                for (std::uint64_t row = 0; row < store_cfg_.rows_per_partition; ++row) s.raise_rts(Key{p, row}, bound);
            }
        }

        // Recovery copies in flight were dropped with the old generation.
        for (auto& r : recoveries_) {
            r.copy_in_flight = false;
            for (PartitionId p : r.partitions) {
                nodes_[r.node]->store().load_partition(p, Role::kBackup);
                nodes_[r.node]->store().mark_catching_up(p, true);
            }
        }

        manager_->reset();
    }

    /// Brings a failed node back as a backup of its original partitions. The
    /// partitions are copied from the current primaries at the next epoch close.
    void recover_node(NodeId n) {
        if (n >= cfg_.nodes || alive_[n]) throw std::invalid_argument("node " + std::to_string(n) + " is not failed");
        Recovery rec;
        rec.node = n;
        Node& node = *nodes_[n];
        for (PartitionId p = 0; p < original_placement_.partitions(); ++p) {
            if (!original_placement_.hosts(p, n)) continue;
            node.store().load_partition(p, Role::kBackup);
            node.store().mark_catching_up(p, true);
            placement_.add_backup(p, n);
            rec.partitions.push_back(p);
        }
        alive_[n] = true;
        net_->set_alive(n, true);
        node.store().close_epoch_snapshot(manager_->closed());
        node.reset_epoch(manager_->current());
        if (!rec.partitions.empty()) recoveries_.push_back(std::move(rec));
        manager_->add_node(n);
        if (!finished_) node.restart_workers();
    }

    bool recovering() const { return !recoveries_.empty(); }
    std::size_t failures() const { return failures_; }

    // -- inspection -----------------------------------------------------------

    Node& node(NodeId n) { return *nodes_.at(n); }
    const Node& node(NodeId n) const { return *nodes_.at(n); }
    std::size_t size() const { return nodes_.size(); }
    bool alive(NodeId n) const { return alive_.at(n); }
    SimNetwork& net() { return *net_; }
    const SimNetwork& net() const { return *net_; }
    EpochManager& manager() { return *manager_; }
    const PlacementMap& placement() const { return placement_; }
    const PlacementMap& original_placement() const { return original_placement_; }
    const ClusterConfig& config() const { return cfg_; }
    SharedState& shared() { return shared_; }

    std::vector<NodeId> alive_nodes() const {
        std::vector<NodeId> out;
        for (NodeId n = 0; n < cfg_.nodes; ++n)
            if (alive_[n]) out.push_back(n);
        return out;
    }

    /// Sets a record on every replica; for scripted scenarios.
    void seed(const Key& k, LogicalTs wts, LogicalTs rts) {
        for (NodeId r : placement_.replicas(k.partition))
            nodes_[r]->store().seed(k, initial_value(k, cfg_.value_size), wts, rts);
    }

    /// (value, wts) of every record at its current primary.
    std::vector<RecordDump> primary_state() const {
        std::vector<RecordDump> out;
        for (PartitionId p = 0; p < placement_.partitions(); ++p) {
            auto part = nodes_[placement_.primary(p)]->store().dump_partition(p);
            out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
        }
        return out;
    }

    /// Every replica of every partition holds the same (value, wts) as its primary.
    bool replicas_converged(std::string* why = nullptr) const {
        for (PartitionId p = 0; p < placement_.partitions(); ++p) {
            const auto expect = nodes_[placement_.primary(p)]->store().dump_partition(p);
            for (NodeId b : placement_.backups(p)) {
                const auto& s = nodes_[b]->store();
                if (!s.readable(p)) {
                    if (why) *why = "partition " + std::to_string(p) + " still catching up on node " + std::to_string(b);
                    return false;
                }
                const auto got = s.dump_partition(p);
                if (got != expect) {
                    if (why) {
                        for (std::size_t i = 0; i < got.size(); ++i)
                            if (!(got[i] == expect[i])) {
                                *why = "replica of " + to_string(got[i].key) + " on node " + std::to_string(b) +
                                       " has wts " + std::to_string(got[i].wts.value) + ", primary has " +
                                       std::to_string(expect[i].wts.value);
                                break;
                            }
                    }
                    return false;
                }
            }
        }
        return true;
    }

    /// Merged metrics of all nodes plus the network's message counters.
    Metrics metrics() const {
        Metrics m;
        for (const auto& n : nodes_) m.merge(n->metrics());
        m.messages = net_->counters();
        return m;
    }

    /// Committed transactions in (cts, seq, tid) order plus the final primary state.
    History history() const {
        History h;
        for (const auto& n : nodes_) {
            const auto& part = n->history();
            h.txns.insert(h.txns.end(), part.begin(), part.end());
        }
        std::sort(h.txns.begin(), h.txns.end(), [](const HistoryRecord& a, const HistoryRecord& b) {
            if (a.cts != b.cts) return a.cts < b.cts;
            return a.seq != b.seq ? a.seq < b.seq : a.tid < b.tid;
        });
        for (auto& r : primary_state())
            if (r.wts > LogicalTs{0}) h.final_state[r.key] = FinalRecord{std::move(r.value), r.wts};
        h.has_final_state = true;
        return h;
    }

   private:
    struct Recovery {
        NodeId node = 0;
        std::vector<PartitionId> partitions;
        std::size_t installed = 0;
        bool copy_in_flight = false;
    };

    void epoch_closed(Epoch e) {
        start_recovery_copies();
        if (on_epoch_close) on_epoch_close(e);
    }

    void start_recovery_copies() {
        for (auto& r : recoveries_) {
            if (r.copy_in_flight) continue;
            r.copy_in_flight = true;
            r.installed = 0;
            const NodeId dst = r.node;
            for (PartitionId p : r.partitions) {
                const NodeId src = placement_.primary(p);
                auto copy = std::make_shared<std::vector<Record>>(nodes_[src]->store().copy_partition(p));
                const auto gen = net_->generation();
                const SimTime delay = net_->config().latency.base(src, dst);
                net_->schedule(delay, [this, dst, p, copy, gen] {
                    if (gen != net_->generation() || !alive_[dst]) return;
                    install_copy(dst, p, *copy);
                });
            }
        }
    }

    void install_copy(NodeId dst, PartitionId p, const std::vector<Record>& copy) {
        nodes_[dst]->store().install_copy(p, copy);
        for (auto it = recoveries_.begin(); it != recoveries_.end(); ++it) {
            if (it->node != dst) continue;
            if (++it->installed == it->partitions.size()) recoveries_.erase(it);
            return;
        }
    }

    ClusterConfig cfg_;
    StoreConfig store_cfg_;
    std::unique_ptr<SimNetwork> net_;
    std::unique_ptr<SimNodeEnv> env_;
    PlacementMap original_placement_;
    PlacementMap placement_;
    SharedState shared_;
    std::vector<bool> alive_;
    std::vector<std::unique_ptr<Node>> nodes_;
    std::unique_ptr<EpochManager> manager_;
    std::vector<Recovery> recoveries_;
    std::size_t failures_ = 0;
    bool started_ = false;
    bool finished_ = false;
    bool timed_out_ = false;
};

}  // namespace scar
