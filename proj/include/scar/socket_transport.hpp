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

// Loopback TCP transport. Every node runs on its own thread with its own
// event loop; nodes talk only through framed messages over a full mesh of
// sockets. The epoch manager lives on node 0's thread.

#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <deque>
#include <memory>
#include <queue>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "scar/cluster.hpp"
#include "scar/transport.hpp"
#include "scar/wire.hpp"

namespace scar {

namespace sock {

inline void check(int rc, const char* what) {
    if (rc < 0) throw std::runtime_error(std::string(what) + ": " + std::strerror(errno));
}

class Fd {
   public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~Fd() { reset(); }
    int get() const { return fd_; }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

   private:
    int fd_ = -1;
};

inline void set_nonblocking(int fd) {
    const int flags = ::fcntl(fd, F_GETFL, 0);
    check(flags, "fcntl");
    check(::fcntl(fd, F_SETFL, flags | O_NONBLOCK), "fcntl");
}

inline void set_nodelay(int fd) {
    int one = 1;
    check(::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one), "setsockopt");
}

}  // namespace sock

/// Loopback connections between every ordered pair of nodes. `out[i][j]` is
/// the socket node i writes to reach j; `in[j]` holds what j reads from.
struct SocketMesh {
    std::vector<std::vector<sock::Fd>> out;
    std::vector<std::vector<sock::Fd>> in;

    explicit SocketMesh(std::size_t nodes) : out(nodes), in(nodes) {
        std::vector<sock::Fd> listeners;
        std::vector<sockaddr_in> addrs(nodes);
        for (std::size_t j = 0; j < nodes; ++j) {
            sock::Fd l(::socket(AF_INET, SOCK_STREAM, 0));
            sock::check(l.get(), "socket");
            sockaddr_in a{};
            a.sin_family = AF_INET;
            a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
            a.sin_port = 0;
            sock::check(::bind(l.get(), reinterpret_cast<sockaddr*>(&a), sizeof a), "bind");
            sock::check(::listen(l.get(), static_cast<int>(nodes) + 4), "listen");
            socklen_t len = sizeof a;
            sock::check(::getsockname(l.get(), reinterpret_cast<sockaddr*>(&a), &len), "getsockname");
            addrs[j] = a;
            listeners.push_back(std::move(l));
        }
        for (std::size_t i = 0; i < nodes; ++i) {
            out[i].resize(nodes);
            for (std::size_t j = 0; j < nodes; ++j) {
                if (i == j) continue;
                sock::Fd c(::socket(AF_INET, SOCK_STREAM, 0));
                sock::check(c.get(), "socket");
                sock::check(::connect(c.get(), reinterpret_cast<sockaddr*>(&addrs[j]), sizeof addrs[j]), "connect");
                sock::Fd accepted(::accept(listeners[j].get(), nullptr, nullptr));
                sock::check(accepted.get(), "accept");
                for (int fd : {c.get(), accepted.get()}) {
                    sock::set_nonblocking(fd);
                    sock::set_nodelay(fd);
                }
                out[i][j] = std::move(c);
                in[j].push_back(std::move(accepted));
            }
        }
    }
};

/// Event loop for one node thread: timers, a local queue for messages that
/// stay on this thread, and non-blocking socket I/O.
class SocketNodeEnv final : public NodeEnv {
   public:
    using Clock = std::chrono::steady_clock;

    SocketNodeEnv(NodeId self, SocketMesh& mesh, Clock::time_point origin, const LatencyProfile* latency)
        : self_(self), mesh_(mesh), origin_(origin), latency_(latency), outbuf_(mesh.out.size()),
          inbuf_(mesh.in[self].size()) {}

    void attach(NodeId id, Endpoint* ep) { endpoints_.emplace_back(id, ep); }

    SimTime now() const override {
        return static_cast<SimTime>(std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - origin_).count());
    }

    void send(Msg msg) override {
        counters_.bump(msg.kind);
        msg.send_time = now();
        const SimTime delay = latency_ ? latency_->base(msg.src, msg.dst) : 0;
        if (delay == 0) {
            route(std::move(msg));
            return;
        }
        schedule(delay, [this, m = std::move(msg)]() mutable { route(std::move(m)); });
    }

    void schedule(SimTime delay, std::function<void()> fn) override {
        timers_.push(Timer{now() + delay, next_seq_++, std::move(fn)});
    }

    const MessageCounters& counters() const { return counters_; }

    /// One loop iteration; waits at most `max_wait` for I/O.
    void poll_once(std::chrono::microseconds max_wait) {
        fire_timers();
        drain_local();

        std::vector<pollfd> fds;
        for (const auto& fd : mesh_.in[self_]) fds.push_back({fd.get(), POLLIN, 0});
        const std::size_t first_out = fds.size();
        std::vector<std::size_t> out_dst;
        for (std::size_t j = 0; j < outbuf_.size(); ++j)
            if (!outbuf_[j].empty()) {
                fds.push_back({mesh_.out[self_][j].get(), POLLOUT, 0});
                out_dst.push_back(j);
            }

        auto wait = std::chrono::duration_cast<std::chrono::nanoseconds>(max_wait);
        if (!local_.empty()) wait = std::chrono::nanoseconds(0);
        if (!timers_.empty()) {
            const SimTime t = now();
            const SimTime due = timers_.top().at;
            wait = std::min(wait, std::chrono::nanoseconds(due > t ? due - t : 0));
        }
        const timespec ts{static_cast<time_t>(wait.count() / 1'000'000'000), static_cast<long>(wait.count() % 1'000'000'000)};
        const int rc = ::ppoll(fds.data(), fds.size(), &ts, nullptr);
        if (rc < 0 && errno != EINTR) sock::check(rc, "poll");

        for (std::size_t i = 0; i < first_out && rc > 0; ++i)
            if (fds[i].revents & (POLLIN | POLLHUP)) read_from(i);
        for (std::size_t k = 0; k < out_dst.size(); ++k)
            if (fds[first_out + k].revents & POLLOUT) flush(out_dst[k]);
    }

   private:
    struct Timer {
        SimTime at;
        std::uint64_t seq;
        std::function<void()> fn;
    };
    struct Later {
        bool operator()(const Timer& a, const Timer& b) const { return a.at != b.at ? a.at > b.at : a.seq > b.seq; }
    };

    static std::size_t thread_of(NodeId n) { return n == kManagerNode ? 0 : n; }

    void route(Msg msg) {
        const std::size_t dst = thread_of(msg.dst);
        if (dst == self_) {
            local_.push_back(std::move(msg));
            return;
        }
        wire::encode(msg, outbuf_[dst]);
        flush(dst);
    }

    void flush(std::size_t dst) {
        auto& buf = outbuf_[dst];
        while (!buf.empty()) {
            const ssize_t n = ::send(mesh_.out[self_][dst].get(), buf.data(), buf.size(), MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) return;
                sock::check(-1, "send");
            }
            buf.erase(0, static_cast<std::size_t>(n));
        }
    }

    void read_from(std::size_t i) {
        char chunk[64 * 1024];
        for (;;) {
            const ssize_t n = ::recv(mesh_.in[self_][i].get(), chunk, sizeof chunk, 0);
            if (n > 0) {
                inbuf_[i].append(chunk, static_cast<std::size_t>(n));
                continue;
            }
            if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR)) break;
            if (n < 0) sock::check(-1, "recv");
            break;  // peer closed
        }
        for (auto& m : wire::drain_frames(inbuf_[i])) dispatch(std::move(m));
    }

    void fire_timers() {
        const SimTime t = now();
        while (!timers_.empty() && timers_.top().at <= t) {
            auto fn = std::move(const_cast<Timer&>(timers_.top()).fn);
            timers_.pop();
            fn();
        }
    }

    void drain_local() {
        while (!local_.empty()) {
            Msg m = std::move(local_.front());
            local_.pop_front();
            dispatch(std::move(m));
        }
    }

    void dispatch(Msg m) {
        for (auto& [id, ep] : endpoints_)
            if (id == m.dst) {
                ep->deliver(std::move(m));
                return;
            }
    }

    NodeId self_;
    SocketMesh& mesh_;
    Clock::time_point origin_;
    const LatencyProfile* latency_;
    std::vector<std::string> outbuf_;
    std::vector<std::string> inbuf_;
    std::deque<Msg> local_;
    std::priority_queue<Timer, std::vector<Timer>, Later> timers_;
    std::uint64_t next_seq_ = 0;
    std::vector<std::pair<NodeId, Endpoint*>> endpoints_;
    MessageCounters counters_;
};

/// Runs a workload with one thread per node over loopback sockets. Node
/// failures are not supported in this mode.
class SocketCluster {
   public:
    explicit SocketCluster(ClusterConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.nodes == 0) throw std::invalid_argument("need at least one node");
        if (cfg_.replicas == 0 || cfg_.replicas > cfg_.nodes)
            throw std::invalid_argument("replicas must be in [1, nodes]");
        if (!cfg_.failures.empty()) throw std::invalid_argument("failure schedules need the simulated transport");
        if (cfg_.latency && cfg_.latency->nodes() < cfg_.nodes)
            throw std::invalid_argument("latency profile has too few nodes");
        cfg_.engine.value_size = cfg_.value_size;
        placement_ = PlacementMap::round_robin(cfg_.partition_count(), cfg_.nodes, cfg_.replicas);
        store_cfg_.partitions = cfg_.partition_count();
        store_cfg_.rows_per_partition = cfg_.workload.rows_per_partition();
        store_cfg_.value_size = cfg_.value_size;
    }

    /// Runs until the budget is spent and all nodes are idle. Returns the
    /// elapsed wall-clock time.
    SimTime run() {
        mesh_ = std::make_unique<SocketMesh>(cfg_.nodes);
        SocketMesh& mesh = *mesh_;
        const auto origin = SocketNodeEnv::Clock::now();
        const LatencyProfile* lat = cfg_.latency ? &*cfg_.latency : nullptr;
        for (NodeId n = 0; n < cfg_.nodes; ++n) envs_.push_back(std::make_unique<SocketNodeEnv>(n, mesh, origin, lat));
        for (NodeId n = 0; n < cfg_.nodes; ++n) {
            nodes_.push_back(std::make_unique<Node>(n, *envs_[n], placement_, store_cfg_, cfg_.engine, shared_,
                                                    cfg_.workload, cfg_.seed));
            envs_[n]->attach(n, nodes_[n].get());
        }
        std::vector<NodeId> all;
        for (NodeId n = 0; n < cfg_.nodes; ++n) all.push_back(n);
        manager_ = std::make_unique<EpochManager>(*envs_[0], cfg_.epoch_interval, [all] { return all; });
        envs_[0]->attach(kManagerNode, manager_.get());

        shared_.budget = cfg_.txn_budget;
        std::atomic<bool> stop{false};
        std::vector<std::atomic<bool>> idle(cfg_.nodes);
        std::vector<std::thread> threads;
        for (NodeId n = 0; n < cfg_.nodes; ++n) {
            threads.emplace_back([&, n] {
                if (n == 0) manager_->start();
                nodes_[n]->start_workers();
                while (!stop.load()) {
                    envs_[n]->poll_once(std::chrono::microseconds(500));
                    idle[n].store(nodes_[n]->idle());
                }
                if (n == 0) manager_->stop();
            });
        }

        for (;;) {
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
            bool quiet = shared_.budget.load() == 0;
            for (auto& f : idle) quiet = quiet && f.load();
            const bool out_of_time = envs_[0]->now() >= cfg_.time_limit;
            if (quiet || out_of_time) {
                timed_out_ = !quiet;
                break;
            }
        }
        // Let trailing timestamp syncs land before the loops stop.
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        stop = true;
        for (auto& t : threads) t.join();
        elapsed_ = envs_[0]->now();
        return elapsed_;
    }

    bool timed_out() const { return timed_out_; }

    Metrics metrics() const {
        Metrics m;
        for (const auto& n : nodes_) m.merge(n->metrics());
        for (const auto& e : envs_) m.messages.merge(e->counters());
        return m;
    }

    History history() const {
        History h;
        for (const auto& n : nodes_) h.txns.insert(h.txns.end(), n->history().begin(), n->history().end());
        std::sort(h.txns.begin(), h.txns.end(), [](const HistoryRecord& a, const HistoryRecord& b) {
            if (a.cts != b.cts) return a.cts < b.cts;
            return a.seq != b.seq ? a.seq < b.seq : a.tid < b.tid;
        });
        for (PartitionId p = 0; p < placement_.partitions(); ++p)
            for (auto& r : nodes_[placement_.primary(p)]->store().dump_partition(p))
                if (r.wts > LogicalTs{0}) h.final_state[r.key] = FinalRecord{std::move(r.value), r.wts};
        h.has_final_state = true;
        return h;
    }

    bool replicas_converged() const {
        for (PartitionId p = 0; p < placement_.partitions(); ++p) {
            const auto expect = nodes_[placement_.primary(p)]->store().dump_partition(p);
            for (NodeId b : placement_.backups(p))
                if (nodes_[b]->store().dump_partition(p) != expect) return false;
        }
        return true;
    }

   private:
    ClusterConfig cfg_;
    PlacementMap placement_;
    StoreConfig store_cfg_;
    SharedState shared_;
    std::unique_ptr<SocketMesh> mesh_;
    std::vector<std::unique_ptr<SocketNodeEnv>> envs_;
    std::vector<std::unique_ptr<Node>> nodes_;
    std::unique_ptr<EpochManager> manager_;
    SimTime elapsed_ = 0;
    bool timed_out_ = false;
};

}  // namespace scar
