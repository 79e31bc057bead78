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

// Experiment driver: runs a configured cluster, checks recorded histories
// and formats the results as tables and CSV.

#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "scar/cluster.hpp"
#include "scar/oracle.hpp"
#include "scar/socket_transport.hpp"

namespace scar {

enum class TransportMode : std::uint8_t { kSim, kSocket };

inline TransportMode parse_transport(std::string_view s) {
    if (s == "sim") return TransportMode::kSim;
    if (s == "socket") return TransportMode::kSocket;
    throw std::invalid_argument("unknown transport: " + std::string(s));
}

struct ExperimentSpec {
    std::string label = "run";
    ClusterConfig cluster;
    TransportMode transport = TransportMode::kSim;
    bool record_history = false;
    std::string history_path;  // written when non-empty and history is recorded

    void validate() const {
        if (cluster.nodes == 0) throw std::invalid_argument("node count must be positive");
        if (cluster.replicas == 0 || cluster.replicas > cluster.nodes)
            throw std::invalid_argument("replicas must be between 1 and the node count");
        if (cluster.txn_budget == 0) throw std::invalid_argument("transaction budget must be positive");
        if (cluster.engine.workers == 0) throw std::invalid_argument("worker count must be positive");
        for (const auto& f : cluster.failures)
            if (f.node >= cluster.nodes) throw std::invalid_argument("failure schedule names an unknown node");
        if (transport == TransportMode::kSocket && !cluster.failures.empty())
            throw std::invalid_argument("failure schedules need the simulated transport");
        if (transport == TransportMode::kSocket && cluster.warmup_txns > 0)
            throw std::invalid_argument("warm-up needs the simulated transport");
    }
};

struct OracleReport {
    bool ran = false;
    bool pass = true;
    std::string details;
};

struct ExperimentResult {
    ExperimentSpec spec;
    Metrics metrics;
    bool timed_out = false;
    bool converged = true;
    std::string convergence_details;
    OracleReport oracle;
    std::size_t failures = 0;

    bool valid() const { return !timed_out && converged && oracle.pass; }
};

/// Runs the checks that apply to the isolation levels present in `h`.
inline OracleReport check_history(const History& h) {
    OracleReport rep;
    rep.ran = true;
    bool rc = false, si = false;
    for (const auto& t : h.txns) {
        rc = rc || t.level == HistoryLevel::kReadCommitted;
        si = si || t.level == HistoryLevel::kSnapshot;
    }
    auto fail = [&](const char* which, const CheckResult& r) {
        rep.pass = false;
        rep.details = std::string(which) + ": " + r.details;
    };
    if (rc) {
        if (auto r = check_read_committed(h); !r) fail("read committed", r);
    } else if (si) {
        if (auto r = check_si(h); !r) fail("snapshot isolation", r);
        else if (auto s = check_serializable(h, ReadScope::kSerializableOnly); !s) fail("flagged serializable", s);
    } else {
        if (auto r = check_serializable(h); !r) fail("serializable", r);
    }
    return rep;
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    ExperimentResult out;
    out.spec = spec;
    ClusterConfig cfg = spec.cluster;
    cfg.engine.record_history = spec.record_history;

    auto finish_history = [&](const History& h) {
        if (!spec.history_path.empty()) {
            std::ofstream f(spec.history_path);
            if (!f) throw std::runtime_error("cannot write history file: " + spec.history_path);
            write_history(f, h);
        }
        out.oracle = check_history(h);
    };

    if (spec.transport == TransportMode::kSim) {
        Cluster c(cfg);
        c.run();
        out.metrics = c.metrics();
        out.timed_out = c.timed_out();
        out.converged = c.replicas_converged(&out.convergence_details);
        out.failures = c.failures();
        if (spec.record_history) finish_history(c.history());
    } else {
        SocketCluster c(cfg);
        c.run();
        out.metrics = c.metrics();
        out.timed_out = c.timed_out();
        out.converged = c.replicas_converged();
        if (!out.converged) out.convergence_details = "replica state differs from primary";
        if (spec.record_history) finish_history(c.history());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output

namespace bench_fmt {

inline std::string num(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string toggles(const ProtocolToggles& t) {
    std::string s;
    if (t.local_read) s += "LR+";
    if (t.local_validation) s += "LV+";
    if (t.ts_sync) s += "TS+";
    if (t.plv) s += "PLV+";
    if (s.empty()) return "none";
    s.pop_back();
    return s;
}

inline double micros(SimTime t) { return static_cast<double>(t) / static_cast<double>(kMicrosecond); }

}  // namespace bench_fmt

inline std::string csv_header() {
    std::string h =
        "label,protocol,isolation,toggles,workload,skew,cross,nodes,replicas,seed,attempted,committed,aborted";
    for (std::size_t r = 1; r < kAbortReasonCount; ++r) h += ",abort_" + std::string(to_string(static_cast<AbortReason>(r)));
    h += ",rolled_back,sim_ms,throughput,p50_us,p90_us,p99_us";
    for (auto name : kMsgKindNames) h += "," + std::string(name);
    h += ",validate_req_per_txn,reads_local_primary,reads_local_backup,reads_remote,backup_local_validation_rate"
         ",si_committed,si_flagged_pct,validation_rounds_per_txn,failures,converged,oracle";
    return h;
}

/// One CSV line. Only simulated quantities appear, so a simulated run with a
/// fixed seed always yields the same bytes.
inline std::string csv_row(const ExperimentResult& r) {
    using bench_fmt::num;
    const auto& c = r.spec.cluster;
    const auto& m = r.metrics;
    std::ostringstream os;
    os << r.spec.label << ',' << to_string(c.engine.protocol) << ',' << to_string(c.engine.isolation) << ','
       << bench_fmt::toggles(c.engine.toggles) << ',' << to_string(c.workload.kind) << ',' << num(c.workload.skew(), 3)
       << ',' << num(c.workload.cross(), 3) << ',' << c.nodes << ',' << c.replicas << ',' << c.seed << ','
       << m.attempted << ',' << m.committed << ',' << m.aborted();
    for (std::size_t i = 1; i < kAbortReasonCount; ++i) os << ',' << m.aborts[i];
    os << ',' << m.rolled_back << ',' << num(static_cast<double>(m.duration) / static_cast<double>(kMillisecond), 3)
       << ',' << num(m.throughput(), 1) << ',' << num(bench_fmt::micros(m.latency_percentile(50)), 1) << ','
       << num(bench_fmt::micros(m.latency_percentile(90)), 1) << ','
       << num(bench_fmt::micros(m.latency_percentile(99)), 1);
    for (std::size_t i = 0; i < kMsgKindCount; ++i) os << ',' << m.messages[static_cast<MsgKind>(i)];
    const double rounds = m.committed == 0 ? 0.0 : static_cast<double>(m.validation_rounds) / static_cast<double>(m.committed);
    os << ',' << num(m.per_committed(MsgKind::kValidateReq), 6) << ',' << m.reads_local_primary << ','
       << m.reads_local_backup << ',' << m.reads_remote << ',' << num(m.backup_local_validation_rate(), 6) << ','
       << m.si_committed << ',' << num(100.0 * m.si_flagged_fraction(), 3) << ',' << num(rounds, 6) << ','
       << r.failures << ',' << (r.converged ? 1 : 0) << ','
       << (!r.oracle.ran ? "skipped" : r.oracle.pass ? "pass" : "fail");
    return os.str();
}

inline void write_csv(std::ostream& os, const std::vector<ExperimentResult>& results) {
    os << csv_header() << '\n';
    for (const auto& r : results) os << csv_row(r) << '\n';
}

/// Human-readable summary, one block per run.
inline void print_table(std::ostream& os, const std::vector<ExperimentResult>& results) {
    using bench_fmt::num;
    os << std::left << std::setw(18) << "label" << std::setw(7) << "proto" << std::setw(4) << "iso" << std::right
       << std::setw(12) << "txn/s" << std::setw(9) << "abort%" << std::setw(10) << "p50us" << std::setw(10) << "p99us"
       << std::setw(11) << "read_req" << std::setw(12) << "valid/txn" << std::setw(9) << "SI-SR%" << "  status\n";
    for (const auto& r : results) {
        const auto& m = r.metrics;
        std::string status = r.valid() ? "ok" : r.timed_out ? "timed out" : !r.converged ? "diverged" : "oracle failed";
        os << std::left << std::setw(18) << r.spec.label << std::setw(7) << to_string(r.spec.cluster.engine.protocol)
           << std::setw(4) << to_string(r.spec.cluster.engine.isolation) << std::right << std::setw(12)
           << num(m.throughput(), 0) << std::setw(9) << num(100.0 * m.abort_rate(), 2) << std::setw(10)
           << num(bench_fmt::micros(m.latency_percentile(50)), 0) << std::setw(10)
           << num(bench_fmt::micros(m.latency_percentile(99)), 0) << std::setw(11) << m.messages[MsgKind::kReadReq]
           << std::setw(12) << num(m.per_committed(MsgKind::kValidateReq), 4) << std::setw(9)
           << (m.si_committed ? num(100.0 * m.si_flagged_fraction(), 1) : std::string("-")) << "  " << status << '\n';
    }
    os << "aborts by reason:\n";
    for (const auto& r : results) {
        os << "  " << std::left << std::setw(16) << r.spec.label << std::right;
        for (std::size_t i = 1; i < kAbortReasonCount; ++i)
            os << ' ' << to_string(static_cast<AbortReason>(i)) << '=' << r.metrics.aborts[i];
        os << " rolled_back=" << r.metrics.rolled_back << '\n';
        if (!r.oracle.pass) os << "    oracle: " << r.oracle.details << '\n';
        if (!r.converged) os << "    convergence: " << r.convergence_details << '\n';
    }
}

/// Latency CDF: `points` evenly spaced percentiles, as "percentile,latency_us".
inline void write_latency_cdf(std::ostream& os, const Metrics& m, std::size_t points = 100) {
    os << "percentile,latency_us\n";
    for (std::size_t i = 1; i <= points; ++i) {
        const double p = 100.0 * static_cast<double>(i) / static_cast<double>(points);
        os << bench_fmt::num(p, 2) << ',' << bench_fmt::num(bench_fmt::micros(m.latency_percentile(p)), 1) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Experiment matrices

/// base, +LR, +LR+LV, +LR+LV+TS and, for SCAR under SI, +PLV.
inline std::vector<ExperimentSpec> factor_specs(const ExperimentSpec& base) {
    std::vector<ExperimentSpec> out;
    auto step = [&](const char* label, bool lr, bool lv, bool ts, bool plv) {
        ExperimentSpec s = base;
        s.label = label;
        s.cluster.engine.toggles = ProtocolToggles{lr, lv, ts, plv};
        s.history_path.clear();
        out.push_back(std::move(s));
    };
    step("base", false, false, false, false);
    step("+LR", true, false, false, false);
    step("+LR+LV", true, true, false, false);
    step("+LR+LV+TS", true, true, true, false);
    if (base.cluster.engine.protocol == Protocol::kScar && base.cluster.engine.isolation == Isolation::kSnapshot)
        step("+LR+LV+TS+PLV", true, true, true, true);
    return out;
}

inline std::vector<ExperimentResult> factor_analysis(const ExperimentSpec& base) {
    std::vector<ExperimentResult> out;
    for (const auto& s : factor_specs(base)) out.push_back(run_experiment(s));
    return out;
}

/// Message counts and throughput of each factor step relative to the first.
inline void print_factor_table(std::ostream& os, const std::vector<ExperimentResult>& steps) {
    using bench_fmt::num;
    if (steps.empty()) return;
    const auto& b = steps.front().metrics;
    auto rel = [](double v, double base) { return base == 0.0 ? std::string("-") : num(v / base, 3); };
    os << std::left << std::setw(16) << "step" << std::right << std::setw(12) << "txn/s" << std::setw(9) << "x tput"
       << std::setw(11) << "read_req" << std::setw(9) << "x read" << std::setw(13) << "validate_req" << std::setw(9)
       << "x valid" << std::setw(12) << "rounds/txn\n";
    for (const auto& r : steps) {
        const auto& m = r.metrics;
        const double rounds =
            m.committed == 0 ? 0.0 : static_cast<double>(m.validation_rounds) / static_cast<double>(m.committed);
        os << std::left << std::setw(16) << r.spec.label << std::right << std::setw(12) << num(m.throughput(), 0)
           << std::setw(9) << rel(m.throughput(), b.throughput()) << std::setw(11) << m.messages[MsgKind::kReadReq]
           << std::setw(9)
           << rel(static_cast<double>(m.messages[MsgKind::kReadReq]), static_cast<double>(b.messages[MsgKind::kReadReq]))
           << std::setw(13) << m.messages[MsgKind::kValidateReq] << std::setw(9)
           << rel(static_cast<double>(m.messages[MsgKind::kValidateReq]),
                  static_cast<double>(b.messages[MsgKind::kValidateReq]))
           << std::setw(11) << num(rounds, 3) << '\n';
    }
}

/// The base spec with replica counts 1..nodes.
inline std::vector<ExperimentSpec> sweep_specs(const ExperimentSpec& base) {
    std::vector<ExperimentSpec> out;
    for (std::size_t r = 1; r <= base.cluster.nodes; ++r) {
        ExperimentSpec s = base;
        s.cluster.replicas = r;
        s.label = "replicas=" + std::to_string(r);
        s.history_path.clear();
        s.cluster.failures.clear();
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<ExperimentResult> sweep_replicas(const ExperimentSpec& base) {
    std::vector<ExperimentResult> out;
    for (const auto& s : sweep_specs(base)) out.push_back(run_experiment(s));
    return out;
}

}  // namespace scar
