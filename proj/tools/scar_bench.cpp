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

// scar_bench: run | factor | sweep | check

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "scar/scar.hpp"

namespace {

using namespace scar;

struct Options {
    std::string protocol = "scar";
    std::string isolation = "SR";
    std::string workload = "ycsb";
    std::string config_file;
    double skew = 0.0;
    double cross = 0.1;
    std::size_t nodes = 4;
    std::size_t replicas = 3;
    std::size_t workers = 4;
    std::size_t partitions = 0;
    std::uint64_t rows = 10'000;
    std::uint64_t txns = 50'000;
    std::uint64_t warmup = 0;
    std::size_t value_size = 100;
    double epoch_ms = 10.0;
    std::uint64_t seed = 1;
    std::string latency_profile;
    double jitter = 0.2;
    std::string history_file;
    bool record_history = false;
    std::vector<std::string> failures;
    std::string transport = "sim";
    bool no_lr = false, no_lv = false, no_ts = false, no_plv = false;
    bool fifo = false;
    std::string csv_file;
    std::string cdf_file;

    CLI::Option* epoch_opt = nullptr;
};

void add_common(CLI::App& app, Options& o) {
    app.add_option("--protocol", o.protocol, "scar, occ, s2pl or rc")
        ->check(CLI::IsMember({"scar", "occ", "s2pl", "rc"}))
        ->capture_default_str();
    app.add_option("--isolation", o.isolation, "SR or SI")->check(CLI::IsMember({"SR", "SI", "sr", "si"}))->capture_default_str();
    app.add_option("--workload", o.workload, "ycsb, retwis or tpcc")
        ->check(CLI::IsMember({"ycsb", "retwis", "tpcc", "neworder"}))
        ->capture_default_str();
    app.add_option("--config", o.config_file, "workload config file (key=value lines)")->check(CLI::ExistingFile);
    app.add_option("--skew", o.skew, "Zipf theta")->check(CLI::Range(0.0, 10.0))->capture_default_str();
    app.add_option("--cross", o.cross, "cross-partition ratio")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    app.add_option("--nodes", o.nodes, "node count")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--replicas", o.replicas, "copies of each partition")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--workers", o.workers, "worker coroutines per node")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--partitions", o.partitions, "partition count (0: one per worker)")->capture_default_str();
    app.add_option("--rows", o.rows, "rows per partition (ycsb, retwis)")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--txns", o.txns, "transaction budget")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--warmup", o.warmup, "transactions run before measuring (sim only)")->capture_default_str();
    app.add_option("--value-size", o.value_size, "bytes per value")->capture_default_str();
    o.epoch_opt = app.add_option("--epoch-ms", o.epoch_ms, "group commit interval (default 10, 1000 with a latency profile)")
                      ->check(CLI::PositiveNumber);
    app.add_option("--seed", o.seed, "random seed")->capture_default_str();
    app.add_option("--latency-profile", o.latency_profile, "one-way latency matrix in ms")->check(CLI::ExistingFile);
    app.add_option("--jitter", o.jitter, "latency jitter as a fraction of the base latency")
        ->check(CLI::Range(0.0, 10.0))
        ->capture_default_str();
    app.add_option("--record-history", o.history_file, "record and check the history; write it to FILE if given")
        ->expected(0, 1)
        ->each([&o](const std::string&) { o.record_history = true; })
        ->trigger_on_parse();
    app.add_flag_callback("--check-history", [&o] { o.record_history = true; }, "record and check the history");
    app.add_option("--failure-at", o.failures, "TIME_MS:fail|recover:NODE (repeatable, sim only)");
    app.add_option("--transport", o.transport, "sim or socket")->check(CLI::IsMember({"sim", "socket"}))->capture_default_str();
    app.add_flag("--no-lr", o.no_lr, "disable reads from local backups");
    app.add_flag("--no-lv", o.no_lv, "disable local read validation");
    app.add_flag("--no-ts", o.no_ts, "disable timestamp sync to backups");
    app.add_flag("--no-plv", o.no_plv, "disable parallel locking and validation (SI)");
    app.add_flag("--fifo", o.fifo, "force per-link FIFO delivery");
    app.add_option("--csv", o.csv_file, "write CSV here (default: stdout after the table)");
    app.add_option("--cdf", o.cdf_file, "write the commit latency CDF here");
}

FailureEvent parse_failure(const std::string& s) {
    const auto a = s.find(':');
    const auto b = a == std::string::npos ? a : s.find(':', a + 1);
    if (b == std::string::npos) throw std::invalid_argument("bad --failure-at '" + s + "', want TIME_MS:fail|recover:NODE");
    FailureEvent f;
    f.at = static_cast<SimTime>(std::stod(s.substr(0, a)) * static_cast<double>(kMillisecond));
    const auto what = s.substr(a + 1, b - a - 1);
    if (what == "fail") f.action = FailureEvent::Action::kFail;
    else if (what == "recover") f.action = FailureEvent::Action::kRecover;
    else throw std::invalid_argument("bad failure action '" + what + "'");
    f.node = static_cast<NodeId>(std::stoul(s.substr(b + 1)));
    return f;
}

ExperimentSpec build_spec(const Options& o) {
    ExperimentSpec spec;
    auto& c = spec.cluster;
    c.nodes = o.nodes;
    c.replicas = o.replicas;
    c.partitions = o.partitions;
    c.value_size = o.value_size;
    c.seed = o.seed;
    c.txn_budget = o.txns;
    c.warmup_txns = o.warmup;
    c.jitter = o.jitter;
    c.force_fifo = o.fifo;
    c.engine.workers = o.workers;
    c.engine.protocol = parse_protocol(o.protocol);
    c.engine.isolation = parse_isolation(o.isolation);
    c.engine.toggles = ProtocolToggles{!o.no_lr, !o.no_lv, !o.no_ts, !o.no_plv};

    auto& w = c.workload;
    w.kind = parse_workload(o.workload);
    w.set_rows(o.rows);
    w.set_skew(o.skew);
    w.set_cross(o.cross);
    if (!o.config_file.empty()) {
        std::ifstream in(o.config_file);
        if (auto wh = parse_workload_config(in, w)) c.partitions = *wh;
    }

    double epoch_ms = o.epoch_ms;
    if (!o.latency_profile.empty()) {
        c.latency = LatencyProfile::load(o.latency_profile, o.jitter);
        if (o.epoch_opt->count() == 0) epoch_ms = 1000.0;
    }
    c.epoch_interval = static_cast<SimTime>(epoch_ms * static_cast<double>(kMillisecond));
    for (const auto& f : o.failures) c.failures.push_back(parse_failure(f));

    spec.transport = parse_transport(o.transport);
    spec.record_history = o.record_history;
    spec.history_path = o.history_file;
    return spec;
}

int report(const Options& o, const std::vector<ExperimentResult>& results, bool factor) {
    if (factor) print_factor_table(std::cout, results);
    print_table(std::cout, results);
    if (o.csv_file.empty()) {
        std::cout << '\n';
        write_csv(std::cout, results);
    } else {
        std::ofstream f(o.csv_file);
        if (!f) throw std::runtime_error("cannot write " + o.csv_file);
        write_csv(f, results);
    }
    if (!o.cdf_file.empty() && !results.empty()) {
        std::ofstream f(o.cdf_file);
        if (!f) throw std::runtime_error("cannot write " + o.cdf_file);
        write_latency_cdf(f, results.back().metrics);
    }
    for (const auto& r : results)
        if (!r.valid()) {
            std::cerr << r.spec.label << ": results are not valid ("
                      << (r.timed_out ? "timed out" : !r.converged ? r.convergence_details : r.oracle.details) << ")\n";
            return 1;
        }
    return 0;
}

int check_file(const std::string& path, bool brute) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open history file: " + path);
    const History h = read_history(in);
    const OracleReport rep = check_history(h);
    std::cout << path << ": " << h.txns.size() << " transactions, " << (rep.pass ? "pass" : "FAIL: " + rep.details)
              << '\n';
    bool ok = rep.pass;
    if (brute) {
        if (h.txns.size() > kBruteForceLimit) {
            std::cout << "brute force skipped: more than " << kBruteForceLimit << " transactions\n";
        } else {
            const auto bf = brute_force_equivalent(h);
            std::cout << "brute force: " << (bf.pass ? "serializable" : "no serial order") << ", " << bf.witnesses
                      << " witness order(s)\n";
            ok = ok && bf.pass;
        }
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SCAR transaction engine benchmark"};
    app.require_subcommand(1);

    Options run_o, factor_o, sweep_o;
    auto* run = app.add_subcommand("run", "run one experiment");
    add_common(*run, run_o);
    auto* factor = app.add_subcommand("factor", "factor analysis: base, +LR, +LR+LV, +LR+LV+TS (+PLV for SI)");
    add_common(*factor, factor_o);
    auto* sweep = app.add_subcommand("sweep", "replica count from 1 to the node count");
    add_common(*sweep, sweep_o);

    std::string history;
    bool brute = false;
    auto* check = app.add_subcommand("check", "check a recorded history file");
    check->add_option("history", history, "history file")->required()->check(CLI::ExistingFile);
    check->add_flag("--brute-force", brute, "also try every serial order (at most 8 transactions)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return report(run_o, {run_experiment(build_spec(run_o))}, false);
        if (*factor) return report(factor_o, factor_analysis(build_spec(factor_o)), true);
        if (*sweep) return report(sweep_o, sweep_replicas(build_spec(sweep_o)), false);
        if (*check) return check_file(history, brute);
    } catch (const UnrecoverableFailure& e) {
        std::cerr << "unrecoverable failure: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
