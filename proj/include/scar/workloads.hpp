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
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "scar/txn.hpp"
#include "scar/types.hpp"

namespace scar {

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Derives an independent stream seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Zipf

/// Draws ranks in [0, n) with P(k) proportional to 1/(k+1)^theta, using the
/// rejection-free generator of Gray et al. ("Quickly generating billion-record
/// synthetic databases"). theta == 1 has no closed form there and falls back
/// to inverse-CDF lookup.
class ZipfGenerator {
   public:
    ZipfGenerator() = default;

    ZipfGenerator(std::uint64_t n, double theta) : n_(n), theta_(theta) {
        if (n == 0) throw std::invalid_argument("zipf range must be non-empty");
        if (theta < 0) throw std::invalid_argument("zipf theta must be non-negative");
        zetan_ = zeta(n, theta);
        half_pow_ = std::pow(0.5, theta);
        if (std::abs(theta - 1.0) < 1e-9) {
            cdf_.resize(n);
            double acc = 0;
            for (std::uint64_t k = 0; k < n; ++k) {
                acc += 1.0 / static_cast<double>(k + 1);
                cdf_[k] = acc / zetan_;
            }
        } else if (n >= 3) {
            alpha_ = 1.0 / (1.0 - theta);
            eta_ = (1.0 - std::pow(2.0 / static_cast<double>(n), 1.0 - theta)) / (1.0 - (1.0 + half_pow_) / zetan_);
        }
    }

    /// Generalized harmonic number H(n, theta).
    static double zeta(std::uint64_t n, double theta) {
        double sum = 0;
        for (std::uint64_t i = 1; i <= n; ++i) sum += 1.0 / std::pow(static_cast<double>(i), theta);
        return sum;
    }

    std::uint64_t operator()(Rng& rng) const {
        if (n_ <= 1) return 0;
        const double u = uniform01(rng);
        if (!cdf_.empty()) {
            auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
            return std::min<std::uint64_t>(static_cast<std::uint64_t>(it - cdf_.begin()), n_ - 1);
        }
        const double uz = u * zetan_;
        if (uz < 1.0) return 0;
        if (uz < 1.0 + half_pow_) return 1;
        const double v = static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_);
        return std::min<std::uint64_t>(static_cast<std::uint64_t>(std::max(v, 0.0)), n_ - 1);
    }

    std::uint64_t n() const { return n_; }
    double theta() const { return theta_; }
    double zetan() const { return zetan_; }

   private:
    std::uint64_t n_ = 1;
    double theta_ = 0;
    double zetan_ = 1;
    double half_pow_ = 1;
    double alpha_ = 0;
    double eta_ = 0;
    std::vector<double> cdf_;
};

/// Convenience wrapper matching the one-shot form zipf_next(theta, n, rng).
inline std::uint64_t zipf_next(double theta, std::uint64_t n, Rng& rng) { return ZipfGenerator(n, theta)(rng); }

// ---------------------------------------------------------------------------
// Configs

enum class WorkloadKind : std::uint8_t { kYcsb, kRetwis, kNewOrder };
enum class ItemMode : std::uint8_t { kReplicated, kPartitioned };

inline std::string_view to_string(WorkloadKind k) {
    switch (k) {
        case WorkloadKind::kYcsb: return "ycsb";
        case WorkloadKind::kRetwis: return "retwis";
        case WorkloadKind::kNewOrder: return "tpcc";
    }
    return "?";
}

inline WorkloadKind parse_workload(std::string_view s) {
    if (s == "ycsb") return WorkloadKind::kYcsb;
    if (s == "retwis") return WorkloadKind::kRetwis;
    if (s == "tpcc" || s == "neworder") return WorkloadKind::kNewOrder;
    throw std::invalid_argument("unknown workload: " + std::string(s));
}

struct YcsbConfig {
    std::uint32_t ops_per_txn = 4;
    double read_ratio = 0.8;
    double skew = 0.0;
    double cross_partition_ratio = 0.0;
    std::uint64_t rows_per_partition = 10'000;
    bool zipf_updates = false;  // all operations Zipf-keyed, not only reads
};

struct RetwisConfig {
    double mix = 0.8;  // fraction of GetTimeline
    std::uint32_t timeline_min = 1;
    std::uint32_t timeline_max = 10;
    std::uint32_t post_updates = 3;  // read-modify-write operations
    std::uint32_t post_writes = 2;   // blind writes
    double skew = 0.0;               // GetTimeline reads
    double cross_partition_ratio = 0.0;
    std::uint64_t rows_per_partition = 10'000;
};

struct NewOrderConfig {
    std::uint32_t districts = 10;
    std::uint32_t customers_per_district = 30;
    std::uint32_t items = 1000;
    std::uint32_t min_lines = 5;
    std::uint32_t max_lines = 15;
    double remote_probability = 0.10;
    ItemMode item_mode = ItemMode::kReplicated;

    // Row layout inside a warehouse partition.
    std::uint64_t warehouse_row() const { return 0; }
    std::uint64_t district_row(std::uint32_t d) const { return 1 + d; }
    std::uint64_t customer_row(std::uint32_t d, std::uint32_t c) const {
        return 1 + districts + static_cast<std::uint64_t>(d) * customers_per_district + c;
    }
    std::uint64_t item_row(std::uint32_t i) const {
        return 1 + districts + static_cast<std::uint64_t>(districts) * customers_per_district + i;
    }
    std::uint64_t stock_row(std::uint32_t i) const { return item_row(items) + i; }
    std::uint64_t rows_per_partition() const { return stock_row(items); }
};

struct WorkloadSpec {
    WorkloadKind kind = WorkloadKind::kYcsb;
    YcsbConfig ycsb;
    RetwisConfig retwis;
    NewOrderConfig tpcc;

    std::uint64_t rows_per_partition() const {
        switch (kind) {
            case WorkloadKind::kYcsb: return ycsb.rows_per_partition;
            case WorkloadKind::kRetwis: return retwis.rows_per_partition;
            case WorkloadKind::kNewOrder: return tpcc.rows_per_partition();
        }
        return 0;
    }

    double skew() const {
        switch (kind) {
            case WorkloadKind::kYcsb: return ycsb.skew;
            case WorkloadKind::kRetwis: return retwis.skew;
            case WorkloadKind::kNewOrder: return 0.0;
        }
        return 0.0;
    }
    /// Probability that a transaction touches another partition.
    double cross() const {
        switch (kind) {
            case WorkloadKind::kYcsb: return ycsb.cross_partition_ratio;
            case WorkloadKind::kRetwis: return retwis.cross_partition_ratio;
            case WorkloadKind::kNewOrder: return tpcc.remote_probability;
        }
        return 0.0;
    }

    void set_skew(double s) { ycsb.skew = retwis.skew = s; }
    void set_cross(double c) { ycsb.cross_partition_ratio = retwis.cross_partition_ratio = c; }
    void set_rows(std::uint64_t r) { ycsb.rows_per_partition = retwis.rows_per_partition = r; }
};

/// Text config: one `key=value` per line, '#' comments. Keys: workload, skew,
/// cross_ratio, ops, read_ratio, mix, rows, warehouses, item_mode, zipf_updates,
/// items, customers, remote_probability. Returns the warehouse count when set.
inline std::optional<std::uint32_t> parse_workload_config(std::istream& in, WorkloadSpec& spec) {
    std::optional<std::uint32_t> warehouses;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("workload config: expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "workload") spec.kind = parse_workload(val);
        else if (key == "skew") spec.set_skew(std::stod(val));
        else if (key == "cross_ratio") spec.set_cross(std::stod(val));
        else if (key == "ops") spec.ycsb.ops_per_txn = static_cast<std::uint32_t>(std::stoul(val));
        else if (key == "read_ratio") spec.ycsb.read_ratio = std::stod(val);
        else if (key == "mix") spec.retwis.mix = std::stod(val);
        else if (key == "rows") spec.set_rows(std::stoull(val));
        else if (key == "warehouses") warehouses = static_cast<std::uint32_t>(std::stoul(val));
        else if (key == "item_mode") {
            if (val == "replicated") spec.tpcc.item_mode = ItemMode::kReplicated;
            else if (val == "partitioned") spec.tpcc.item_mode = ItemMode::kPartitioned;
            else throw std::invalid_argument("item_mode must be replicated or partitioned");
        } else if (key == "zipf_updates") spec.ycsb.zipf_updates = (val == "1" || val == "true");
        else if (key == "items") spec.tpcc.items = static_cast<std::uint32_t>(std::stoul(val));
        else if (key == "customers") spec.tpcc.customers_per_district = static_cast<std::uint32_t>(std::stoul(val));
        else if (key == "remote_probability") spec.tpcc.remote_probability = std::stod(val);
        else throw std::invalid_argument("workload config: unknown key '" + key + "'");
    }
    for (double r : {spec.ycsb.read_ratio, spec.ycsb.cross_partition_ratio, spec.retwis.mix,
                     spec.retwis.cross_partition_ratio, spec.tpcc.remote_probability})
        if (r < 0.0 || r > 1.0) throw std::invalid_argument("workload config: ratios must be in [0, 1]");
    return warehouses;
}

// ---------------------------------------------------------------------------
// Generators

/// Per-worker transaction stream. Same seed, same stream.
class WorkloadGenerator {
   public:
    WorkloadGenerator(const WorkloadSpec& spec, std::size_t partitions, PartitionId home, std::uint64_t seed)
        : spec_(spec), partitions_(partitions), home_(home), rng_(seed) {
        if (partitions == 0) throw std::invalid_argument("no partitions");
        switch (spec.kind) {
            case WorkloadKind::kYcsb:
                zipf_ = ZipfGenerator(spec.ycsb.rows_per_partition, spec.ycsb.skew);
                break;
            case WorkloadKind::kRetwis:
                zipf_ = ZipfGenerator(spec.retwis.rows_per_partition, spec.retwis.skew);
                break;
            case WorkloadKind::kNewOrder:
                break;
        }
    }

    TxnProgram next() {
        switch (spec_.kind) {
            case WorkloadKind::kYcsb: return gen_ycsb_txn();
            case WorkloadKind::kRetwis: return gen_retwis_txn();
            case WorkloadKind::kNewOrder: return gen_neworder_txn();
        }
        return {};
    }

    TxnProgram gen_ycsb_txn() {
        const auto& c = spec_.ycsb;
        TxnProgram p;
        p.type = "ycsb";
        auto parts = pick_partitions(c.ops_per_txn, c.cross_partition_ratio);
        for (std::uint32_t i = 0; i < c.ops_per_txn; ++i) {
            const bool read = bernoulli(rng_, c.read_ratio);
            const std::uint64_t row =
                (read || c.zipf_updates) ? zipf_(rng_) : uniform_below(rng_, c.rows_per_partition);
            p.ops.push_back(Op{read ? OpKind::kRead : OpKind::kUpdate, Key{parts[i], row}});
        }
        return p;
    }

    TxnProgram gen_retwis_txn() {
        const auto& c = spec_.retwis;
        TxnProgram p;
        if (bernoulli(rng_, c.mix)) {
            p.type = "get_timeline";
            const auto n = static_cast<std::uint32_t>(c.timeline_min + uniform_below(rng_, c.timeline_max - c.timeline_min + 1));
            auto parts = pick_partitions(n, c.cross_partition_ratio);
            for (std::uint32_t i = 0; i < n; ++i) p.ops.push_back(Op{OpKind::kRead, Key{parts[i], zipf_(rng_)}});
        } else {
            p.type = "post_tweet";
            const std::uint32_t n = c.post_updates + c.post_writes;
            auto parts = pick_partitions(n, c.cross_partition_ratio);
            for (std::uint32_t i = 0; i < n; ++i)
                p.ops.push_back(Op{i < c.post_updates ? OpKind::kUpdate : OpKind::kWrite,
                                   Key{parts[i], uniform_below(rng_, c.rows_per_partition)}});
        }
        return p;
    }

    TxnProgram gen_neworder_txn() {
        const auto& c = spec_.tpcc;
        TxnProgram p;
        p.type = "new_order";
        const PartitionId w = home_;
        const auto d = static_cast<std::uint32_t>(uniform_below(rng_, c.districts));
        const auto cust = static_cast<std::uint32_t>(uniform_below(rng_, c.customers_per_district));
        p.ops.push_back(Op{OpKind::kRead, Key{w, c.warehouse_row()}});
        p.ops.push_back(Op{OpKind::kUpdate, Key{w, c.district_row(d)}});
        p.ops.push_back(Op{OpKind::kRead, Key{w, c.customer_row(d, cust)}});

        PartitionId supply = w;
        if (partitions_ > 1 && bernoulli(rng_, c.remote_probability)) supply = other_partition();
        const auto lines = static_cast<std::uint32_t>(c.min_lines + uniform_below(rng_, c.max_lines - c.min_lines + 1));
        for (std::uint32_t l = 0; l < lines; ++l) {
            const auto item = static_cast<std::uint32_t>(uniform_below(rng_, c.items));
            const PartitionId item_part =
                c.item_mode == ItemMode::kReplicated ? w : static_cast<PartitionId>(item % partitions_);
            p.ops.push_back(Op{OpKind::kRead, Key{item_part, c.item_row(item)}});
            p.ops.push_back(Op{OpKind::kUpdate, Key{supply, c.stock_row(item)}});
        }
        return p;
    }

    Rng& rng() { return rng_; }
    PartitionId home() const { return home_; }

   private:
    PartitionId other_partition() {
        auto p = static_cast<PartitionId>(uniform_below(rng_, partitions_ - 1));
        return p >= home_ ? p + 1 : p;
    }

    /// Home partition for every op, unless the transaction is drawn as
    /// cross-partition: then each op lands on a random other partition with
    /// probability 1/2, and at least one op does.
    std::vector<PartitionId> pick_partitions(std::uint32_t n, double cross_ratio) {
        std::vector<PartitionId> parts(n, home_);
        if (n == 0 || partitions_ < 2 || !bernoulli(rng_, cross_ratio)) return parts;
        bool any = false;
        for (auto& p : parts)
            if (bernoulli(rng_, 0.5)) {
                p = other_partition();
                any = true;
            }
        if (!any) parts[uniform_below(rng_, n)] = other_partition();
        return parts;
    }

    WorkloadSpec spec_;
    std::size_t partitions_;
    PartitionId home_;
    Rng rng_;
    ZipfGenerator zipf_;
};

}  // namespace scar
