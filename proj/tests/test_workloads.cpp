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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "scar/workloads.hpp"

namespace scar {
namespace {

TEST(Zipf, ThetaZeroIsUniform) {
    constexpr std::uint64_t n = 10;
    constexpr int draws = 1'000'000;
    Rng rng(5);
    ZipfGenerator z(n, 0.0);
    std::vector<int> hist(n);
    for (int i = 0; i < draws; ++i) ++hist.at(z(rng));
    const double p = 1.0 / n;
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (auto c : hist) EXPECT_NEAR(c, draws * p, 3 * sigma);
}

TEST(Zipf, HeadFrequencyMatchesHarmonicSum) {
    constexpr std::uint64_t n = 1000;
    constexpr int draws = 1'000'000;
    for (double theta : {0.8, 1.0, 1.2}) {
        Rng rng(11);
        ZipfGenerator z(n, theta);
        int head = 0;
        for (int i = 0; i < draws; ++i) head += z(rng) == 0;
        double h = 0;
        for (std::uint64_t k = 1; k <= n; ++k) h += std::pow(static_cast<double>(k), -theta);
        EXPECT_NEAR(head / static_cast<double>(draws), 1.0 / h, 0.05 / h) << "theta " << theta;
    }
}

TEST(Zipf, SingleItem) {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(zipf_next(1.2, 1, rng), 0u);
}

TEST(Zipf, RangeAndMonotoneRanks) {
    Rng rng(3);
    ZipfGenerator z(50, 1.5);
    std::vector<int> hist(50);
    for (int i = 0; i < 200'000; ++i) {
        const auto v = z(rng);
        ASSERT_LT(v, 50u);
        ++hist[v];
    }
    EXPECT_GT(hist[0], hist[1]);
    EXPECT_GT(hist[1], hist[5]);
    EXPECT_GT(hist[5], hist[40]);
}

WorkloadSpec ycsb(double read_ratio, double cross) {
    WorkloadSpec s;
    s.kind = WorkloadKind::kYcsb;
    s.ycsb.read_ratio = read_ratio;
    s.ycsb.cross_partition_ratio = cross;
    s.ycsb.rows_per_partition = 1000;
    return s;
}

TEST(Ycsb, NoCrossStaysHome) {
    WorkloadGenerator g(ycsb(0.8, 0.0), 8, 3, 1);
    for (int i = 0; i < 1000; ++i)
        for (const auto& op : g.next().ops) EXPECT_EQ(op.key.partition, 3u);
}

TEST(Ycsb, AllCrossLeavesHome) {
    WorkloadGenerator g(ycsb(0.8, 1.0), 8, 3, 1);
    for (int i = 0; i < 1000; ++i) {
        const auto p = g.next();
        EXPECT_TRUE(std::any_of(p.ops.begin(), p.ops.end(), [](const Op& o) { return o.key.partition != 3; }));
        for (const auto& op : p.ops) EXPECT_LT(op.key.partition, 8u);
    }
}

TEST(Ycsb, ReadOnly) {
    WorkloadGenerator g(ycsb(1.0, 0.5), 4, 0, 2);
    for (int i = 0; i < 1000; ++i) EXPECT_TRUE(g.next().read_only());
}

TEST(Ycsb, DefaultMix) {
    WorkloadSpec s;
    WorkloadGenerator g(s, 4, 0, 9);
    constexpr int n = 20'000;
    int reads = 0;
    for (int i = 0; i < n; ++i) {
        const auto p = g.next();
        ASSERT_EQ(p.ops.size(), 4u);
        for (const auto& op : p.ops) {
            reads += op.kind == OpKind::kRead;
            EXPECT_NE(op.kind, OpKind::kWrite);
        }
    }
    EXPECT_NEAR(reads / static_cast<double>(n), 3.2, 0.05);
}

TEST(Ycsb, SameSeedSameStream) {
    WorkloadGenerator a(ycsb(0.5, 0.5), 4, 1, 77), b(ycsb(0.5, 0.5), 4, 1, 77);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Retwis, TimelineAndPost) {
    WorkloadSpec s;
    s.kind = WorkloadKind::kRetwis;
    s.retwis.rows_per_partition = 500;
    WorkloadGenerator g(s, 4, 2, 3);
    int timelines = 0, posts = 0;
    for (int i = 0; i < 10'000; ++i) {
        const auto p = g.next();
        if (p.type == "get_timeline") {
            ++timelines;
            EXPECT_TRUE(p.read_only());
            EXPECT_GE(p.ops.size(), 1u);
            EXPECT_LE(p.ops.size(), 10u);
        } else {
            ASSERT_EQ(p.type, "post_tweet");
            ++posts;
            ASSERT_EQ(p.ops.size(), 5u);
            const auto updates = std::count_if(p.ops.begin(), p.ops.end(), [](const Op& o) { return o.kind == OpKind::kUpdate; });
            const auto blind = std::count_if(p.ops.begin(), p.ops.end(), [](const Op& o) { return o.kind == OpKind::kWrite; });
            EXPECT_EQ(updates, 3);
            EXPECT_EQ(blind, 2);
        }
    }
    EXPECT_NEAR(timelines / 10'000.0, 0.8, 0.02);
    EXPECT_GT(posts, 0);
}

WorkloadSpec neworder(ItemMode mode, double remote) {
    WorkloadSpec s;
    s.kind = WorkloadKind::kNewOrder;
    s.tpcc.item_mode = mode;
    s.tpcc.remote_probability = remote;
    return s;
}

TEST(NewOrder, ShapeAndLocality) {
    WorkloadGenerator g(neworder(ItemMode::kReplicated, 0.0), 4, 1, 5);
    for (int i = 0; i < 1000; ++i) {
        const auto p = g.next();
        const std::size_t lines = (p.ops.size() - 3) / 2;
        EXPECT_GE(lines, 5u);
        EXPECT_LE(lines, 15u);
        EXPECT_EQ(p.ops[1].kind, OpKind::kUpdate);
        for (const auto& op : p.ops) EXPECT_EQ(op.key.partition, 1u);
    }
}

TEST(NewOrder, PartitionedItemsAreSpread) {
    WorkloadGenerator g(neworder(ItemMode::kPartitioned, 0.0), 4, 1, 5);
    const NewOrderConfig cfg;
    int remote_items = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto p = g.next();
        for (const auto& op : p.ops) {
            if (op.key.row < cfg.item_row(0) || op.key.row >= cfg.stock_row(0)) {
                EXPECT_EQ(op.key.partition, 1u);
                continue;
            }
            EXPECT_EQ(op.kind, OpKind::kRead);
            EXPECT_EQ(op.key.partition, (op.key.row - cfg.item_row(0)) % 4);
            remote_items += op.key.partition != 1;
        }
    }
    EXPECT_GT(remote_items, 0);
}

TEST(NewOrder, RemoteSupplyWarehouse) {
    WorkloadGenerator g(neworder(ItemMode::kReplicated, 1.0), 4, 0, 5);
    for (int i = 0; i < 100; ++i) {
        const auto p = g.next();
        EXPECT_NE(p.ops.back().key.partition, 0u);
    }
}

TEST(NewOrder, RowLayoutIsDisjoint) {
    const NewOrderConfig c;
    EXPECT_LT(c.district_row(c.districts - 1), c.customer_row(0, 0));
    EXPECT_LT(c.customer_row(c.districts - 1, c.customers_per_district - 1), c.item_row(0));
    EXPECT_LT(c.item_row(c.items - 1), c.stock_row(0));
    EXPECT_EQ(c.rows_per_partition(), c.stock_row(c.items));
}

TEST(WorkloadConfig, Parse) {
    std::istringstream in("# tpcc run\nworkload = tpcc\nwarehouses=8\nitem_mode=partitioned\nremote_probability=0.2\n");
    WorkloadSpec s;
    const auto wh = parse_workload_config(in, s);
    ASSERT_TRUE(wh);
    EXPECT_EQ(*wh, 8u);
    EXPECT_EQ(s.kind, WorkloadKind::kNewOrder);
    EXPECT_EQ(s.tpcc.item_mode, ItemMode::kPartitioned);
    EXPECT_DOUBLE_EQ(s.cross(), 0.2);
}

TEST(WorkloadConfig, YcsbKeys) {
    std::istringstream in("skew=1.2\ncross_ratio=0.5\nops=8\nread_ratio=0.5\nrows=64\nzipf_updates=1\n");
    WorkloadSpec s;
    EXPECT_FALSE(parse_workload_config(in, s));
    EXPECT_DOUBLE_EQ(s.skew(), 1.2);
    EXPECT_DOUBLE_EQ(s.cross(), 0.5);
    EXPECT_EQ(s.ycsb.ops_per_txn, 8u);
    EXPECT_EQ(s.rows_per_partition(), 64u);
    EXPECT_TRUE(s.ycsb.zipf_updates);
}

TEST(WorkloadConfig, Errors) {
    WorkloadSpec s;
    std::istringstream a("bogus=1\n");
    EXPECT_THROW(parse_workload_config(a, s), std::invalid_argument);
    std::istringstream b("read_ratio=1.5\n");
    EXPECT_THROW(parse_workload_config(b, s), std::invalid_argument);
    std::istringstream c("novalue\n");
    EXPECT_THROW(parse_workload_config(c, s), std::invalid_argument);
    EXPECT_THROW(parse_workload("tpch"), std::invalid_argument);
}

}  // namespace
}  // namespace scar
