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

// Comparison protocols on the same node machinery.
//
// OCC: Silo-style. Lock the write set, take a commit label, then check that
// every read-only record still has the version that was read and is not
// locked by someone else. The label is drawn from a global sequencer while
// all write locks are held, so label order is a valid serial order; it is
// written as the records' wts.
//
// RC: OCC without the read check.
//
// S2PL: shared/exclusive locks at the primary as the transaction runs
// (NO_WAIT), synchronous replication while the locks are held.

#pragma once

#include <map>

#include "scar/node.hpp"

namespace scar {

inline Task<void> Node::occ_attempt(Worker& w, TxnContext& ctx, const TxnProgram& prog) {
    co_await execute_reads(w, ctx, prog);
    if (ctx.outcome == TxnOutcome::kAborted) co_return;

    while (paused_) co_await commit_gate(w);
    enter_commit(ctx);

    if (!ctx.write_set.empty()) co_await lock_and_validate(w, ctx, true, std::nullopt, false);
    if (ctx.outcome != TxnOutcome::kAborted) {
        ctx.cts = shared_.next_label();
        ctx.crts = ctx.cts;
        ctx.serializable_flag = cfg_.protocol == Protocol::kOcc;
        if (cfg_.protocol == Protocol::kOcc) co_await lock_and_validate(w, ctx, false, ctx.cts, true);
    }
    if (ctx.outcome == TxnOutcome::kAborted) {
        release_write_locks(ctx);
        leave_commit();
        co_return;
    }

    send_writes(ctx, nullptr, false);
    const SimTime latency = env_.now() - ctx.start_time;
    ctx.outcome = TxnOutcome::kCommitted;
    buffer_commit(ctx, latency);
    leave_commit();
}

inline Task<void> Node::s2pl_attempt(Worker& w, TxnContext& ctx, const TxnProgram& prog) {
    std::map<Key, std::uint8_t> held;  // item_flags::kShared / kExclusive per key

    for (const Op& op : prog.ops) {
        const Key k = op.key;
        const bool exclusive = op.kind != OpKind::kRead;
        const std::uint8_t have = held.contains(k) ? held[k] : 0;
        if (exclusive ? (have & item_flags::kExclusive) != 0 : have != 0) {
            if (exclusive) add_write(ctx, k);
            continue;
        }
        const bool need_read = op.kind != OpKind::kWrite && !ctx.find_read(k);
        const bool upgrade = exclusive && (have & item_flags::kShared) != 0;
        const std::uint8_t mode = exclusive ? item_flags::kExclusive : item_flags::kShared;

        RwSetEntry e;
        e.key = k;
        if (primary_here(k)) {
            const bool ok = exclusive ? store_.acquire_exclusive(k, ctx.tid, upgrade) : store_.acquire_shared(k, ctx.tid);
            if (!ok) {
                ctx.abort(AbortReason::kBusy);
                break;
            }
            if (need_read) {
                auto r = store_.local_read(k);
                e.value = std::move(r->value);
                e.wts = r->wts;
                e.rts = r->rts;
                e.source = ReadSource::kLocalPrimary;
            }
        } else {
            begin_round(w);
            Msg m;
            m.dst = placement_.primary(k.partition);
            MsgItem it;
            it.key = k;
            if (need_read) {
                m.kind = MsgKind::kReadReq;
                it.flags = mode;
            } else {
                m.kind = MsgKind::kLockReq;
                it.flags = item_flags::kExclusive | (upgrade ? item_flags::kUpgrade : 0);
            }
            m.items.push_back(std::move(it));
            rpc(w, ctx, std::move(m));
            auto replies = co_await wait_round(w);
            const MsgItem& r = replies.front().items.front();
            if (r.status != status::kOk) {
                ctx.abort(reason_for(r.status));
                break;
            }
            if (need_read) {
                e.value = r.value;
                e.wts = r.wts;
                e.rts = r.rts;
                e.source = ReadSource::kRemotePrimary;
            }
        }
        held[k] |= mode;
        if (need_read) {
            note_read_source(e.source);
            ctx.read_set.push_back(std::move(e));
        }
        if (exclusive) add_write(ctx, k);
    }

    auto release_all = [&] {
        std::map<NodeId, Msg> unlocks;
        for (const auto& [k, mode] : held) {
            const NodeId primary = placement_.primary(k.partition);
            if (primary == id_) {
                if (mode & item_flags::kShared) store_.release_shared(k);
                if (mode & item_flags::kExclusive) store_.unlock(k, ctx.tid);
                continue;
            }
            auto& m = unlocks[primary];
            m.kind = MsgKind::kUnlock;
            m.dst = primary;
            m.items.push_back(MsgItem{.key = k, .status = 0, .flags = mode});
        }
        held.clear();
        for (auto& [dst, m] : unlocks) send_txn(ctx, std::move(m));
    };

    if (ctx.outcome == TxnOutcome::kAborted) {
        release_all();
        co_return;
    }

    while (paused_) co_await commit_gate(w);
    enter_commit(ctx);
    ctx.cts = shared_.next_label();
    ctx.crts = ctx.cts;
    ctx.serializable_flag = true;

    if (!ctx.write_set.empty()) {
        begin_round(w);
        send_writes(ctx, &w, true);
        auto acks = co_await wait_round(w);
        (void)acks;
    }
    release_all();
    const SimTime latency = env_.now() - ctx.start_time;
    ctx.outcome = TxnOutcome::kCommitted;
    buffer_commit(ctx, latency);
    leave_commit();
}

}  // namespace scar
