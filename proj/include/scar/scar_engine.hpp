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

// SCAR coordinator: execution, validation with logical timestamps, and
// asynchronous commit.
//
// Serializable validation:
//   1. lock the write set at the primaries (NO_WAIT, version check), which
//      also refreshes each entry's rts;
//   2. cts = max(read wts, write rts + 1);
//   3. every read-only entry must be valid at cts: locally when its observed
//      rts already reaches cts, else by extending rts at the primary.
//
// Snapshot isolation validates reads at crts = max read wts instead and may
// issue locks and validations in the same round (PLV).

#pragma once

#include "scar/node.hpp"

namespace scar {

inline Task<void> Node::scar_attempt(Worker& w, TxnContext& ctx, const TxnProgram& prog) {
    co_await execute_reads(w, ctx, prog);
    if (ctx.outcome == TxnOutcome::kAborted) co_return;

    while (paused_) co_await commit_gate(w);
    enter_commit(ctx);

    if (ctx.isolation == Isolation::kSerializable) {
        co_await scar_validate_sr(w, ctx);
    } else {
        co_await scar_validate_si(w, ctx);
    }

    if (ctx.outcome == TxnOutcome::kAborted) {
        release_write_locks(ctx);
        sync_timestamps(ctx);
        leave_commit();
        co_return;
    }

    send_writes(ctx, nullptr, false);
    const SimTime latency = env_.now() - ctx.start_time;
    sync_timestamps(ctx);
    ctx.outcome = TxnOutcome::kCommitted;
    buffer_commit(ctx, latency);
    leave_commit();
}

inline Task<void> Node::scar_validate_sr(Worker& w, TxnContext& ctx) {
    if (!ctx.write_set.empty()) {
        co_await lock_and_validate(w, ctx, true, std::nullopt, false);
        if (ctx.outcome == TxnOutcome::kAborted) co_return;
    }
    ctx.cts = compute_cts(ctx.read_set, ctx.write_set);
    ctx.crts = ctx.cts;
    ctx.serializable_flag = true;
    shared_.observe(ctx.cts);
    co_await lock_and_validate(w, ctx, false, ctx.cts, false);
}

inline Task<void> Node::scar_validate_si(Worker& w, TxnContext& ctx) {
    const bool has_writes = !ctx.write_set.empty();
    if (cfg_.toggles.plv) {
        ctx.crts = std::max(compute_crts(ctx.read_set), w.crts_floor);
        shared_.observe(ctx.crts);
        co_await lock_and_validate(w, ctx, has_writes, ctx.crts, false);
        if (ctx.outcome == TxnOutcome::kAborted) co_return;
        // A blind write over a version newer than the snapshot would hide a
        // concurrent update; retry with a later snapshot.
        for (const auto& e : ctx.write_set)
            if (!e.in_read_set && e.wts > ctx.crts) {
                w.crts_floor = std::max(w.crts_floor, e.wts);
                ctx.abort(AbortReason::kStale);
                co_return;
            }
    } else {
        if (has_writes) {
            co_await lock_and_validate(w, ctx, true, std::nullopt, false);
            if (ctx.outcome == TxnOutcome::kAborted) co_return;
        }
        ctx.crts = compute_crts(ctx.read_set);
        for (const auto& e : ctx.write_set)
            if (!e.in_read_set) ctx.crts = std::max(ctx.crts, e.wts);
        shared_.observe(ctx.crts);
        co_await lock_and_validate(w, ctx, false, ctx.crts, false);
        if (ctx.outcome == TxnOutcome::kAborted) co_return;
    }
    ctx.cts = std::max(compute_cts(ctx.read_set, ctx.write_set), ctx.crts);
    shared_.observe(ctx.cts);
    ctx.serializable_flag = ctx.crts == ctx.cts;
}

}  // namespace scar
