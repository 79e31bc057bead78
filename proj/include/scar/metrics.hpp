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
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "scar/transport.hpp"
#include "scar/types.hpp"

namespace scar {

/// Run statistics. `committed` counts group-committed transactions only, so at
/// the end of a drained run committed + aborted == attempted.
struct Metrics {
    std::uint64_t attempted = 0;
    std::uint64_t committed = 0;
    std::array<std::uint64_t, kAbortReasonCount> aborts{};
    std::uint64_t rolled_back = 0;  // validated, then lost to a failure before their epoch closed

    std::vector<SimTime> latencies;  // commit-request latency of each committed transaction
    MessageCounters messages;

    std::uint64_t si_committed = 0;
    std::uint64_t si_flagged = 0;  // committed SI transactions with crts == cts

    std::uint64_t reads_local_primary = 0;
    std::uint64_t reads_local_backup = 0;
    std::uint64_t reads_remote = 0;

    std::uint64_t backup_reads_validated = 0;  // backup-read entries that reached read validation
    std::uint64_t backup_reads_local_ok = 0;   // ... and passed without contacting the primary

    std::uint64_t validation_rounds = 0;  // summed over committed transactions

    SimTime duration = 0;

    std::uint64_t aborted() const {
        std::uint64_t t = 0;
        for (auto a : aborts) t += a;
        return t;
    }
    std::uint64_t aborts_for(AbortReason r) const { return aborts[static_cast<std::size_t>(r)]; }

    double throughput() const {
        return duration == 0 ? 0.0 : static_cast<double>(committed) * static_cast<double>(kSecond) / static_cast<double>(duration);
    }
    double abort_rate() const { return attempted == 0 ? 0.0 : static_cast<double>(aborted()) / static_cast<double>(attempted); }
    double per_committed(MsgKind k) const {
        return committed == 0 ? 0.0 : static_cast<double>(messages[k]) / static_cast<double>(committed);
    }
    double si_flagged_fraction() const {
        return si_committed == 0 ? 0.0 : static_cast<double>(si_flagged) / static_cast<double>(si_committed);
    }
    double backup_local_validation_rate() const {
        return backup_reads_validated == 0
                   ? 0.0
                   : static_cast<double>(backup_reads_local_ok) / static_cast<double>(backup_reads_validated);
    }

    /// Nearest-rank percentile of commit-request latency, p in (0, 100].
    SimTime latency_percentile(double p) const {
        if (latencies.empty()) return 0;
        auto sorted = latencies;
        std::sort(sorted.begin(), sorted.end());
        auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
        rank = std::clamp<std::size_t>(rank, 1, sorted.size());
        return sorted[rank - 1];
    }

    void merge(const Metrics& o) {
        attempted += o.attempted;
        committed += o.committed;
        for (std::size_t i = 0; i < kAbortReasonCount; ++i) aborts[i] += o.aborts[i];
        rolled_back += o.rolled_back;
        latencies.insert(latencies.end(), o.latencies.begin(), o.latencies.end());
        messages.merge(o.messages);
        si_committed += o.si_committed;
        si_flagged += o.si_flagged;
        reads_local_primary += o.reads_local_primary;
        reads_local_backup += o.reads_local_backup;
        reads_remote += o.reads_remote;
        backup_reads_validated += o.backup_reads_validated;
        backup_reads_local_ok += o.backup_reads_local_ok;
        validation_rounds += o.validation_rounds;
        duration = std::max(duration, o.duration);
    }
};

}  // namespace scar
