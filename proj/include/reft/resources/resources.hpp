// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace reft::resources {

enum class Direction { down, up };
enum class PayloadKind { weights, logits };

std::string_view to_string(Direction d);
std::string_view to_string(PayloadKind k);

// Bit widths used to price transfers. `logit_bits` defaults to `bits`.
struct CostModel {
    unsigned bits = 32;
    std::optional<unsigned> logit_bits;

    unsigned effective_logit_bits() const { return logit_bits.value_or(bits); }
    // Throws ConfigError unless every width is one of 8, 16, 32, 64.
    void validate() const;

    bool operator==(const CostModel &) const = default;
};

// Bytes for one transfer of W parameters at B bits: W * B / 8.
std::uint64_t weight_payload_bytes(std::uint64_t params, unsigned bits);
// C * R * W * B / 8
std::uint64_t bandwidth_weights(std::uint64_t clients, std::uint64_t rounds, std::uint64_t params, unsigned bits);
// L * S * B / 8
std::uint64_t bandwidth_logits(std::uint64_t logits, std::uint64_t transfers, unsigned bits);

// F_static / F_c
double utilization_factor(double f_static, double client_flops);
// Seconds a job of total_flops takes at client_flops operations per second.
double simulated_train_time(double total_flops, double client_flops);

struct LedgerEntry {
    std::uint32_t client = 0;
    std::uint32_t round = 0;
    Direction direction = Direction::down;
    PayloadKind kind = PayloadKind::weights;
    std::uint64_t units = 0; // parameters or logits
    unsigned bits = 32;
    std::uint64_t bytes = 0;
};

struct ClientTraffic {
    std::uint32_t client = 0;
    std::uint64_t down = 0;
    std::uint64_t up = 0;
    std::uint64_t total() const { return down + up; }
};

// Append-only record of every simulated transfer. Single writer: callers
// append from the orchestrating thread only.
class BandwidthLedger {
public:
    void append(const LedgerEntry &entry);

    const std::vector<LedgerEntry> &entries() const { return entries_; }
    std::uint64_t total_bytes() const;
    std::uint64_t total_bytes(Direction d) const;
    std::uint64_t client_bytes(std::uint32_t client) const;
    std::size_t count(Direction d, PayloadKind k) const;
    std::size_t count_for(std::uint32_t client, Direction d, PayloadKind k) const;

    // Per-client totals sorted by client id.
    std::vector<ClientTraffic> per_client() const;

    // Columns: client,round,direction,kind,bytes
    void write_csv(std::ostream &out) const;
    // One row per client plus an "all" row: downstream, upstream, total.
    void write_summary(std::ostream &out) const;

private:
    std::vector<LedgerEntry> entries_;
};

// Appends one entry sized by bandwidth_weights / bandwidth_logits.
void record_transfer(BandwidthLedger &ledger, std::uint32_t client, std::uint32_t round, Direction direction,
                     PayloadKind kind, std::uint64_t size_units, const CostModel &cost);

// Modeled per-client traffic of a weight-sharing method. These rows are
// closed-form; the methods themselves are not executed.
struct CostRow {
    std::string method;
    std::uint64_t down_per_round = 0;
    std::uint64_t up_per_round = 0;
    std::uint64_t rounds = 0;
    std::uint64_t total() const { return (down_per_round + up_per_round) * rounds; }
};

// FedAvg (full weights both ways), FL-PQSU (INT8 upload), PruneFL (~60% pruned both ways).
std::vector<CostRow> baseline_cost_rows(std::uint64_t params, std::uint64_t rounds, const CostModel &cost);

// Decimal units: "37.63 MB", "73.53 GB".
std::string format_bytes(std::uint64_t bytes);

} // namespace reft::resources
