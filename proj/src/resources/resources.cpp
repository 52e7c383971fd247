// SPDX-License-Identifier: Apache-2.0
#include "reft/resources/resources.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

#include "reft/errors.hpp"

namespace reft::resources {

std::string_view to_string(Direction d) { return d == Direction::down ? "down" : "up"; }

std::string_view to_string(PayloadKind k) { return k == PayloadKind::weights ? "weights" : "logits"; }

namespace {

bool valid_bits(unsigned b) { return b == 8 || b == 16 || b == 32 || b == 64; }

} // namespace

void CostModel::validate() const {
    if (!valid_bits(bits)) throw ConfigError("cost.bits must be one of 8, 16, 32, 64 (got " + std::to_string(bits) + ")");
    if (logit_bits && !valid_bits(*logit_bits)) {
        throw ConfigError("cost.logit_bits must be one of 8, 16, 32, 64 (got " + std::to_string(*logit_bits) + ")");
    }
}

std::uint64_t weight_payload_bytes(std::uint64_t params, unsigned bits) {
    if (!valid_bits(bits)) throw std::invalid_argument("bit width must be one of 8, 16, 32, 64");
    return params * bits / 8;
}

std::uint64_t bandwidth_weights(std::uint64_t clients, std::uint64_t rounds, std::uint64_t params, unsigned bits) {
    return clients * rounds * weight_payload_bytes(params, bits);
}

std::uint64_t bandwidth_logits(std::uint64_t logits, std::uint64_t transfers, unsigned bits) {
    if (!valid_bits(bits)) throw std::invalid_argument("bit width must be one of 8, 16, 32, 64");
    return logits * transfers * bits / 8;
}

double utilization_factor(double f_static, double client_flops) {
    if (!(f_static > 0.0) || !(client_flops > 0.0)) throw std::invalid_argument("FLOPS values must be positive");
    return f_static / client_flops;
}

double simulated_train_time(double total_flops, double client_flops) {
    if (!(total_flops >= 0.0) || !(client_flops > 0.0)) {
        throw std::invalid_argument("need non-negative work and positive client FLOPS");
    }
    return total_flops / client_flops;
}

void BandwidthLedger::append(const LedgerEntry &entry) { entries_.push_back(entry); }

std::uint64_t BandwidthLedger::total_bytes() const {
    std::uint64_t n = 0;
    for (const auto &e : entries_) n += e.bytes;
    return n;
}

std::uint64_t BandwidthLedger::total_bytes(Direction d) const {
    std::uint64_t n = 0;
    for (const auto &e : entries_) {
        if (e.direction == d) n += e.bytes;
    }
    return n;
}

std::uint64_t BandwidthLedger::client_bytes(std::uint32_t client) const {
    std::uint64_t n = 0;
    for (const auto &e : entries_) {
        if (e.client == client) n += e.bytes;
    }
    return n;
}

std::size_t BandwidthLedger::count(Direction d, PayloadKind k) const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [&](const auto &e) { return e.direction == d && e.kind == k; }));
}

std::size_t BandwidthLedger::count_for(std::uint32_t client, Direction d, PayloadKind k) const {
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [&](const auto &e) {
        return e.client == client && e.direction == d && e.kind == k;
    }));
}

std::vector<ClientTraffic> BandwidthLedger::per_client() const {
    std::map<std::uint32_t, ClientTraffic> by_client;
    for (const auto &e : entries_) {
        auto &t = by_client[e.client];
        t.client = e.client;
        (e.direction == Direction::down ? t.down : t.up) += e.bytes;
    }
    std::vector<ClientTraffic> out;
    for (const auto &[id, t] : by_client) out.push_back(t);
    return out;
}

void BandwidthLedger::write_csv(std::ostream &out) const {
    out << "client,round,direction,kind,bytes\n";
    for (const auto &e : entries_) {
        out << e.client << ',' << e.round << ',' << to_string(e.direction) << ',' << to_string(e.kind) << ','
            << e.bytes << '\n';
    }
}

void BandwidthLedger::write_summary(std::ostream &out) const {
    out << "client,downstream,upstream,total\n";
    ClientTraffic all;
    for (const auto &t : per_client()) {
        out << t.client << ',' << format_bytes(t.down) << ',' << format_bytes(t.up) << ',' << format_bytes(t.total())
            << '\n';
        all.down += t.down;
        all.up += t.up;
    }
    out << "all," << format_bytes(all.down) << ',' << format_bytes(all.up) << ',' << format_bytes(all.total()) << '\n';
}

void record_transfer(BandwidthLedger &ledger, std::uint32_t client, std::uint32_t round, Direction direction,
                     PayloadKind kind, std::uint64_t size_units, const CostModel &cost) {
    LedgerEntry e;
    e.client = client;
    e.round = round;
    e.direction = direction;
    e.kind = kind;
    e.units = size_units;
    if (kind == PayloadKind::weights) {
        e.bits = cost.bits;
        e.bytes = bandwidth_weights(1, 1, size_units, e.bits);
    } else {
        e.bits = cost.effective_logit_bits();
        e.bytes = bandwidth_logits(size_units, 1, e.bits);
    }
    ledger.append(e);
}

std::vector<CostRow> baseline_cost_rows(std::uint64_t params, std::uint64_t rounds, const CostModel &cost) {
    const std::uint64_t full = weight_payload_bytes(params, cost.bits);
    // PruneFL settles around 60% sparsity; its traffic is modeled as the dense 40%.
    const std::uint64_t adaptive = weight_payload_bytes(params - params * 6 / 10, cost.bits);
    return {
        {"fedavg", full, full, rounds},
        {"fl-pqsu", full, weight_payload_bytes(params, 8), rounds},
        {"prunefl", adaptive, adaptive, rounds},
    };
}

std::string format_bytes(std::uint64_t bytes) {
    char buf[64];
    const double b = static_cast<double>(bytes);
    if (b >= 1e9) {
        std::snprintf(buf, sizeof buf, "%.2f GB", b / 1e9);
    } else if (b >= 1e6) {
        std::snprintf(buf, sizeof buf, "%.2f MB", b / 1e6);
    } else if (b >= 1e3) {
        std::snprintf(buf, sizeof buf, "%.2f kB", b / 1e3);
    } else {
        std::snprintf(buf, sizeof buf, "%llu B", static_cast<unsigned long long>(bytes));
    }
    return buf;
}

} // namespace reft::resources
