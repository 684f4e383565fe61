#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evgame/inner_game.hpp"
#include "evgame/scenario.hpp"

namespace evgame {

// One first-stage action profile: starts[i] is aggregator i's charging start
// slot (1-based), a member of its admissible set.
struct StartProfile {
    std::vector<int> starts;
    bool operator==(const StartProfile&) const = default;
};

struct TensorEntry {
    std::vector<double> payoffs;  // F_i at the subgame equilibrium
    std::uint32_t iterations = 0;
    double residual = 0.0;
    double br_gap = 0.0;
    bool present = false;
};

// First-stage payoff function, materialized over the full Cartesian product
// of start-slot sets and keyed by the scenario's content digest.
class PayoffTensor {
public:
    static PayoffTensor empty_for(const Scenario& scenario);

    std::uint64_t size() const { return total_; }  // K = prod |I_i|
    int num_aggregators() const { return static_cast<int>(dims_.size()); }
    const std::vector<int>& dims() const { return dims_; }
    const std::string& scenario_digest() const { return scenario_digest_; }

    std::uint64_t rank_of(const StartProfile& profile) const;
    StartProfile profile_at(std::uint64_t rank) const;

    const TensorEntry& entry(std::uint64_t rank) const { return entries_[rank]; }
    void set_entry(std::uint64_t rank, TensorEntry entry);

    bool complete() const;
    std::uint64_t completed_count() const;
    /// Ranks of subgames whose solutions failed certification during a build.
    const std::vector<std::uint64_t>& failed_ranks() const { return failed_ranks_; }

    double median_abs_payoff() const;
    /// Content hash over the canonical record stream (SHA-256 hex).
    std::string content_digest() const;

    friend bool bit_identical(const PayoffTensor& a, const PayoffTensor& b);
    friend PayoffTensor build_tensor(const Scenario&, const struct BuildOptions&);

private:
    std::string scenario_digest_;
    std::vector<int> dims_;
    std::uint64_t total_ = 0;
    std::vector<TensorEntry> entries_;
    std::vector<std::uint64_t> failed_ranks_;
};

bool bit_identical(const PayoffTensor& a, const PayoffTensor& b);

/// Lexicographic, duplicate-free enumeration of the start-profile product.
std::vector<StartProfile> enumerate_profiles(const Scenario& scenario);

struct BuildOptions {
    int workers = 1;
    SubgameOptions subgame;
    // Append-only record cache; an existing file with a matching digest is
    // resumed, so interrupted builds only pay for the missing entries.
    std::optional<std::filesystem::path> cache_path;
    std::function<void(std::uint64_t done, std::uint64_t total)> progress;
};

/// Solves every subgame and materializes F_i. Deterministic regardless of
/// worker count. Entries whose solutions fail certification are left absent
/// and listed in failed_ranks().
PayoffTensor build_tensor(const Scenario& scenario, const BuildOptions& options = {});

/// Canonical store: header plus records in lexicographic rank order.
void cache_store(const PayoffTensor& tensor, const std::filesystem::path& path);

/// Strict load; rejects version or digest mismatches and truncated files.
PayoffTensor cache_load(const std::filesystem::path& path, const Scenario& scenario);

}  // namespace evgame
