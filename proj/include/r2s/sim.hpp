#pragma once

#include "r2s/block.hpp"
#include "r2s/consensus.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace r2s::sim {

struct NodeProfile {
    std::string node_id;
    /// Hashes per second. Real mode only uses it to scale iteration counts.
    double hash_rate = 1.0;
};

/// Nodes named node-0, node-1, ... with the given rates.
std::vector<NodeProfile> make_nodes(std::span<const double> rates);

enum class Lottery { nonce, certificate };

struct SimReport {
    std::string mode;  // "analytic" | "real" | "schedule"
    std::optional<std::string> lottery;
    std::optional<std::string> scheduler;
    Difficulty difficulty = 0;
    std::vector<std::string> node_ids;
    std::vector<std::uint64_t> wins;
    std::vector<double> win_shares;
    std::vector<double> expected_shares;
    /// Per block: winner index and time to the block (seconds).
    std::vector<std::size_t> winners;
    std::vector<double> samples;
    /// Real mode: lottery draws of the winning node per block.
    std::vector<std::uint64_t> iterations;
    /// Kolmogorov-Smirnov distance of `samples` against the mining-time model.
    std::optional<double> ks_statistic;
    std::uint64_t total_blocks = 0;

    std::string to_json() const;
    /// Header line plus (block_index, winner, T_sample) rows.
    std::string to_csv() const;
};

/// P{T(r) <= t} = 1 - exp(-(r/d) t).
double model_cdf(double t, double hash_rate, const Difficulty& d);

/// p_i = r_i / sum r_j.
std::vector<double> expected_win_share(std::span<const double> rates);

/// Exponential race: per block every node draws T_i ~ Exp(r_i / d); the
/// minimum wins. Deterministic under `seed`.
SimReport run_pow_race_analytic(std::span<const NodeProfile> nodes, const Difficulty& d,
                                std::uint64_t num_blocks, std::uint64_t seed);

/// Hashing race. With Lottery::nonce each node iterates a nonce over a
/// ClassicPowHeader from a seeded random start; with Lottery::certificate
/// each node runs seal_block_pow. T_i = iterations_i / hash_rate_i, lowest
/// T wins, ties to the lowest node_id.
SimReport run_pow_race_real(std::span<const NodeProfile> nodes, const Difficulty& d,
                            std::uint64_t num_blocks, std::uint64_t seed,
                            Lottery lottery = Lottery::nonce);

/// Draws needed by the nonce reference miner from `start_nonce` until the
/// header reaches difficulty d.
std::uint64_t mine_classic(ClassicPowHeader& header, std::uint64_t start_nonce);

/// Externally scheduled chain: the scheduler's leader seals each block under
/// its CA-issued identity and the block is appended to a real chain.
SimReport run_schedule(ExternalScheduler& scheduler, std::uint64_t num_blocks,
                       std::span<const NodeProfile> nodes, std::uint64_t seed,
                       const std::string& scheduler_name = "custom");

struct VerificationCost {
    std::uint64_t hashes = 0;
    std::uint64_t sig_verifies = 0;
    bool accepted = false;
};

/// Counts the primitive operations verify_block spends on a PoW block
/// (no allowlist, its own link and number as the expected values).
VerificationCost verification_cost_probe(const Block& block);

// Statistics.

/// Sup distance between the empirical CDF of `samples` and `cdf`.
template <typename Cdf>
double ks_statistic(std::vector<double> samples, Cdf cdf);

/// Two-sample Kolmogorov-Smirnov distance; ties handled exactly.
double ks_two_sample(std::vector<double> a, std::vector<double> b);

}  // namespace r2s::sim

#include <algorithm>
#include <cmath>

namespace r2s::sim {

template <typename Cdf>
double ks_statistic(std::vector<double> samples, Cdf cdf)
{
    if (samples.empty()) return 0.0;
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max({d, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

}  // namespace r2s::sim
