#include "r2s/sim.hpp"

#include "r2s/chain.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace r2s::sim {

namespace {

double to_double(const Difficulty& d) { return d.convert_to<double>(); }

void validate_nodes(std::span<const NodeProfile> nodes)
{
    if (nodes.empty()) throw Error("simulation needs at least one node");
    for (const auto& n : nodes) {
        if (!(n.hash_rate > 0) || !std::isfinite(n.hash_rate)) {
            throw Error("hash rate of '" + n.node_id + "' must be positive");
        }
    }
}

std::vector<double> rates_of(std::span<const NodeProfile> nodes)
{
    std::vector<double> out;
    for (const auto& n : nodes) out.push_back(n.hash_rate);
    return out;
}

/// True if candidate (time, index) beats the current best.
bool beats(double t, std::size_t i, double best_t, std::size_t best_i,
           std::span<const NodeProfile> nodes)
{
    if (t != best_t) return t < best_t;
    return nodes[i].node_id < nodes[best_i].node_id;
}

SimReport start_report(std::string mode, std::span<const NodeProfile> nodes, const Difficulty& d,
                       std::uint64_t num_blocks)
{
    SimReport r;
    r.mode = std::move(mode);
    r.difficulty = d;
    for (const auto& n : nodes) r.node_ids.push_back(n.node_id);
    r.wins.assign(nodes.size(), 0);
    r.total_blocks = num_blocks;
    r.winners.reserve(num_blocks);
    r.samples.reserve(num_blocks);
    return r;
}

void finish_shares(SimReport& r)
{
    r.win_shares.clear();
    for (auto w : r.wins) {
        r.win_shares.push_back(static_cast<double>(w) / static_cast<double>(r.total_blocks));
    }
}

std::string fmt_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::vector<NodeProfile> make_nodes(std::span<const double> rates)
{
    std::vector<NodeProfile> out;
    for (std::size_t i = 0; i < rates.size(); ++i) {
        out.push_back({"node-" + std::to_string(i), rates[i]});
    }
    return out;
}

double model_cdf(double t, double hash_rate, const Difficulty& d)
{
    if (!(t >= 0)) throw Error("model_cdf: t must be >= 0");
    if (!(hash_rate > 0)) throw Error("model_cdf: hash rate must be > 0");
    if (d < 1) throw Error("model_cdf: difficulty must be >= 1");
    return 1.0 - std::exp(-(hash_rate / to_double(d)) * t);
}

std::vector<double> expected_win_share(std::span<const double> rates)
{
    if (rates.empty()) throw Error("expected_win_share: empty rate list");
    for (double r : rates) {
        if (!(r > 0)) throw Error("expected_win_share: rates must be positive");
    }
    const double total = std::accumulate(rates.begin(), rates.end(), 0.0);
    std::vector<double> out;
    for (double r : rates) out.push_back(r / total);
    return out;
}

SimReport run_pow_race_analytic(std::span<const NodeProfile> nodes, const Difficulty& d,
                                std::uint64_t num_blocks, std::uint64_t seed)
{
    validate_nodes(nodes);
    if (d < 1) throw Error("difficulty must be >= 1");
    if (num_blocks < 1) throw Error("num_blocks must be >= 1");

    auto report = start_report("analytic", nodes, d, num_blocks);
    const auto rates = rates_of(nodes);
    report.expected_shares = expected_win_share(rates);

    std::mt19937_64 rng(seed);
    const double dd = to_double(d);
    std::vector<std::exponential_distribution<double>> draws;
    for (double r : rates) draws.emplace_back(r / dd);

    for (std::uint64_t b = 0; b < num_blocks; ++b) {
        std::size_t best = 0;
        double best_t = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const double t = draws[i](rng);
            if (i == 0 || beats(t, i, best_t, best, nodes)) {
                best = i;
                best_t = t;
            }
        }
        ++report.wins[best];
        report.winners.push_back(best);
        report.samples.push_back(best_t);
    }

    finish_shares(report);
    const double total_rate = std::accumulate(rates.begin(), rates.end(), 0.0);
    report.ks_statistic =
        ks_statistic(report.samples, [&](double t) { return model_cdf(t, total_rate, d); });
    return report;
}

std::uint64_t mine_classic(ClassicPowHeader& header, std::uint64_t start_nonce)
{
    if (header.difficulty < 1) throw Error("classic mining requires difficulty >= 1");
    header.nonce = start_nonce;
    for (std::uint64_t draws = 1;; ++draws, ++header.nonce) {
        if (block_difficulty(header.hash()) >= header.difficulty) return draws;
    }
}

SimReport run_pow_race_real(std::span<const NodeProfile> nodes, const Difficulty& d,
                            std::uint64_t num_blocks, std::uint64_t seed, Lottery lottery)
{
    validate_nodes(nodes);
    if (d < 1) throw Error("difficulty must be >= 1");
    if (num_blocks < 1) throw Error("num_blocks must be >= 1");

    auto report = start_report("real", nodes, d, num_blocks);
    report.lottery = lottery == Lottery::nonce ? "nonce" : "certificate";
    const auto rates = rates_of(nodes);
    report.expected_shares = expected_win_share(rates);

    std::mt19937_64 rng(seed);
    Digest previous = genesis_previous_hash();

    for (std::uint64_t b = 0; b < num_blocks; ++b) {
        std::size_t best = 0;
        double best_t = 0;
        std::uint64_t best_iterations = 0;
        Digest best_hash;

        for (std::size_t i = 0; i < nodes.size(); ++i) {
            std::uint64_t iterations = 0;
            Digest h;
            if (lottery == Lottery::nonce) {
                ClassicPowHeader header{b, d, 0, previous};
                iterations = mine_classic(header, rng());
                h = header.hash();
            } else {
                std::array<std::uint8_t, 32> node_seed{};
                for (auto& byte : node_seed) byte = static_cast<std::uint8_t>(rng());
                EntropySource entropy(node_seed);
                PowOptions opts;
                opts.entropy = &entropy;
                auto payload = "block " + std::to_string(b);
                auto outcome = seal_block_pow(nodes[i].node_id, d, b, previous,
                                              Bytes(payload.begin(), payload.end()), opts);
                iterations = outcome.iterations;
                h = block_hash(outcome.block.header);
            }
            const double t = static_cast<double>(iterations) / nodes[i].hash_rate;
            if (i == 0 || beats(t, i, best_t, best, nodes)) {
                best = i;
                best_t = t;
                best_iterations = iterations;
                best_hash = h;
            }
        }
        ++report.wins[best];
        report.winners.push_back(best);
        report.samples.push_back(best_t);
        report.iterations.push_back(best_iterations);
        previous = best_hash;
    }

    finish_shares(report);
    const double total_rate = std::accumulate(rates.begin(), rates.end(), 0.0);
    report.ks_statistic =
        ks_statistic(report.samples, [&](double t) { return model_cdf(t, total_rate, d); });
    return report;
}

SimReport run_schedule(ExternalScheduler& scheduler, std::uint64_t num_blocks,
                       std::span<const NodeProfile> nodes, std::uint64_t seed,
                       const std::string& scheduler_name)
{
    validate_nodes(nodes);
    if (nodes.size() != scheduler.node_count()) {
        throw Error("scheduler expects " + std::to_string(scheduler.node_count()) + " nodes, got " +
                    std::to_string(nodes.size()));
    }
    if (num_blocks < 1) throw Error("num_blocks must be >= 1");

    auto report = start_report("schedule", nodes, 0, num_blocks);
    report.scheduler = scheduler_name;
    report.expected_shares.assign(nodes.size(), 1.0 / static_cast<double>(nodes.size()));

    EntropySource entropy = EntropySource::from_u64(seed);
    const auto ca_keys = generate_keypair(entropy);
    const auto ca_cert = make_self_signed_certificate(ca_keys, "sim-ca", entropy);
    std::vector<Identity> identities;
    for (const auto& n : nodes) {
        auto keys = generate_keypair(entropy);
        auto cert = issue_certificate(ca_keys, "sim-ca", keys.public_key, n.node_id, entropy);
        identities.push_back({std::move(keys), std::move(cert)});
    }
    TrustPolicy trust;
    trust.trust_anchors.push_back(ca_cert);

    auto payload_for = [](std::uint64_t b) {
        auto s = "block " + std::to_string(b);
        return Bytes(s.begin(), s.end());
    };
    auto record = [&](std::size_t leader) {
        ++report.wins[leader];
        report.winners.push_back(leader);
        report.samples.push_back(scheduler.last_election_time());
    };

    const auto first = scheduler.next_leader(0);
    auto chain = Chain::init(trust, payload_for(0), ConsensusMode::external(identities.at(first)));
    record(first);

    for (std::uint64_t b = 1; b < num_blocks; ++b) {
        const auto leader = scheduler.next_leader(b);
        auto block = seal_block_external(identities.at(leader), b, chain.tip_hash(), payload_for(b));
        auto v = chain.append(std::move(block));
        if (!v) throw ChainRejected(b, *v.reason());
        record(leader);
    }

    finish_shares(report);
    return report;
}

VerificationCost verification_cost_probe(const Block& block)
{
    if (!block.header.is_pow()) throw Error("verification_cost_probe expects a PoW block");
    const TrustPolicy no_trust;
    auto& counters = crypto_counters();
    const auto before = counters;
    VerificationCost cost;
    cost.accepted = verify_block(block, block.header.previous_block_hash, block.header.block_number,
                                 no_trust)
                        .accepted();
    cost.hashes = counters.hashes - before.hashes;
    cost.sig_verifies = counters.sig_verifies - before.sig_verifies;
    return cost;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty()) throw Error("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

std::string SimReport::to_json() const
{
    nlohmann::ordered_json j;
    j["mode"] = mode;
    if (lottery) j["lottery"] = *lottery;
    if (scheduler) j["scheduler"] = *scheduler;
    j["difficulty"] = difficulty_to_string(difficulty);
    j["total_blocks"] = total_blocks;
    j["nodes"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < node_ids.size(); ++i) {
        nlohmann::ordered_json n;
        n["node_id"] = node_ids[i];
        n["wins"] = wins[i];
        n["win_share"] = win_shares[i];
        n["expected_share"] = expected_shares[i];
        j["nodes"].push_back(std::move(n));
    }
    j["ks_statistic"] = ks_statistic ? nlohmann::ordered_json(*ks_statistic) : nullptr;
    if (!samples.empty()) {
        const double mean =
            std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
        j["mean_time"] = mean;
    }
    if (!iterations.empty()) {
        double sum = 0;
        for (auto it : iterations) sum += static_cast<double>(it);
        j["mean_iterations"] = sum / static_cast<double>(iterations.size());
    }
    return j.dump(2) + "\n";
}

std::string SimReport::to_csv() const
{
    std::string out = "block_index,winner,T_sample\n";
    for (std::size_t b = 0; b < winners.size(); ++b) {
        out += std::to_string(b) + "," + node_ids[winners[b]] + "," + fmt_double(samples[b]) + "\n";
    }
    return out;
}

}  // namespace r2s::sim
