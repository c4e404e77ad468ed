#include "r2s/consensus.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

namespace r2s {

ConsensusMode ConsensusMode::pow(Difficulty global_difficulty)
{
    if (global_difficulty <= 0) throw Error("PoW mode requires difficulty > 0");
    ConsensusMode mode;
    mode.global_difficulty_ = std::move(global_difficulty);
    return mode;
}

ConsensusMode ConsensusMode::external(Identity identity)
{
    if (identity.certificate.is_self_signed()) {
        throw Error("external mode requires a CA-signed certificate");
    }
    if (identity.certificate.public_key != identity.keys.public_key) {
        throw Error("certificate does not match the identity key");
    }
    ConsensusMode mode;
    mode.identity_ = std::move(identity);
    return mode;
}

Allowlist::Allowlist(std::vector<Digest> fingerprints)
    : set_(fingerprints.begin(), fingerprints.end())
{
}

std::vector<Digest> Allowlist::sorted() const
{
    std::vector<Digest> out(set_.begin(), set_.end());
    std::sort(out.begin(), out.end());
    return out;
}

const Certificate* TrustPolicy::issuing_anchor(const Certificate& cert) const
{
    for (const auto& anchor : trust_anchors) {
        if (anchor.subject == cert.issuer && verify_certificate(cert, anchor)) return &anchor;
    }
    return nullptr;
}

std::string_view to_string(RejectReason reason)
{
    switch (reason) {
    case RejectReason::bad_link: return "bad-link";
    case RejectReason::bad_number: return "bad-number";
    case RejectReason::bad_payload: return "bad-payload";
    case RejectReason::bad_signature: return "bad-signature";
    case RejectReason::bad_proof: return "bad-proof";
    case RejectReason::untrusted_certificate: return "untrusted-certificate";
    case RejectReason::unknown_certificate: return "unknown-certificate";
    }
    return "unknown";
}

std::optional<RejectReason> reject_reason_from_string(std::string_view name)
{
    for (auto r : {RejectReason::bad_link, RejectReason::bad_number, RejectReason::bad_payload,
                   RejectReason::bad_signature, RejectReason::bad_proof,
                   RejectReason::untrusted_certificate, RejectReason::unknown_certificate}) {
        if (to_string(r) == name) return r;
    }
    return std::nullopt;
}

Verdict verify_block(const Block& block, const Digest& expected_previous_hash,
                     std::uint64_t expected_number, const TrustPolicy& trust)
{
    const auto& h = block.header;
    if (h.previous_block_hash != expected_previous_hash) return Verdict::reject(RejectReason::bad_link);
    if (h.block_number != expected_number) return Verdict::reject(RejectReason::bad_number);
    if (hash(block.payload) != h.payload_digest) return Verdict::reject(RejectReason::bad_payload);

    const auto bh = block_hash(h);
    if (!verify(h.certificate.public_key, bh.view(), h.signature)) {
        return Verdict::reject(RejectReason::bad_signature);
    }

    if (h.is_pow()) {
        if (!verify_self_signed(h.certificate)) {
            return Verdict::reject(RejectReason::untrusted_certificate);
        }
        if (block_difficulty(bh) < h.difficulty) return Verdict::reject(RejectReason::bad_proof);
    } else {
        // CA-signed only; an anchor's own self-signed certificate does not count.
        if (h.certificate.subject == h.certificate.issuer || !trust.issuing_anchor(h.certificate)) {
            return Verdict::reject(RejectReason::untrusted_certificate);
        }
    }

    if (trust.allowlist && !trust.allowlist->contains(certificate_fingerprint(h.certificate))) {
        return Verdict::reject(RejectReason::unknown_certificate);
    }
    return Verdict::accept();
}

Block seal_block_external(const Identity& identity, std::uint64_t block_number,
                          const Digest& previous_block_hash, Bytes payload)
{
    const auto& cert = identity.certificate;
    if (cert.subject == cert.issuer || cert.is_self_signed()) {
        throw Error("external sealing requires a CA-signed certificate");
    }
    if (cert.public_key != identity.keys.public_key) {
        throw Error("certificate does not match the identity key");
    }

    Block block;
    auto& h = block.header;
    h.block_number = block_number;
    h.difficulty = 0;
    h.certificate = cert;
    h.previous_block_hash = previous_block_hash;
    h.payload_digest = hash(payload);
    h.signature = sign(identity.keys, block_hash(h).view());
    block.payload = std::move(payload);
    return block;
}

IterationCapExceeded::IterationCapExceeded(std::uint64_t cap)
    : Error("PoW iteration cap of " + std::to_string(cap) + " exceeded")
{
}

namespace {

struct Ticket {
    KeyPair keys;
    Certificate certificate;
    Digest hash;
};

// One lottery draw.
Ticket draw_ticket(const std::string& subject, const Difficulty& d, std::uint64_t block_number,
                   const Digest& previous_block_hash, const Digest& payload_digest,
                   EntropySource& entropy)
{
    Ticket t;
    t.keys = generate_keypair(entropy);
    t.certificate = make_self_signed_certificate(t.keys, subject, entropy);
    t.hash = block_hash(block_number, d, t.certificate, previous_block_hash, payload_digest);
    return t;
}

}  // namespace

MiningOutcome seal_block_pow(std::string subject, const Difficulty& global_difficulty,
                             std::uint64_t block_number, const Digest& previous_block_hash,
                             Bytes payload, const PowOptions& options)
{
    if (global_difficulty < 1) throw Error("PoW sealing requires difficulty >= 1");
    const auto start = std::chrono::steady_clock::now();
    const auto payload_digest = hash(payload);
    const unsigned workers = std::max(1u, options.workers);

    std::optional<Ticket> winner;
    std::uint64_t iterations = 0;

    if (workers == 1) {
        EntropySource system;
        EntropySource& entropy = options.entropy ? *options.entropy : system;
        for (;;) {
            if (options.iteration_cap && iterations >= *options.iteration_cap) {
                throw IterationCapExceeded(*options.iteration_cap);
            }
            ++iterations;
            auto t = draw_ticket(subject, global_difficulty, block_number, previous_block_hash,
                                 payload_digest, entropy);
            if (block_difficulty(t.hash) >= global_difficulty) {
                winner = std::move(t);
                break;
            }
        }
    } else {
        // Each worker draws from its own source. Seeded runs derive the worker
        // seeds from the caller's source, so inputs are reproducible even though
        // the winning worker depends on scheduling.
        std::vector<EntropySource> sources;
        for (unsigned w = 0; w < workers; ++w) {
            if (options.entropy) {
                std::array<std::uint8_t, 32> seed{};
                options.entropy->fill(seed);
                sources.emplace_back(seed);
            } else {
                sources.emplace_back();
            }
        }
        std::atomic<bool> stop{false};
        std::atomic<std::uint64_t> draws{0};
        std::atomic<bool> capped{false};
        std::mutex winner_mutex;
        std::vector<std::thread> threads;
        for (unsigned w = 0; w < workers; ++w) {
            threads.emplace_back([&, w] {
                while (!stop.load(std::memory_order_relaxed)) {
                    auto n = draws.fetch_add(1, std::memory_order_relaxed);
                    if (options.iteration_cap && n >= *options.iteration_cap) {
                        draws.fetch_sub(1, std::memory_order_relaxed);
                        capped = true;
                        stop = true;
                        return;
                    }
                    auto t = draw_ticket(subject, global_difficulty, block_number,
                                         previous_block_hash, payload_digest, sources[w]);
                    if (block_difficulty(t.hash) >= global_difficulty) {
                        std::lock_guard lock(winner_mutex);
                        if (!winner) winner = std::move(t);
                        stop = true;
                        return;
                    }
                }
            });
        }
        for (auto& t : threads) t.join();
        if (!winner && capped) throw IterationCapExceeded(*options.iteration_cap);
        iterations = draws.load();
    }

    MiningOutcome out;
    auto& h = out.block.header;
    h.block_number = block_number;
    h.difficulty = global_difficulty;
    h.certificate = std::move(winner->certificate);
    h.previous_block_hash = previous_block_hash;
    h.payload_digest = payload_digest;
    h.signature = sign(winner->keys, winner->hash.view());
    out.block.payload = std::move(payload);
    out.iterations = iterations;
    out.elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

MiningOutcome seal_block(const ConsensusMode& mode, std::string pow_subject,
                         std::uint64_t block_number, const Digest& previous_block_hash,
                         Bytes payload, const PowOptions& options)
{
    if (mode.is_pow()) {
        return seal_block_pow(std::move(pow_subject), mode.global_difficulty(), block_number,
                              previous_block_hash, std::move(payload), options);
    }
    const auto start = std::chrono::steady_clock::now();
    MiningOutcome out;
    out.block = seal_block_external(*mode.external_identity(), block_number, previous_block_hash,
                                    std::move(payload));
    out.iterations = 1;
    out.elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

RoundRobin::RoundRobin(std::size_t nodes) : nodes_(nodes)
{
    if (nodes == 0) throw Error("round robin needs at least one node");
}

RandomLeader::RandomLeader(std::size_t nodes, ElectionTiming timing, std::uint64_t seed)
    : nodes_(nodes), timing_(timing), rng_(seed)
{
    if (nodes == 0) throw Error("random leader needs at least one node");
    if (!(timing.election_min >= 0 && timing.election_max > timing.election_min) ||
        !(timing.network_mean > 0)) {
        throw Error("invalid election timing");
    }
}

std::size_t RandomLeader::next_leader(std::uint64_t)
{
    std::uniform_real_distribution<double> timeout(timing_.election_min, timing_.election_max);
    std::exponential_distribution<double> delay(1.0 / timing_.network_mean);
    std::size_t best = 0;
    double best_time = 0;
    for (std::size_t i = 0; i < nodes_; ++i) {
        const double t = timeout(rng_) + delay(rng_);
        if (i == 0 || t < best_time) {
            best = i;
            best_time = t;
        }
    }
    last_time_ = best_time;
    return best;
}

}  // namespace r2s
