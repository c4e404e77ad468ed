#pragma once

#include "r2s/block.hpp"
#include "r2s/crypto.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace r2s {

/// A node's CA-backed signing identity for externally agreed blocks.
struct Identity {
    KeyPair keys;
    Certificate certificate;
};

/// Global difficulty d doubles as the mode switch: d == 0 means consensus is
/// reached elsewhere and the block is signed under a CA-issued certificate.
class ConsensusMode {
public:
    static ConsensusMode pow(Difficulty global_difficulty);
    static ConsensusMode external(Identity identity);

    const Difficulty& global_difficulty() const { return global_difficulty_; }
    const std::optional<Identity>& external_identity() const { return identity_; }
    bool is_pow() const { return global_difficulty_ > 0; }

private:
    ConsensusMode() = default;
    Difficulty global_difficulty_ = 0;
    std::optional<Identity> identity_;
};

/// Certificate fingerprints admitted to sign blocks. Membership is a hash
/// lookup, independent of the list size.
class Allowlist {
public:
    Allowlist() = default;
    explicit Allowlist(std::vector<Digest> fingerprints);

    void insert(const Digest& fingerprint) { set_.insert(fingerprint); }
    bool erase(const Digest& fingerprint) { return set_.erase(fingerprint) > 0; }
    bool contains(const Digest& fingerprint) const { return set_.contains(fingerprint); }
    std::size_t size() const { return set_.size(); }
    /// Sorted, for stable serialization.
    std::vector<Digest> sorted() const;

private:
    std::unordered_set<Digest, DigestHash> set_;
};

struct TrustPolicy {
    std::vector<Certificate> trust_anchors;
    std::optional<Allowlist> allowlist;

    /// Anchor that issued `cert`, if any.
    const Certificate* issuing_anchor(const Certificate& cert) const;
};

enum class RejectReason {
    bad_link,
    bad_number,
    bad_payload,
    bad_signature,
    bad_proof,
    untrusted_certificate,
    unknown_certificate,
};

std::string_view to_string(RejectReason reason);
std::optional<RejectReason> reject_reason_from_string(std::string_view name);

class Verdict {
public:
    static Verdict accept() { return Verdict{}; }
    static Verdict reject(RejectReason reason) { return Verdict{reason}; }

    bool accepted() const { return !reason_; }
    explicit operator bool() const { return accepted(); }
    std::optional<RejectReason> reason() const { return reason_; }

    friend bool operator==(const Verdict&, const Verdict&) = default;

private:
    Verdict() = default;
    explicit Verdict(RejectReason reason) : reason_(reason) {}
    std::optional<RejectReason> reason_;
};

/// Checks link, number, payload digest, block signature, then the mode rule
/// (self-signed ticket meeting the declared difficulty, or a certificate
/// issued by a trust anchor), then allowlist membership when one is set.
/// A PoW block costs two hashes and two signature checks; no lottery work.
Verdict verify_block(const Block& block, const Digest& expected_previous_hash,
                     std::uint64_t expected_number, const TrustPolicy& trust);

Block seal_block_external(const Identity& identity, std::uint64_t block_number,
                          const Digest& previous_block_hash, Bytes payload);

struct MiningOutcome {
    Block block;
    std::uint64_t iterations = 0;
    double elapsed = 0.0;  // seconds
};

struct PowOptions {
    std::optional<std::uint64_t> iteration_cap;
    unsigned workers = 1;
    /// When null, keys and serials come from system randomness.
    EntropySource* entropy = nullptr;
};

class IterationCapExceeded : public Error {
public:
    explicit IterationCapExceeded(std::uint64_t cap);
};

/// Certificate lottery: every pass draws a fresh key pair and a fresh
/// self-signed certificate, hashes the header, and stops once the block
/// difficulty reaches `global_difficulty`. The winning key signs the hash.
MiningOutcome seal_block_pow(std::string subject, const Difficulty& global_difficulty,
                             std::uint64_t block_number, const Digest& previous_block_hash,
                             Bytes payload, const PowOptions& options = {});

/// Seals with whichever branch `mode` selects. `pow_subject` names the
/// lottery certificate in PoW mode.
MiningOutcome seal_block(const ConsensusMode& mode, std::string pow_subject,
                         std::uint64_t block_number, const Digest& previous_block_hash,
                         Bytes payload, const PowOptions& options = {});

// Leader selection for external consensus.
class ExternalScheduler {
public:
    virtual ~ExternalScheduler() = default;
    virtual std::size_t node_count() const = 0;
    virtual std::size_t next_leader(std::uint64_t block_number) = 0;
    /// Time the last election took, in seconds (zero for fixed schedules).
    virtual double last_election_time() const { return 0.0; }
};

class SingleNode final : public ExternalScheduler {
public:
    std::size_t node_count() const override { return 1; }
    std::size_t next_leader(std::uint64_t) override { return 0; }
};

class RoundRobin final : public ExternalScheduler {
public:
    explicit RoundRobin(std::size_t nodes);
    std::size_t node_count() const override { return nodes_; }
    std::size_t next_leader(std::uint64_t block_number) override { return block_number % nodes_; }

private:
    std::size_t nodes_;
};

struct ElectionTiming {
    double election_min = 0.150;  // seconds
    double election_max = 0.300;
    double network_mean = 0.010;
};

/// Toy election: every candidate waits a uniform timeout plus an exponential
/// network delay; the earliest candidate leads.
class RandomLeader final : public ExternalScheduler {
public:
    RandomLeader(std::size_t nodes, ElectionTiming timing, std::uint64_t seed);
    std::size_t node_count() const override { return nodes_; }
    std::size_t next_leader(std::uint64_t block_number) override;
    double last_election_time() const override { return last_time_; }

private:
    std::size_t nodes_;
    ElectionTiming timing_;
    std::mt19937_64 rng_;
    double last_time_ = 0.0;
};

}  // namespace r2s
