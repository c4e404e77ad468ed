#pragma once

#include "r2s/block.hpp"
#include "r2s/consensus.hpp"

#include <cstddef>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace r2s {

struct ChainEntry {
    std::shared_ptr<const Block> block;
    Digest hash;
};

/// Point-in-time view of a chain. Later appends never show up in, or tear,
/// an existing snapshot.
class ChainSnapshot {
public:
    ChainSnapshot() = default;
    explicit ChainSnapshot(std::vector<ChainEntry> entries) : entries_(std::move(entries)) {}
    /// Wraps blocks without verifying them.
    static ChainSnapshot from_blocks(std::vector<Block> blocks);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const Block& block(std::size_t i) const { return *entries_.at(i).block; }
    const Digest& hash(std::size_t i) const { return entries_.at(i).hash; }
    const Digest& tip_hash() const { return entries_.back().hash; }
    std::vector<Block> blocks() const;

private:
    std::vector<ChainEntry> entries_;
};

struct ChainVerdict {
    std::optional<std::size_t> index;
    std::optional<RejectReason> reason;

    bool accepted() const { return !reason; }
    static ChainVerdict accept() { return {}; }
};

/// Sequential check from genesis; reports the first failing index.
ChainVerdict verify_chain(std::span<const Block> blocks, const TrustPolicy& trust);
ChainVerdict verify_chain(const ChainSnapshot& snapshot, const TrustPolicy& trust);

class ChainRejected : public Error {
public:
    ChainRejected(std::size_t index, RejectReason reason);
    std::size_t index() const { return index_; }
    RejectReason reason() const { return reason_; }

private:
    std::size_t index_;
    RejectReason reason_;
};

/// Append-only block store. Appends are serialized; readers work on
/// snapshots. Append is the only mutating operation.
class Chain {
public:
    /// Seals the genesis block under `genesis_mode` and verifies it.
    /// Throws ChainRejected if the genesis block fails verification
    /// (for example, when an allowlist does not admit its certificate).
    static Chain init(TrustPolicy trust, Bytes genesis_payload, const ConsensusMode& genesis_mode,
                      const PowOptions& pow_options = {}, std::string pow_subject = "genesis");

    /// Adopts existing blocks after full verification; throws ChainRejected.
    static Chain open(TrustPolicy trust, std::vector<Block> blocks);

    /// Appends iff verify_block accepts the block against the current tip.
    Verdict append(Block block);

    ChainSnapshot snapshot() const;
    std::size_t size() const;
    Digest tip_hash() const;
    std::uint64_t next_block_number() const;
    const TrustPolicy& trust() const { return trust_; }

private:
    struct Store {
        mutable std::shared_mutex mutex;
        std::vector<ChainEntry> entries;
    };

    explicit Chain(TrustPolicy trust);

    TrustPolicy trust_;
    std::unique_ptr<Store> store_;
};

struct AttestationRecord {
    std::size_t index = 0;
    std::uint64_t block_number = 0;
    Digest block_hash;
    bool pow = false;
    Difficulty declared_difficulty = 0;
    Difficulty achieved_difficulty = 0;
    Certificate certificate;
    Digest fingerprint;
    bool self_signed = false;
    /// Subject of the trust anchor that issued the certificate, if any.
    std::optional<std::string> trusted_issuer;
    bool signature_valid = false;
    std::optional<bool> allowlisted;
};

/// Read-only report of who attested block `index` and how.
/// Throws std::out_of_range for a bad index.
AttestationRecord attest_report(const ChainSnapshot& chain, std::size_t index,
                                const TrustPolicy& trust);

// Files.

/// Sidecar manifest: trust anchors, optional allowlist, signature scheme.
struct Manifest {
    TrustPolicy trust;
    std::string scheme_id{kEd25519};
};

std::string serialize_manifest(const Manifest& manifest);
Manifest parse_manifest(std::string_view text);

/// One canonical block per line, genesis first, newline-terminated.
std::string serialize_chain(std::span<const Block> blocks);
std::string serialize_chain(const ChainSnapshot& snapshot);

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

std::vector<Block> parse_chain(std::string_view text);

}  // namespace r2s
