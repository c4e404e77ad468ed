#include "r2s/chain.hpp"

#include <mutex>
#include <stdexcept>

namespace r2s {

std::vector<Block> ChainSnapshot::blocks() const
{
    std::vector<Block> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(*e.block);
    return out;
}

ChainSnapshot ChainSnapshot::from_blocks(std::vector<Block> blocks)
{
    std::vector<ChainEntry> entries;
    entries.reserve(blocks.size());
    for (auto& b : blocks) {
        const auto h = block_hash(b.header);
        entries.push_back({std::make_shared<const Block>(std::move(b)), h});
    }
    return ChainSnapshot(std::move(entries));
}

namespace {

template <typename BlockAt>
ChainVerdict verify_sequence(std::size_t n, BlockAt block_at, const TrustPolicy& trust)
{
    Digest expected_previous = genesis_previous_hash();
    for (std::size_t i = 0; i < n; ++i) {
        const Block& b = block_at(i);
        auto v = verify_block(b, expected_previous, i, trust);
        if (!v) return ChainVerdict{i, v.reason()};
        expected_previous = block_hash(b.header);
    }
    return ChainVerdict::accept();
}

}  // namespace

ChainVerdict verify_chain(std::span<const Block> blocks, const TrustPolicy& trust)
{
    return verify_sequence(blocks.size(), [&](std::size_t i) -> const Block& { return blocks[i]; },
                           trust);
}

ChainVerdict verify_chain(const ChainSnapshot& snapshot, const TrustPolicy& trust)
{
    return verify_sequence(snapshot.size(),
                           [&](std::size_t i) -> const Block& { return snapshot.block(i); },
                           trust);
}

ChainRejected::ChainRejected(std::size_t index, RejectReason reason)
    : Error("block " + std::to_string(index) + " rejected: " + std::string(to_string(reason))),
      index_(index),
      reason_(reason)
{
}

Chain::Chain(TrustPolicy trust) : trust_(std::move(trust)), store_(std::make_unique<Store>()) {}

Chain Chain::init(TrustPolicy trust, Bytes genesis_payload, const ConsensusMode& genesis_mode,
                  const PowOptions& pow_options, std::string pow_subject)
{
    Chain chain(std::move(trust));
    auto outcome = seal_block(genesis_mode, std::move(pow_subject), 0, genesis_previous_hash(),
                              std::move(genesis_payload), pow_options);
    auto v = chain.append(std::move(outcome.block));
    if (!v) throw ChainRejected(0, *v.reason());
    return chain;
}

Chain Chain::open(TrustPolicy trust, std::vector<Block> blocks)
{
    Chain chain(std::move(trust));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        auto v = chain.append(std::move(blocks[i]));
        if (!v) throw ChainRejected(i, *v.reason());
    }
    return chain;
}

Verdict Chain::append(Block block)
{
    std::unique_lock lock(store_->mutex);
    auto& entries = store_->entries;
    const Digest previous = entries.empty() ? genesis_previous_hash() : entries.back().hash;
    auto v = verify_block(block, previous, entries.size(), trust_);
    if (!v) return v;
    const auto h = block_hash(block.header);
    entries.push_back({std::make_shared<const Block>(std::move(block)), h});
    return v;
}

ChainSnapshot Chain::snapshot() const
{
    std::shared_lock lock(store_->mutex);
    return ChainSnapshot(store_->entries);
}

std::size_t Chain::size() const
{
    std::shared_lock lock(store_->mutex);
    return store_->entries.size();
}

Digest Chain::tip_hash() const
{
    std::shared_lock lock(store_->mutex);
    return store_->entries.empty() ? genesis_previous_hash() : store_->entries.back().hash;
}

std::uint64_t Chain::next_block_number() const { return size(); }

AttestationRecord attest_report(const ChainSnapshot& chain, std::size_t index,
                                const TrustPolicy& trust)
{
    if (index >= chain.size()) {
        throw std::out_of_range("block index " + std::to_string(index) + " out of range");
    }
    const auto& h = chain.block(index).header;
    AttestationRecord r;
    r.index = index;
    r.block_number = h.block_number;
    r.block_hash = block_hash(h);
    r.pow = h.is_pow();
    r.declared_difficulty = h.difficulty;
    r.achieved_difficulty = block_difficulty(r.block_hash);
    r.certificate = h.certificate;
    r.fingerprint = certificate_fingerprint(h.certificate);
    r.self_signed = verify_self_signed(h.certificate);
    if (const auto* anchor = trust.issuing_anchor(h.certificate)) r.trusted_issuer = anchor->subject;
    r.signature_valid = verify(h.certificate.public_key, r.block_hash.view(), h.signature);
    if (trust.allowlist) r.allowlisted = trust.allowlist->contains(r.fingerprint);
    return r;
}

}  // namespace r2s
