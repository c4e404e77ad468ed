#pragma once

#include "r2s/chain.hpp"
#include "r2s/consensus.hpp"
#include "r2s/crypto.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace r2s::test {

inline Bytes bytes_of(std::string_view s) { return Bytes(s.begin(), s.end()); }

/// A CA plus CA-issued node identities, all from one seed.
struct Pki {
    KeyPair ca_keys;
    Certificate ca_cert;
    std::vector<Identity> nodes;

    explicit Pki(std::uint64_t seed, std::size_t node_count = 2, std::string ca_name = "root")
    {
        auto entropy = EntropySource::from_u64(seed);
        ca_keys = generate_keypair(entropy);
        ca_cert = make_self_signed_certificate(ca_keys, ca_name, entropy);
        for (std::size_t i = 0; i < node_count; ++i) {
            auto keys = generate_keypair(entropy);
            auto cert = issue_certificate(ca_keys, ca_name, keys.public_key,
                                          "node-" + std::to_string(i + 1), entropy);
            nodes.push_back({std::move(keys), std::move(cert)});
        }
    }

    TrustPolicy trust() const { return TrustPolicy{{ca_cert}, std::nullopt}; }
};

/// Builds a chain alternating PoW blocks (difficulties cycling through
/// `difficulties`) and external blocks signed by the PKI nodes.
inline std::vector<Block> build_mixed_chain(const Pki& pki, std::size_t length,
                                            std::vector<int> difficulties, std::uint64_t seed)
{
    auto entropy = EntropySource::from_u64(seed);
    std::vector<Block> blocks;
    Digest previous = genesis_previous_hash();
    std::size_t pow_i = 0;
    for (std::size_t i = 0; i < length; ++i) {
        auto payload = bytes_of("payload #" + std::to_string(i));
        Block b;
        if (i % 2 == 0) {
            PowOptions opts;
            opts.entropy = &entropy;
            const int d = difficulties[pow_i++ % difficulties.size()];
            b = seal_block_pow("miner", d, i, previous, payload, opts).block;
        } else {
            b = seal_block_external(pki.nodes[i % pki.nodes.size()], i, previous, payload);
        }
        previous = block_hash(b.header);
        blocks.push_back(std::move(b));
    }
    return blocks;
}

class TempDir {
public:
    TempDir()
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("r2s-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace r2s::test
