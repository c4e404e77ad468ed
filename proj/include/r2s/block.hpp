#pragma once

#include "r2s/crypto.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <string>
#include <string_view>

namespace r2s {

/// Unbounded non-negative integer; block_difficulty of the zero digest is 2^256.
using Difficulty = boost::multiprecision::cpp_int;

std::string difficulty_to_string(const Difficulty& d);
/// Strict decimal: digits only, no sign, no leading zeros.
Difficulty difficulty_from_string(std::string_view text);
/// Minimal big-endian magnitude; zero encodes as no bytes.
Bytes difficulty_to_bytes(const Difficulty& d);

/// Hybrid header. `difficulty == 0` marks an externally agreed block signed
/// under a CA certificate; otherwise the certificate is the winning
/// self-signed lottery ticket.
struct BlockHeader {
    std::uint64_t block_number = 0;
    Difficulty difficulty = 0;
    Certificate certificate;
    Digest previous_block_hash;
    Digest payload_digest;
    Signature signature;

    bool is_pow() const { return difficulty > 0; }
    friend bool operator==(const BlockHeader&, const BlockHeader&) = default;
};

struct Block {
    BlockHeader header;
    Bytes payload;

    friend bool operator==(const Block&, const Block&) = default;
};

/// Canonical bytes of every header field except the signature.
Bytes header_signing_bytes(std::uint64_t block_number, const Difficulty& difficulty,
                           const Certificate& certificate, const Digest& previous_block_hash,
                           const Digest& payload_digest);

Digest block_hash(std::uint64_t block_number, const Difficulty& difficulty,
                  const Certificate& certificate, const Digest& previous_block_hash,
                  const Digest& payload_digest);
Digest block_hash(const BlockHeader& header);

/// floor(2^256 / (h + 1)), reading h as a big-endian integer.
Difficulty block_difficulty(const Digest& h);

Digest genesis_previous_hash();

/// One JSON object, keys in fixed order, no whitespace, no trailing newline.
std::string serialize_block(const Block& block);
/// Inverse of serialize_block. Anything that does not re-serialize to the
/// identical text is rejected, so every accepted line has one spelling.
Block parse_block(std::string_view line);

/// Nonce-based header of classic proof of work. Used only by the reference
/// miner in the simulator.
struct ClassicPowHeader {
    std::uint64_t block_number = 0;
    Difficulty difficulty = 0;
    std::uint64_t nonce = 0;
    Digest previous_block_hash;

    Digest hash() const;
};

/// Reads the classic JSON layout, e.g.
/// {"block_number": 1, "difficulty": 45323, "nonce": 42, "previous_block_hash": "2D71..."}
/// Numbers are plain JSON integers and the hash may be upper case.
ClassicPowHeader parse_classic_header(std::string_view json);

}  // namespace r2s
