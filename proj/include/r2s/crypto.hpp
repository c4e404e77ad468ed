#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace r2s {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s)
{
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// Raised for malformed inputs to constructors and codecs.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 32-byte SHA-256 value. Used both as block hash and as certificate fingerprint.
class Digest {
public:
    static constexpr std::size_t size = 32;

    Digest() = default;
    explicit Digest(const std::array<std::uint8_t, size>& bytes) : bytes_(bytes) {}

    static Digest from_hex(std::string_view hex);
    static Digest from_bytes(ByteView bytes);

    const std::array<std::uint8_t, size>& bytes() const { return bytes_; }
    ByteView view() const { return bytes_; }
    std::string hex() const;

    friend bool operator==(const Digest&, const Digest&) = default;
    friend auto operator<=>(const Digest&, const Digest&) = default;

private:
    std::array<std::uint8_t, size> bytes_{};
};

struct DigestHash {
    std::size_t operator()(const Digest& d) const noexcept
    {
        // SHA-256 output is uniform, so the leading word is already a good hash.
        std::size_t h = 0;
        for (std::size_t i = 0; i < sizeof(h); ++i) h = (h << 8) | d.bytes()[i];
        return h;
    }
};

inline constexpr std::string_view kEd25519 = "ed25519";

struct Signature {
    Bytes bytes;
    std::string scheme_id{kEd25519};

    friend bool operator==(const Signature&, const Signature&) = default;
};

/// Ed25519 key pair. The private key is libsodium's 64-byte expanded form,
/// whose first 32 bytes are the seed.
struct KeyPair {
    Bytes private_key;
    Bytes public_key;
    std::string scheme_id{kEd25519};

    std::array<std::uint8_t, 32> seed() const;
    friend bool operator==(const KeyPair&, const KeyPair&) = default;
};

struct Certificate {
    std::string subject;
    std::string issuer;
    std::array<std::uint8_t, 16> serial{};
    Bytes public_key;
    std::string scheme_id{kEd25519};
    Bytes issuer_signature;

    /// Fields up to (excluding) issuer_signature; this is what the issuer signs.
    Bytes to_be_signed() const;
    /// All fields, length-prefixed, fixed order.
    Bytes encode() const;
    static Certificate decode(ByteView encoded);

    bool is_self_signed() const;

    friend bool operator==(const Certificate&, const Certificate&) = default;
};

/// Source of key seeds and serial numbers. System-random by default; a seeded
/// source replays the same stream, which makes mining reproducible in tests.
class EntropySource {
public:
    EntropySource() = default;
    explicit EntropySource(const std::array<std::uint8_t, 32>& seed) : seed_(seed) {}

    static EntropySource from_u64(std::uint64_t seed);

    void fill(std::span<std::uint8_t> out);
    bool deterministic() const { return seed_.has_value(); }

private:
    std::optional<std::array<std::uint8_t, 32>> seed_;
    std::uint64_t counter_ = 0;
};

// Operation counters, per thread. Only hash() and verify() are counted.
struct CryptoCounters {
    std::uint64_t hashes = 0;
    std::uint64_t sig_verifies = 0;
};
CryptoCounters& crypto_counters();

Digest hash(ByteView data);
inline Digest hash(std::string_view data) { return hash(as_bytes(data)); }

KeyPair generate_keypair();
KeyPair generate_keypair(ByteView seed);
KeyPair generate_keypair(EntropySource& entropy);

Signature sign(const KeyPair& keys, ByteView message);
/// Never throws; malformed keys or signatures verify false.
bool verify(ByteView public_key, ByteView message, const Signature& sig);

Certificate make_self_signed_certificate(const KeyPair& keys, std::string subject);
Certificate make_self_signed_certificate(const KeyPair& keys, std::string subject,
                                         EntropySource& entropy);

Certificate issue_certificate(const KeyPair& ca_keys, std::string ca_name,
                              ByteView subject_public_key, std::string subject);
Certificate issue_certificate(const KeyPair& ca_keys, std::string ca_name,
                              ByteView subject_public_key, std::string subject,
                              EntropySource& entropy);

/// True iff cert.issuer names the anchor and the issuer signature verifies
/// under the anchor's key. With cert == anchor this checks self-signing.
bool verify_certificate(const Certificate& cert, const Certificate& trust_anchor);
bool verify_self_signed(const Certificate& cert);

Digest certificate_fingerprint(const Certificate& cert);

// Codecs shared by the on-disk formats.
std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);
std::string to_base64(ByteView bytes);
/// Rejects anything that does not re-encode to exactly the same text.
Bytes from_base64(std::string_view text);

// Key and certificate files: header line plus one base64 line.
inline constexpr std::string_view kKeyFileHeader = "R2S-PRIVATE-KEY v1";
inline constexpr std::string_view kCertFileHeader = "R2S-CERT v1";

std::string encode_key_file(const KeyPair& keys);
KeyPair decode_key_file(std::string_view text);
std::string encode_cert_file(const Certificate& cert);
Certificate decode_cert_file(std::string_view text);

}  // namespace r2s

template <>
struct std::hash<r2s::Digest> : r2s::DigestHash {};
