#include "r2s/crypto.hpp"

#include "r2s/encoding.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>

namespace r2s {

namespace {

void ensure_sodium()
{
    static const bool ready = [] {
        if (sodium_init() < 0) throw Error("libsodium initialisation failed");
        return true;
    }();
    (void)ready;
}

Signature sign_raw(const KeyPair& keys, ByteView message)
{
    if (keys.private_key.size() != crypto_sign_SECRETKEYBYTES) {
        throw Error("private key must be 64 bytes");
    }
    Signature sig;
    sig.scheme_id = keys.scheme_id;
    sig.bytes.resize(crypto_sign_BYTES);
    crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(),
                         keys.private_key.data());
    return sig;
}

void fill_random(EntropySource* entropy, std::span<std::uint8_t> out)
{
    if (entropy) {
        entropy->fill(out);
    } else {
        ensure_sodium();
        randombytes_buf(out.data(), out.size());
    }
}

Certificate make_certificate(const KeyPair& signer, std::string issuer, ByteView public_key,
                             std::string subject, EntropySource* entropy)
{
    Certificate cert;
    cert.subject = std::move(subject);
    cert.issuer = std::move(issuer);
    fill_random(entropy, cert.serial);
    cert.public_key.assign(public_key.begin(), public_key.end());
    cert.scheme_id = signer.scheme_id;
    cert.issuer_signature = sign_raw(signer, cert.to_be_signed()).bytes;
    return cert;
}

}  // namespace

Digest Digest::from_hex(std::string_view hex)
{
    return from_bytes(r2s::from_hex(hex));
}

Digest Digest::from_bytes(ByteView bytes)
{
    if (bytes.size() != size) throw Error("digest must be 32 bytes");
    std::array<std::uint8_t, size> out{};
    std::copy(bytes.begin(), bytes.end(), out.begin());
    return Digest(out);
}

std::string Digest::hex() const { return to_hex(bytes_); }

std::array<std::uint8_t, 32> KeyPair::seed() const
{
    if (private_key.size() != crypto_sign_SECRETKEYBYTES) throw Error("private key must be 64 bytes");
    std::array<std::uint8_t, 32> out{};
    std::copy_n(private_key.begin(), out.size(), out.begin());
    return out;
}

EntropySource EntropySource::from_u64(std::uint64_t seed)
{
    std::array<std::uint8_t, 32> bytes{};
    for (int i = 7; i >= 0; --i) {
        bytes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(seed);
        seed >>= 8;
    }
    return EntropySource(bytes);
}

void EntropySource::fill(std::span<std::uint8_t> out)
{
    ensure_sodium();
    if (!seed_) {
        randombytes_buf(out.data(), out.size());
        return;
    }
    // Each draw gets its own ChaCha20 key: SHA-256(seed || counter).
    std::array<std::uint8_t, 40> material{};
    std::copy(seed_->begin(), seed_->end(), material.begin());
    std::uint64_t c = counter_++;
    for (int i = 39; i >= 32; --i) {
        material[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(c);
        c >>= 8;
    }
    std::array<std::uint8_t, randombytes_SEEDBYTES> key{};
    crypto_hash_sha256(key.data(), material.data(), material.size());
    randombytes_buf_deterministic(out.data(), out.size(), key.data());
}

CryptoCounters& crypto_counters()
{
    thread_local CryptoCounters counters;
    return counters;
}

Digest hash(ByteView data)
{
    ensure_sodium();
    ++crypto_counters().hashes;
    std::array<std::uint8_t, Digest::size> out{};
    crypto_hash_sha256(out.data(), data.data(), data.size());
    return Digest(out);
}

KeyPair generate_keypair()
{
    ensure_sodium();
    std::array<std::uint8_t, crypto_sign_SEEDBYTES> seed{};
    randombytes_buf(seed.data(), seed.size());
    return generate_keypair(seed);
}

KeyPair generate_keypair(ByteView seed)
{
    ensure_sodium();
    if (seed.size() != crypto_sign_SEEDBYTES) throw Error("key seed must be 32 bytes");
    KeyPair keys;
    keys.private_key.resize(crypto_sign_SECRETKEYBYTES);
    keys.public_key.resize(crypto_sign_PUBLICKEYBYTES);
    crypto_sign_seed_keypair(keys.public_key.data(), keys.private_key.data(), seed.data());
    return keys;
}

KeyPair generate_keypair(EntropySource& entropy)
{
    std::array<std::uint8_t, crypto_sign_SEEDBYTES> seed{};
    entropy.fill(seed);
    return generate_keypair(seed);
}

Signature sign(const KeyPair& keys, ByteView message)
{
    ensure_sodium();
    return sign_raw(keys, message);
}

bool verify(ByteView public_key, ByteView message, const Signature& sig)
{
    ensure_sodium();
    ++crypto_counters().sig_verifies;
    if (sig.scheme_id != kEd25519) return false;
    if (public_key.size() != crypto_sign_PUBLICKEYBYTES) return false;
    if (sig.bytes.size() != crypto_sign_BYTES) return false;
    return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(),
                                       public_key.data()) == 0;
}

Bytes Certificate::to_be_signed() const
{
    CanonicalWriter w;
    w.field(subject).field(issuer).field(serial).field(public_key).field(scheme_id);
    return std::move(w).bytes();
}

Bytes Certificate::encode() const
{
    CanonicalWriter w;
    w.field(subject)
        .field(issuer)
        .field(serial)
        .field(public_key)
        .field(scheme_id)
        .field(issuer_signature);
    return std::move(w).bytes();
}

Certificate Certificate::decode(ByteView encoded)
{
    CanonicalReader r(encoded);
    Certificate cert;
    cert.subject = r.text_field();
    cert.issuer = r.text_field();
    auto serial = r.field();
    if (serial.size() != cert.serial.size()) throw Error("certificate serial must be 16 bytes");
    std::copy(serial.begin(), serial.end(), cert.serial.begin());
    auto pk = r.field();
    cert.public_key.assign(pk.begin(), pk.end());
    cert.scheme_id = r.text_field();
    auto sig = r.field();
    cert.issuer_signature.assign(sig.begin(), sig.end());
    r.expect_done();
    return cert;
}

bool Certificate::is_self_signed() const { return verify_self_signed(*this); }

Certificate make_self_signed_certificate(const KeyPair& keys, std::string subject)
{
    auto issuer = subject;
    return make_certificate(keys, std::move(issuer), keys.public_key, std::move(subject), nullptr);
}

Certificate make_self_signed_certificate(const KeyPair& keys, std::string subject,
                                         EntropySource& entropy)
{
    auto issuer = subject;
    return make_certificate(keys, std::move(issuer), keys.public_key, std::move(subject), &entropy);
}

Certificate issue_certificate(const KeyPair& ca_keys, std::string ca_name,
                              ByteView subject_public_key, std::string subject)
{
    if (subject == ca_name) throw Error("subject equals CA name; use a self-signed certificate");
    return make_certificate(ca_keys, std::move(ca_name), subject_public_key, std::move(subject),
                            nullptr);
}

Certificate issue_certificate(const KeyPair& ca_keys, std::string ca_name,
                              ByteView subject_public_key, std::string subject,
                              EntropySource& entropy)
{
    if (subject == ca_name) throw Error("subject equals CA name; use a self-signed certificate");
    return make_certificate(ca_keys, std::move(ca_name), subject_public_key, std::move(subject),
                            &entropy);
}

bool verify_certificate(const Certificate& cert, const Certificate& trust_anchor)
{
    if (cert.issuer != trust_anchor.subject) return false;
    if (cert.scheme_id != trust_anchor.scheme_id) return false;
    return verify(trust_anchor.public_key, cert.to_be_signed(),
                  Signature{cert.issuer_signature, cert.scheme_id});
}

bool verify_self_signed(const Certificate& cert)
{
    if (cert.subject != cert.issuer) return false;
    return verify(cert.public_key, cert.to_be_signed(),
                  Signature{cert.issuer_signature, cert.scheme_id});
}

Digest certificate_fingerprint(const Certificate& cert) { return hash(cert.encode()); }

std::string to_hex(ByteView bytes)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0F]);
    }
    return out;
}

Bytes from_hex(std::string_view hex)
{
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    if (hex.size() % 2 != 0) throw Error("hex string has odd length");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(hex[2 * i]);
        int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw Error("invalid lowercase hex");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

std::string to_base64(ByteView bytes)
{
    ensure_sodium();
    const auto variant = sodium_base64_VARIANT_ORIGINAL;
    std::string out(sodium_base64_ENCODED_LEN(bytes.size(), variant), '\0');
    sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
    out.resize(out.size() - 1);  // drop terminator
    return out;
}

Bytes from_base64(std::string_view text)
{
    ensure_sodium();
    Bytes out(text.size() / 4 * 3 + 3);
    std::size_t len = 0;
    const char* end = nullptr;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, &end,
                          sodium_base64_VARIANT_ORIGINAL) != 0 ||
        end != text.data() + text.size()) {
        throw Error("invalid base64");
    }
    out.resize(len);
    if (to_base64(out) != text) throw Error("non-canonical base64");
    return out;
}

namespace {

std::string_view envelope_body(std::string_view text, std::string_view header)
{
    if (text.substr(0, header.size()) != header || text.size() <= header.size() ||
        text[header.size()] != '\n') {
        throw Error("missing envelope header '" + std::string(header) + "'");
    }
    auto body = text.substr(header.size() + 1);
    if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
    if (body.find('\n') != std::string_view::npos) throw Error("envelope body must be one line");
    return body;
}

}  // namespace

std::string encode_key_file(const KeyPair& keys)
{
    auto seed = keys.seed();
    return std::string(kKeyFileHeader) + "\n" + to_base64(seed) + "\n";
}

KeyPair decode_key_file(std::string_view text)
{
    auto seed = from_base64(envelope_body(text, kKeyFileHeader));
    if (seed.size() != crypto_sign_SEEDBYTES) throw Error("key file seed must be 32 bytes");
    return generate_keypair(seed);
}

std::string encode_cert_file(const Certificate& cert)
{
    return std::string(kCertFileHeader) + "\n" + to_base64(cert.encode()) + "\n";
}

Certificate decode_cert_file(std::string_view text)
{
    return Certificate::decode(from_base64(envelope_body(text, kCertFileHeader)));
}

}  // namespace r2s
