#include "r2s/block.hpp"

#include "r2s/encoding.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <limits>

namespace r2s {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::size_t kMaxDifficultyDigits = 100;

const std::string& string_field(const ordered_json& obj, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        throw Error(std::string("missing string field '") + key + "'");
    }
    return it->get_ref<const std::string&>();
}

std::uint64_t u64_from_string(std::string_view text)
{
    auto d = difficulty_from_string(text);
    if (d > std::numeric_limits<std::uint64_t>::max()) throw Error("block number out of range");
    return static_cast<std::uint64_t>(d);
}

}  // namespace

std::string difficulty_to_string(const Difficulty& d) { return d.str(); }

Difficulty difficulty_from_string(std::string_view text)
{
    if (text.empty() || text.size() > kMaxDifficultyDigits) throw Error("invalid decimal integer");
    if (!std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw Error("invalid decimal integer");
    }
    if (text.size() > 1 && text.front() == '0') throw Error("leading zeros in decimal integer");
    return Difficulty(std::string(text));
}

Bytes difficulty_to_bytes(const Difficulty& d)
{
    Bytes out;
    if (d == 0) return out;
    export_bits(d, std::back_inserter(out), 8);
    return out;
}

Bytes header_signing_bytes(std::uint64_t block_number, const Difficulty& difficulty,
                           const Certificate& certificate, const Digest& previous_block_hash,
                           const Digest& payload_digest)
{
    CanonicalWriter w;
    w.field_u64(block_number)
        .field(difficulty_to_bytes(difficulty))
        .field(certificate.encode())
        .field(previous_block_hash.view())
        .field(payload_digest.view());
    return std::move(w).bytes();
}

Digest block_hash(std::uint64_t block_number, const Difficulty& difficulty,
                  const Certificate& certificate, const Digest& previous_block_hash,
                  const Digest& payload_digest)
{
    return hash(header_signing_bytes(block_number, difficulty, certificate, previous_block_hash,
                                     payload_digest));
}

Digest block_hash(const BlockHeader& header)
{
    return block_hash(header.block_number, header.difficulty, header.certificate,
                      header.previous_block_hash, header.payload_digest);
}

Difficulty block_difficulty(const Digest& h)
{
    Difficulty value;
    import_bits(value, h.bytes().begin(), h.bytes().end(), 8);
    return (Difficulty(1) << 256) / (value + 1);
}

Digest genesis_previous_hash() { return Digest{}; }

std::string serialize_block(const Block& block)
{
    const auto& h = block.header;
    ordered_json j;
    j["block_number"] = std::to_string(h.block_number);
    j["difficulty"] = difficulty_to_string(h.difficulty);
    j["certificate"] = to_base64(h.certificate.encode());
    j["previous_block_hash"] = h.previous_block_hash.hex();
    j["payload_digest"] = h.payload_digest.hex();
    j["signature"] = to_base64(h.signature.bytes);
    j["payload"] = to_base64(block.payload);
    return j.dump();
}

Block parse_block(std::string_view line)
{
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("block JSON: ") + e.what());
    }
    if (!j.is_object() || j.size() != 7) throw Error("block must be a JSON object with 7 keys");

    Block block;
    auto& h = block.header;
    h.block_number = u64_from_string(string_field(j, "block_number"));
    h.difficulty = difficulty_from_string(string_field(j, "difficulty"));
    h.certificate = Certificate::decode(from_base64(string_field(j, "certificate")));
    h.previous_block_hash = Digest::from_hex(string_field(j, "previous_block_hash"));
    h.payload_digest = Digest::from_hex(string_field(j, "payload_digest"));
    h.signature = Signature{from_base64(string_field(j, "signature")), h.certificate.scheme_id};
    block.payload = from_base64(string_field(j, "payload"));

    if (serialize_block(block) != line) throw Error("block line is not in canonical form");
    return block;
}

Digest ClassicPowHeader::hash() const
{
    CanonicalWriter w;
    w.field_u64(block_number)
        .field(difficulty_to_bytes(difficulty))
        .field_u64(nonce)
        .field(previous_block_hash.view());
    return r2s::hash(w.bytes());
}

ClassicPowHeader parse_classic_header(std::string_view json)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("classic header JSON: ") + e.what());
    }
    auto number = [&](const char* key) -> const nlohmann::json& {
        auto it = j.find(key);
        if (it == j.end() || !it->is_number_unsigned()) {
            throw Error(std::string("missing unsigned field '") + key + "'");
        }
        return *it;
    };
    ClassicPowHeader out;
    out.block_number = number("block_number").get<std::uint64_t>();
    out.difficulty = number("difficulty").get<std::uint64_t>();
    out.nonce = number("nonce").get<std::uint64_t>();
    auto it = j.find("previous_block_hash");
    if (it == j.end() || !it->is_string()) throw Error("missing 'previous_block_hash'");
    auto hex = it->get<std::string>();
    std::transform(hex.begin(), hex.end(), hex.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.previous_block_hash = Digest::from_hex(hex);
    return out;
}

}  // namespace r2s
