#include "r2s/chain.hpp"

#include <json.hpp>

namespace r2s {

using ordered_json = nlohmann::ordered_json;

std::string serialize_manifest(const Manifest& manifest)
{
    ordered_json j;
    j["trust_anchors"] = ordered_json::array();
    for (const auto& anchor : manifest.trust.trust_anchors) {
        j["trust_anchors"].push_back(to_base64(anchor.encode()));
    }
    if (manifest.trust.allowlist) {
        j["allowlist"] = ordered_json::array();
        for (const auto& fp : manifest.trust.allowlist->sorted()) j["allowlist"].push_back(fp.hex());
    } else {
        j["allowlist"] = nullptr;
    }
    j["scheme_id"] = manifest.scheme_id;
    return j.dump(2) + "\n";
}

Manifest parse_manifest(std::string_view text)
{
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("manifest JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error("manifest must be a JSON object");

    Manifest m;
    auto scheme = j.find("scheme_id");
    if (scheme == j.end() || !scheme->is_string()) throw Error("manifest: missing scheme_id");
    m.scheme_id = scheme->get<std::string>();
    if (m.scheme_id != kEd25519) throw Error("manifest: unsupported scheme '" + m.scheme_id + "'");

    auto anchors = j.find("trust_anchors");
    if (anchors == j.end() || !anchors->is_array()) throw Error("manifest: missing trust_anchors");
    for (const auto& a : *anchors) {
        if (!a.is_string()) throw Error("manifest: trust anchor must be a base64 string");
        auto cert = Certificate::decode(from_base64(a.get<std::string>()));
        if (!verify_self_signed(cert)) {
            throw Error("manifest: trust anchor '" + cert.subject + "' is not validly self-signed");
        }
        m.trust.trust_anchors.push_back(std::move(cert));
    }

    auto allow = j.find("allowlist");
    if (allow == j.end()) throw Error("manifest: missing allowlist (use null for none)");
    if (!allow->is_null()) {
        if (!allow->is_array()) throw Error("manifest: allowlist must be an array or null");
        Allowlist list;
        for (const auto& fp : *allow) {
            if (!fp.is_string()) throw Error("manifest: allowlist entries must be hex strings");
            list.insert(Digest::from_hex(fp.get<std::string>()));
        }
        m.trust.allowlist = std::move(list);
    }
    return m;
}

std::string serialize_chain(std::span<const Block> blocks)
{
    std::string out;
    for (const auto& b : blocks) {
        out += serialize_block(b);
        out += '\n';
    }
    return out;
}

std::string serialize_chain(const ChainSnapshot& snapshot)
{
    std::string out;
    for (std::size_t i = 0; i < snapshot.size(); ++i) {
        out += serialize_block(snapshot.block(i));
        out += '\n';
    }
    return out;
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : Error("line " + std::to_string(line) + ": " + what), line_(line)
{
}

std::vector<Block> parse_chain(std::string_view text)
{
    if (text.empty()) throw ParseError(1, "empty chain file");
    if (text.back() != '\n') throw ParseError(1, "chain file must end with a newline");

    std::vector<Block> blocks;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        ++line_no;
        const auto end = text.find('\n', pos);
        const auto line = text.substr(pos, end - pos);
        if (line.empty()) throw ParseError(line_no, "empty line");
        try {
            blocks.push_back(parse_block(line));
        } catch (const Error& e) {
            throw ParseError(line_no, e.what());
        }
        pos = end + 1;
    }
    return blocks;
}

}  // namespace r2s
