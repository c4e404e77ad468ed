#include "r2s/chain.hpp"
#include "r2s/cli.hpp"

#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace r2s;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args, const cli::Hooks& hooks = {})
{
    std::ostringstream out, err;
    int code = cli::run(args, out, err, hooks);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

const std::string kSeedA(64, 'a');
const std::string kSeedB(64, 'b');

/// Keys, a CA, and a CA-issued node certificate in `dir`.
void make_pki(const test::TempDir& dir)
{
    REQUIRE(run({"keygen", "--out", dir.file("ca.key"), "--seed", kSeedA}).code == 0);
    REQUIRE(run({"keygen", "--out", dir.file("node.key"), "--seed", kSeedB}).code == 0);
    REQUIRE(run({"ca-init", "--key", dir.file("ca.key"), "--name", "root", "--out",
                 dir.file("ca.cert")})
                .code == 0);
    REQUIRE(run({"cert-issue", "--ca-key", dir.file("ca.key"), "--ca-cert", dir.file("ca.cert"),
                 "--subject-key", dir.file("node.key"), "--subject", "node-1", "--out",
                 dir.file("node.cert")})
                .code == 0);
}

std::vector<std::string> with_chain(const test::TempDir& dir, std::vector<std::string> args)
{
    args.insert(args.end(), {"--chain", dir.file("chain.ndjson"), "--manifest", dir.file("manifest.json")});
    return args;
}

}  // namespace

TEST_CASE("keygen")
{
    test::TempDir dir;
    auto a = run({"keygen", "--out", dir.file("a.key"), "--seed", kSeedA});
    auto b = run({"keygen", "--out", dir.file("b.key"), "--seed", kSeedA});
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(slurp(dir.file("a.key")) == slurp(dir.file("b.key")));
    CHECK(a.out == run({"keygen", "--out", dir.file("a.key"), "--seed", kSeedA}).out);

    auto printed = nlohmann::json::parse(a.out)["public_key"].get<std::string>();
    CHECK(printed == to_hex(decode_key_file(slurp(dir.file("a.key"))).public_key));

    SUBCASE("unwritable path")
    {
        spit(dir.file("plain"), "x");
        auto r = run({"keygen", "--out", dir.file("plain") + "/k.key"});
        CHECK(r.code == 1);
        CHECK(r.out.empty());
        CHECK(r.err.rfind("error: io:", 0) == 0);
    }
    SUBCASE("unseeded keys differ")
    {
        run({"keygen", "--out", dir.file("c.key")});
        run({"keygen", "--out", dir.file("d.key")});
        CHECK(slurp(dir.file("c.key")) != slurp(dir.file("d.key")));
    }
    SUBCASE("bad seed") { CHECK(run({"keygen", "--out", dir.file("e.key"), "--seed", "zz"}).code == 1); }
}

TEST_CASE("ca-init and cert-issue")
{
    test::TempDir dir;
    make_pki(dir);
    auto ca = decode_cert_file(slurp(dir.file("ca.cert")));
    auto node = decode_cert_file(slurp(dir.file("node.cert")));
    CHECK(verify_self_signed(ca));
    CHECK(node.issuer == "root");
    CHECK(node.subject == "node-1");
    CHECK(verify_certificate(node, ca));

    auto tampered = node;
    tampered.subject = "node-2";
    CHECK_FALSE(verify_certificate(tampered, ca));

    REQUIRE(run({"keygen", "--out", dir.file("other.key")}).code == 0);
    REQUIRE(run({"ca-init", "--key", dir.file("other.key"), "--name", "root", "--out",
                 dir.file("other.cert")})
                .code == 0);
    CHECK_FALSE(verify_certificate(node, decode_cert_file(slurp(dir.file("other.cert")))));

    SUBCASE("CA key must match the CA certificate")
    {
        auto r = run({"cert-issue", "--ca-key", dir.file("other.key"), "--ca-cert", dir.file("ca.cert"),
                      "--subject-key", dir.file("node.key"), "--subject", "n", "--out", dir.file("x.cert")});
        CHECK(r.code == 1);
        CHECK(r.err.find("identity") != std::string::npos);
    }
    SUBCASE("bad key file")
    {
        spit(dir.file("junk.key"), "not a key");
        auto r = run({"cert-issue", "--ca-key", dir.file("junk.key"), "--ca-cert", dir.file("ca.cert"),
                      "--subject-key", dir.file("node.key"), "--subject", "n", "--out", dir.file("x.cert")});
        CHECK(r.code == 3);
        CHECK(r.err.rfind("error: parse:", 0) == 0);
    }
}

TEST_CASE("chain-init, append, verify")
{
    test::TempDir dir;
    make_pki(dir);
    auto init = run(with_chain(dir, {"chain-init", "--difficulty", "4", "--trust", dir.file("ca.cert"), "genesis"}));
    REQUIRE_MESSAGE(init.code == 0, init.err);

    auto app = run(with_chain(dir, {"append", "--difficulty", "16", "hello"}));
    REQUIRE_MESSAGE(app.code == 0, app.err);
    auto j = nlohmann::json::parse(app.out);
    CHECK(j["block_number"] == 1);
    CHECK(j["iterations"].get<std::uint64_t>() >= 1);
    CHECK(j["difficulty"] == "16");

    auto ext = run(with_chain(dir, {"append", "--external", "--key", dir.file("node.key"), "--cert",
                                    dir.file("node.cert"), "signed"}));
    REQUIRE_MESSAGE(ext.code == 0, ext.err);

    auto v = run(with_chain(dir, {"verify"}));
    CHECK(v.code == 0);
    CHECK(nlohmann::json::parse(v.out)["length"] == 3);

    SUBCASE("external append with a self-signed certificate")
    {
        const auto before = slurp(dir.file("chain.ndjson"));
        auto r = run(with_chain(dir, {"append", "--external", "--key", dir.file("ca.key"), "--cert",
                                      dir.file("ca.cert"), "x"}));
        CHECK(r.code == 1);
        CHECK(r.err.find("untrusted-certificate") != std::string::npos);
        CHECK(slurp(dir.file("chain.ndjson")) == before);
    }
    SUBCASE("conflicting mode flags")
    {
        auto r = run(with_chain(dir, {"append", "--difficulty", "4", "--external", "x"}));
        CHECK(r.code == 1);
        r = run(with_chain(dir, {"append", "--difficulty", "0", "x"}));
        CHECK(r.code == 1);
        r = run(with_chain(dir, {"append", "x"}));
        CHECK(r.code == 1);
    }
    SUBCASE("chain modified behind the lock while sealing")
    {
        const auto path = dir.file("chain.ndjson");
        std::string written;
        cli::Hooks hooks;
        hooks.before_commit = [&] {
            // Another writer, ignoring the lock, appends its own block.
            auto blocks = parse_chain(slurp(path));
            auto tip = block_hash(blocks.back().header);
            auto other = seal_block_pow("other", 2, blocks.size(), tip, test::bytes_of("race")).block;
            written = slurp(path) + serialize_block(other) + "\n";
            spit(path, written);
        };
        auto r = run(with_chain(dir, {"append", "--difficulty", "2", "mine"}), hooks);
        CHECK(r.code == 2);
        CHECK(r.err.find("bad-link") != std::string::npos);
        CHECK(slurp(path) == written);
        CHECK(run(with_chain(dir, {"verify"})).code == 0);
    }
    SUBCASE("single flipped byte")
    {
        const auto path = dir.file("chain.ndjson");
        auto text = slurp(path);
        const auto second_line = text.find('\n') + 1;
        const auto at = text.find("\"payload\":\"", second_line) + 12;
        text[at] = text[at] == 'A' ? 'B' : 'A';
        spit(path, text);
        auto r = run(with_chain(dir, {"verify"}));
        CHECK(r.code == 2);
        auto out = nlohmann::json::parse(r.out);
        CHECK(out["index"] == 1);
        CHECK(out["reason"] == "bad-payload");
        CHECK(r.err.rfind("error: bad-payload:", 0) == 0);
    }
    SUBCASE("truncated last line")
    {
        const auto path = dir.file("chain.ndjson");
        auto text = slurp(path);
        spit(path, text.substr(0, text.size() - 20));
        auto r = run(with_chain(dir, {"verify"}));
        CHECK(r.code == 3);
        CHECK(nlohmann::json::parse(r.out)["result"] == "malformed");
    }
    SUBCASE("missing files")
    {
        auto r = run({"verify", "--chain", dir.file("nope"), "--manifest", dir.file("manifest.json")});
        CHECK(r.code == 3);
        r = run({"verify", "--chain", dir.file("chain.ndjson"), "--manifest", dir.file("nope")});
        CHECK(r.code == 3);
    }
    SUBCASE("attest")
    {
        auto a0 = run(with_chain(dir, {"attest", "--index", "0"}));
        REQUIRE(a0.code == 0);
        auto r0 = nlohmann::json::parse(a0.out);
        CHECK(r0["mode"] == "pow");
        CHECK(r0["self_signed"] == true);
        auto a2 = nlohmann::json::parse(run(with_chain(dir, {"attest", "--index", "2"})).out);
        CHECK(a2["mode"] == "external");
        CHECK(a2["trusted_issuer"] == "root");
        CHECK(a2["issuer"] == "root");
        CHECK(run(with_chain(dir, {"attest", "--index", "3"})).code == 1);
    }
    SUBCASE("chain-init refuses to overwrite")
    {
        auto r = run(with_chain(dir, {"chain-init", "--difficulty", "2"}));
        CHECK(r.code == 3);
    }
}

TEST_CASE("chain-init with an allowlist that omits the genesis certificate")
{
    test::TempDir dir;
    make_pki(dir);
    REQUIRE(run({"keygen", "--out", dir.file("n2.key")}).code == 0);
    REQUIRE(run({"cert-issue", "--ca-key", dir.file("ca.key"), "--ca-cert", dir.file("ca.cert"),
                 "--subject-key", dir.file("n2.key"), "--subject", "node-2", "--out", dir.file("n2.cert")})
                .code == 0);
    auto r = run(with_chain(dir, {"chain-init", "--external", "--key", dir.file("node.key"), "--cert",
                                  dir.file("node.cert"), "--trust", dir.file("ca.cert"), "--allow",
                                  dir.file("n2.cert"), "g"}));
    CHECK(r.code == 2);
    CHECK(r.err.find("unknown-certificate") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(dir.file("chain.ndjson")));

    auto ok = run(with_chain(dir, {"chain-init", "--external", "--key", dir.file("node.key"), "--cert",
                                   dir.file("node.cert"), "--trust", dir.file("ca.cert"), "--allow",
                                   dir.file("node.cert"), "g"}));
    CHECK(ok.code == 0);
    auto rogue = run(with_chain(dir, {"append", "--difficulty", "2", "spam"}));
    CHECK(rogue.code == 2);
    CHECK(rogue.err.find("unknown-certificate") != std::string::npos);
}

TEST_CASE("round trip: init, append k times, verify, in every mode")
{
    for (std::string mode : {"pow", "external", "mixed"}) {
        CAPTURE(mode);
        test::TempDir dir;
        make_pki(dir);
        auto ext_flags = std::vector<std::string>{"--external", "--key", dir.file("node.key"), "--cert",
                                                  dir.file("node.cert")};
        auto flags_for = [&](int i) {
            if (mode == "pow" || (mode == "mixed" && i % 2 == 0)) {
                return std::vector<std::string>{"--difficulty", std::to_string(2 + i % 5)};
            }
            return ext_flags;
        };
        auto init = with_chain(dir, {"chain-init", "--trust", dir.file("ca.cert"), "g"});
        for (auto& f : flags_for(0)) init.push_back(f);
        REQUIRE(run(init).code == 0);
        for (int i = 1; i <= 50; ++i) {
            auto args = with_chain(dir, {"append", "p" + std::to_string(i)});
            for (auto& f : flags_for(i)) args.push_back(f);
            auto r = run(args);
            REQUIRE_MESSAGE(r.code == 0, r.err);
        }
        auto v = run(with_chain(dir, {"verify"}));
        CHECK(v.code == 0);
        CHECK(nlohmann::json::parse(v.out)["length"] == 51);
    }
}

TEST_CASE("seeded chain operations are reproducible")
{
    test::TempDir a, b;
    for (auto* dir : {&a, &b}) {
        REQUIRE(run(with_chain(*dir, {"chain-init", "--difficulty", "8", "--seed", "5", "g"})).code == 0);
        REQUIRE(run(with_chain(*dir, {"append", "--difficulty", "8", "--seed", "6", "x"})).code == 0);
    }
    CHECK(slurp(a.file("chain.ndjson")) == slurp(b.file("chain.ndjson")));
}

TEST_CASE("payload from file")
{
    test::TempDir dir;
    std::string binary("\x00\x01\xff\n\r", 5);
    spit(dir.file("payload.bin"), binary);
    REQUIRE(run(with_chain(dir, {"chain-init", "--difficulty", "2", "--payload-file", dir.file("payload.bin")}))
                .code == 0);
    auto blocks = parse_chain(slurp(dir.file("chain.ndjson")));
    CHECK(blocks[0].payload == Bytes(binary.begin(), binary.end()));
}

TEST_CASE("simulate")
{
    auto a = run({"simulate", "pow-analytic", "--rates", "3,1", "--blocks", "10000", "--seed", "7",
                  "--difficulty", "100"});
    REQUIRE_MESSAGE(a.code == 0, a.err);
    auto j = nlohmann::json::parse(a.out);
    CHECK(std::abs(j["nodes"][0]["win_share"].get<double>() - 0.75) <= 0.02);
    CHECK(std::abs(j["nodes"][1]["win_share"].get<double>() - 0.25) <= 0.02);
    CHECK(run({"simulate", "pow-analytic", "--rates", "3,1", "--blocks", "10000", "--seed", "7",
               "--difficulty", "100"})
              .out == a.out);

    auto rr = run({"simulate", "schedule", "--round-robin", "4", "--blocks", "400", "--seed", "1"});
    REQUIRE_MESSAGE(rr.code == 0, rr.err);
    for (const auto& n : nlohmann::json::parse(rr.out)["nodes"]) {
        CHECK(n["wins"] == 100);
        CHECK(n["win_share"] == 0.25);
    }

    auto csv = run({"simulate", "pow-real", "--rates", "1", "--difficulty", "16", "--blocks", "5",
                    "--seed", "3", "--format", "csv"});
    REQUIRE(csv.code == 0);
    CHECK(csv.out.rfind("block_index,winner,T_sample\n", 0) == 0);

    auto single = run({"simulate", "schedule", "--single", "--blocks", "10", "--seed", "1"});
    CHECK(nlohmann::json::parse(single.out)["nodes"][0]["win_share"] == 1.0);
    auto rl = run({"simulate", "schedule", "--random-leader", "3", "--blocks", "300", "--seed", "1"});
    CHECK(rl.code == 0);

    SUBCASE("invalid input")
    {
        CHECK(run({"simulate", "pow-analytic", "--rates", "3,0", "--blocks", "10"}).code == 1);
        CHECK(run({"simulate", "pow-analytic", "--rates", "3,1", "--difficulty", "0"}).code == 1);
        CHECK(run({"simulate", "pow-real", "--rates", "x"}).code == 1);
        CHECK(run({"simulate", "schedule", "--blocks", "10"}).code == 1);
        CHECK(run({"simulate"}).code == 1);
    }
}

TEST_CASE("usage errors exit 1 with a reason token")
{
    auto r = run({});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error: usage:", 0) == 0);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"keygen"}).code == 1);
    CHECK(run({"--help"}).code == 0);
}
