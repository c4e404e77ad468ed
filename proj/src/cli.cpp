#include "r2s/cli.hpp"

#include "r2s/chain.hpp"
#include "r2s/consensus.hpp"
#include "r2s/crypto.hpp"
#include "r2s/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <random>
#include <sstream>

namespace r2s::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

struct Failure {
    int code;
    std::string token;
    std::string detail;
};

[[noreturn]] void fail(int code, std::string token, std::string detail)
{
    throw Failure{code, std::move(token), std::move(detail)};
}

std::string read_file(const std::string& path)
{
    if (path == "-") {
        return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(kIo, "io", "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(kIo, "io", "error reading '" + path + "'");
    return ss.str();
}

void write_file(const std::string& path, const std::string& content, int code_on_failure)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(code_on_failure, "io", "cannot write '" + path + "'");
    out << content;
    out.flush();
    if (!out) fail(code_on_failure, "io", "error writing '" + path + "'");
}

/// 64 hex chars are taken as raw seed bytes; anything else must be a
/// decimal integer.
std::array<std::uint8_t, 32> parse_seed(const std::string& text)
{
    if (text.size() == 64) {
        try {
            auto bytes = from_hex(text);
            std::array<std::uint8_t, 32> out{};
            std::copy(bytes.begin(), bytes.end(), out.begin());
            return out;
        } catch (const Error&) {
        }
    }
    std::uint64_t v = 0;
    try {
        std::size_t used = 0;
        v = std::stoull(text, &used, 10);
        if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        fail(kUsage, "usage", "--seed must be 64 hex chars or a decimal integer");
    }
    std::array<std::uint8_t, 32> out{};
    for (int i = 7; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
        v >>= 8;
    }
    return out;
}

std::uint64_t parse_seed_u64(const std::optional<std::string>& text)
{
    if (!text) return std::random_device{}();
    try {
        std::size_t used = 0;
        auto v = std::stoull(*text, &used, 10);
        if (used == text->size()) return v;
    } catch (const std::exception&) {
    }
    fail(kUsage, "usage", "--seed must be a decimal integer for simulations");
}

KeyPair load_key(const std::string& path)
{
    auto text = read_file(path);
    try {
        return decode_key_file(text);
    } catch (const Error& e) {
        fail(kIo, "parse", path + ": " + e.what());
    }
}

Certificate load_cert(const std::string& path)
{
    auto text = read_file(path);
    try {
        return decode_cert_file(text);
    } catch (const Error& e) {
        fail(kIo, "parse", path + ": " + e.what());
    }
}

Manifest load_manifest(const std::string& path)
{
    auto text = read_file(path);
    try {
        return parse_manifest(text);
    } catch (const Error& e) {
        fail(kIo, "parse", path + ": " + e.what());
    }
}

std::vector<Block> load_blocks(const std::string& text)
{
    try {
        return parse_chain(text);
    } catch (const ParseError& e) {
        fail(kIo, "parse", e.what());
    }
}

Difficulty parse_difficulty(const std::string& text)
{
    try {
        return difficulty_from_string(text);
    } catch (const Error&) {
        fail(kUsage, "usage", "--difficulty must be a non-negative decimal integer");
    }
}

void emit(std::ostream& out, const std::string& format, const ordered_json& j)
{
    if (format == "text") {
        for (const auto& [k, v] : j.items()) {
            out << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
        }
    } else {
        out << j.dump() << "\n";
    }
}

// Advisory exclusive lock, released on scope exit.
class FileLock {
public:
    explicit FileLock(const std::string& path) : fd_(::open(path.c_str(), O_RDWR))
    {
        if (fd_ < 0) fail(kIo, "io", "cannot open '" + path + "'");
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            fail(kIo, "io", "cannot lock '" + path + "'");
        }
    }
    ~FileLock()
    {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_;
};

struct Globals {
    std::string chain_path = "chain.ndjson";
    std::string manifest_path = "manifest.json";
    std::optional<std::string> seed;
    std::string format = "json";
};

struct SealFlags {
    std::optional<std::string> difficulty;
    bool external = false;
    std::string key_path;
    std::string cert_path;
    std::string subject = "miner";
    unsigned workers = 1;
    std::optional<std::uint64_t> iteration_cap;
    std::optional<std::string> payload;
    std::optional<std::string> payload_file;
};

void add_seal_flags(CLI::App* cmd, SealFlags& f)
{
    auto* diff = cmd->add_option("--difficulty", f.difficulty, "PoW difficulty (> 0)");
    auto* ext = cmd->add_flag("--external", f.external, "sign with a CA-issued identity");
    diff->excludes(ext);
    cmd->add_option("--key", f.key_path, "identity private key file (external mode)");
    cmd->add_option("--cert", f.cert_path, "identity certificate file (external mode)");
    cmd->add_option("--subject", f.subject, "subject name for lottery certificates");
    cmd->add_option("--workers", f.workers, "parallel lottery workers")->check(CLI::Range(1u, 256u));
    cmd->add_option("--iteration-cap", f.iteration_cap, "abort PoW after this many draws");
    cmd->add_option("payload", f.payload, "payload text");
    cmd->add_option("--payload-file", f.payload_file, "payload file, '-' for stdin");
}

ConsensusMode mode_from(const SealFlags& f)
{
    if (f.external) {
        if (f.key_path.empty() || f.cert_path.empty()) {
            fail(kUsage, "usage", "--external requires --key and --cert");
        }
        Identity id{load_key(f.key_path), load_cert(f.cert_path)};
        if (id.certificate.public_key != id.keys.public_key) {
            fail(kUsage, "identity", "certificate does not match key");
        }
        if (id.certificate.subject == id.certificate.issuer || id.certificate.is_self_signed()) {
            fail(kUsage, "untrusted-certificate", "external mode needs a CA-signed certificate");
        }
        return ConsensusMode::external(std::move(id));
    }
    if (!f.difficulty) fail(kUsage, "usage", "choose --difficulty N (N > 0) or --external");
    auto d = parse_difficulty(*f.difficulty);
    if (d == 0) fail(kUsage, "usage", "--difficulty 0 means external consensus; use --external");
    return ConsensusMode::pow(d);
}

Bytes payload_from(const SealFlags& f)
{
    if (f.payload && f.payload_file) fail(kUsage, "usage", "give payload text or --payload-file, not both");
    std::string data;
    if (f.payload) data = *f.payload;
    if (f.payload_file) data = read_file(*f.payload_file);
    return Bytes(data.begin(), data.end());
}

MiningOutcome seal(const SealFlags& f, const Globals& g, const ConsensusMode& mode,
                   std::uint64_t number, const Digest& previous, Bytes payload,
                   std::optional<EntropySource>& entropy)
{
    PowOptions opts;
    opts.workers = f.workers;
    opts.iteration_cap = f.iteration_cap;
    if (g.seed) {
        entropy.emplace(parse_seed(*g.seed));
        opts.entropy = &*entropy;
    }
    try {
        return seal_block(mode, f.subject, number, previous, std::move(payload), opts);
    } catch (const IterationCapExceeded& e) {
        fail(kUsage, "iteration-cap", e.what());
    }
}

ordered_json seal_summary(const MiningOutcome& outcome)
{
    ordered_json j;
    j["block_number"] = outcome.block.header.block_number;
    j["block_hash"] = block_hash(outcome.block.header).hex();
    j["difficulty"] = difficulty_to_string(outcome.block.header.difficulty);
    j["iterations"] = outcome.iterations;
    return j;
}

ordered_json attestation_json(const AttestationRecord& r)
{
    ordered_json j;
    j["index"] = r.index;
    j["block_number"] = r.block_number;
    j["block_hash"] = r.block_hash.hex();
    j["mode"] = r.pow ? "pow" : "external";
    j["declared_difficulty"] = difficulty_to_string(r.declared_difficulty);
    j["achieved_difficulty"] = difficulty_to_string(r.achieved_difficulty);
    j["subject"] = r.certificate.subject;
    j["issuer"] = r.certificate.issuer;
    j["self_signed"] = r.self_signed;
    j["trusted_issuer"] = r.trusted_issuer ? ordered_json(*r.trusted_issuer) : nullptr;
    j["fingerprint"] = r.fingerprint.hex();
    j["signature_valid"] = r.signature_valid;
    j["allowlisted"] = r.allowlisted ? ordered_json(*r.allowlisted) : nullptr;
    j["certificate"] = to_base64(r.certificate.encode());
    return j;
}

int run_impl(const std::vector<std::string>& args, std::ostream& out, const Hooks& hooks)
{
    CLI::App app{"Right to Sign chain engine and simulator", "r2s"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--chain", g.chain_path, "chain file (newline-delimited JSON)");
    app.add_option("--manifest", g.manifest_path, "chain manifest file");
    app.add_option("--seed", g.seed, "seed: 64 hex chars or a decimal integer");
    app.add_option("--format", g.format, "output format")
        ->check(CLI::IsMember({"json", "text", "csv"}));

    // keygen
    auto* keygen = app.add_subcommand("keygen", "generate a signing key");
    std::string keygen_out;
    keygen->add_option("--out", keygen_out, "key file to write")->required();

    // ca-init
    auto* ca_init = app.add_subcommand("ca-init", "write a self-signed CA certificate");
    std::string ca_key, ca_name, ca_out;
    ca_init->add_option("--key", ca_key, "CA private key file")->required();
    ca_init->add_option("--name", ca_name, "CA name")->required();
    ca_init->add_option("--out", ca_out, "certificate file to write")->required();

    // cert-issue
    auto* issue = app.add_subcommand("cert-issue", "issue a certificate signed by a CA");
    std::string issue_ca_key, issue_ca_cert, issue_subject_key, issue_subject, issue_out;
    issue->add_option("--ca-key", issue_ca_key, "CA private key file")->required();
    issue->add_option("--ca-cert", issue_ca_cert, "CA certificate file")->required();
    issue->add_option("--subject-key", issue_subject_key, "subject private key file")->required();
    issue->add_option("--subject", issue_subject, "subject name")->required();
    issue->add_option("--out", issue_out, "certificate file to write")->required();

    // chain-init
    auto* init = app.add_subcommand("chain-init", "create a chain and its genesis block");
    SealFlags init_flags;
    std::vector<std::string> trust_paths, allow_paths;
    bool empty_allowlist = false;
    add_seal_flags(init, init_flags);
    init->add_option("--trust", trust_paths, "trust anchor certificate file (repeatable)")->allow_extra_args(false);
    init->add_option("--allow", allow_paths, "certificate to allowlist (repeatable)")->allow_extra_args(false);
    init->add_flag("--empty-allowlist", empty_allowlist, "activate an empty allowlist");

    // append
    auto* append = app.add_subcommand("append", "seal and append one block");
    SealFlags append_flags;
    add_seal_flags(append, append_flags);

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "verify the whole chain");

    // attest
    auto* attest = app.add_subcommand("attest", "report the attestation of one block");
    std::size_t attest_index = 0;
    attest->add_option("--index", attest_index, "block index")->required();

    // simulate
    auto* simulate = app.add_subcommand("simulate", "run a consensus simulation");
    simulate->require_subcommand(1);
    std::vector<double> rates;
    std::string sim_difficulty = "1";
    std::uint64_t blocks = 1000;
    std::string lottery = "nonce";
    std::string sim_out;
    std::size_t round_robin = 0, random_leader = 0;
    bool single = false;
    ElectionTiming timing;
    double election_min_ms = timing.election_min * 1000, election_max_ms = timing.election_max * 1000,
           network_mean_ms = timing.network_mean * 1000;

    auto* analytic = simulate->add_subcommand("pow-analytic", "exponential PoW race");
    auto* real = simulate->add_subcommand("pow-real", "hashing PoW race");
    auto* schedule = simulate->add_subcommand("schedule", "externally scheduled leaders");
    for (auto* cmd : {analytic, real}) {
        cmd->add_option("--rates", rates, "hash rates, comma separated")->delimiter(',')->required();
        cmd->add_option("--difficulty", sim_difficulty, "difficulty d >= 1");
    }
    real->add_option("--lottery", lottery, "nonce | certificate")
        ->check(CLI::IsMember({"nonce", "certificate"}));
    auto* rr = schedule->add_option("--round-robin", round_robin, "round robin over N nodes");
    auto* sn = schedule->add_flag("--single", single, "single node");
    auto* rl = schedule->add_option("--random-leader", random_leader, "random leader over N nodes");
    rr->excludes(sn)->excludes(rl);
    sn->excludes(rl);
    schedule->add_option("--election-min", election_min_ms, "election timeout lower bound (ms)");
    schedule->add_option("--election-max", election_max_ms, "election timeout upper bound (ms)");
    schedule->add_option("--network-mean", network_mean_ms, "mean network delay (ms)");
    for (auto* cmd : {analytic, real, schedule}) {
        cmd->add_option("--blocks", blocks, "number of blocks")->check(CLI::PositiveNumber);
        cmd->add_option("--out", sim_out, "write the report here instead of stdout");
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        fail(kUsage, "usage", e.what());
    }

    if (g.format == "csv" && !simulate->parsed()) {
        fail(kUsage, "usage", "--format csv only applies to simulate");
    }

    if (keygen->parsed()) {
        auto keys = g.seed ? generate_keypair(parse_seed(*g.seed)) : generate_keypair();
        write_file(keygen_out, encode_key_file(keys), kUsage);
        ordered_json j;
        j["public_key"] = to_hex(keys.public_key);
        j["key_file"] = keygen_out;
        emit(out, g.format, j);
        return kOk;
    }

    std::optional<EntropySource> entropy;
    auto entropy_ptr = [&]() -> EntropySource* {
        if (!g.seed) return nullptr;
        if (!entropy) entropy.emplace(parse_seed(*g.seed));
        return &*entropy;
    };

    if (ca_init->parsed()) {
        auto keys = load_key(ca_key);
        auto* src = entropy_ptr();
        auto cert = src ? make_self_signed_certificate(keys, ca_name, *src)
                        : make_self_signed_certificate(keys, ca_name);
        write_file(ca_out, encode_cert_file(cert), kUsage);
        ordered_json j;
        j["subject"] = cert.subject;
        j["fingerprint"] = certificate_fingerprint(cert).hex();
        emit(out, g.format, j);
        return kOk;
    }

    if (issue->parsed()) {
        auto keys = load_key(issue_ca_key);
        auto ca_cert = load_cert(issue_ca_cert);
        auto subject_keys = load_key(issue_subject_key);
        if (ca_cert.public_key != keys.public_key || !verify_self_signed(ca_cert)) {
            fail(kUsage, "identity", "CA certificate does not match the CA key");
        }
        if (issue_subject == ca_cert.subject) {
            fail(kUsage, "usage", "subject must differ from the CA name");
        }
        auto* src = entropy_ptr();
        auto cert = src ? issue_certificate(keys, ca_cert.subject, subject_keys.public_key,
                                            issue_subject, *src)
                        : issue_certificate(keys, ca_cert.subject, subject_keys.public_key,
                                            issue_subject);
        write_file(issue_out, encode_cert_file(cert), kUsage);
        ordered_json j;
        j["subject"] = cert.subject;
        j["issuer"] = cert.issuer;
        j["fingerprint"] = certificate_fingerprint(cert).hex();
        emit(out, g.format, j);
        return kOk;
    }

    if (init->parsed()) {
        Manifest manifest;
        for (const auto& p : trust_paths) {
            auto cert = load_cert(p);
            if (!verify_self_signed(cert)) {
                fail(kUsage, "untrusted-certificate", p + ": trust anchor must be self-signed");
            }
            manifest.trust.trust_anchors.push_back(std::move(cert));
        }
        if (!allow_paths.empty() || empty_allowlist) {
            Allowlist list;
            for (const auto& p : allow_paths) list.insert(certificate_fingerprint(load_cert(p)));
            manifest.trust.allowlist = std::move(list);
        }
        const auto mode = mode_from(init_flags);
        auto payload = payload_from(init_flags);

        const int fd = ::open(g.chain_path.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
        if (fd < 0) fail(kIo, "io", "cannot create '" + g.chain_path + "' (exists?)");
        ::close(fd);
        try {
            auto outcome = seal(init_flags, g, mode, 0, genesis_previous_hash(), std::move(payload), entropy);
            auto chain = Chain::open(manifest.trust, {outcome.block});
            write_file(g.manifest_path, serialize_manifest(manifest), kIo);
            write_file(g.chain_path, serialize_chain(chain.snapshot()), kIo);
            emit(out, g.format, seal_summary(outcome));
        } catch (...) {
            ::unlink(g.chain_path.c_str());
            throw;
        }
        return kOk;
    }

    if (append->parsed()) {
        const auto mode = mode_from(append_flags);
        auto payload = payload_from(append_flags);
        const auto manifest = load_manifest(g.manifest_path);

        FileLock lock(g.chain_path);
        const auto before = read_file(g.chain_path);
        auto chain = Chain::open(manifest.trust, load_blocks(before));
        auto outcome = seal(append_flags, g, mode, chain.next_block_number(), chain.tip_hash(),
                            std::move(payload), entropy);

        if (hooks.before_commit) hooks.before_commit();

        // A writer that ignored the lock may have changed the file meanwhile;
        // judge the block against what is on disk now.
        const auto current = read_file(g.chain_path);
        if (current != before) chain = Chain::open(manifest.trust, load_blocks(current));
        auto v = chain.append(outcome.block);
        if (!v) fail(kRejected, std::string(to_string(*v.reason())), "new block rejected");

        std::ofstream file(g.chain_path, std::ios::binary | std::ios::app);
        file << serialize_block(outcome.block) << '\n';
        file.flush();
        if (!file) fail(kIo, "io", "error appending to '" + g.chain_path + "'");
        emit(out, g.format, seal_summary(outcome));
        return kOk;
    }

    if (verify_cmd->parsed()) {
        const auto manifest = load_manifest(g.manifest_path);
        const auto text = read_file(g.chain_path);
        std::vector<Block> chain_blocks;
        try {
            chain_blocks = parse_chain(text);
        } catch (const ParseError& e) {
            ordered_json j;
            j["result"] = "malformed";
            j["line"] = e.line();
            emit(out, g.format, j);
            fail(kIo, "parse", e.what());
        }
        auto verdict = verify_chain(chain_blocks, manifest.trust);
        ordered_json j;
        if (verdict.accepted()) {
            j["result"] = "accept";
            j["length"] = chain_blocks.size();
            j["tip"] = block_hash(chain_blocks.back().header).hex();
            emit(out, g.format, j);
            return kOk;
        }
        j["result"] = "reject";
        j["index"] = *verdict.index;
        j["reason"] = to_string(*verdict.reason);
        emit(out, g.format, j);
        fail(kRejected, std::string(to_string(*verdict.reason)),
             "block " + std::to_string(*verdict.index));
    }

    if (attest->parsed()) {
        const auto manifest = load_manifest(g.manifest_path);
        auto snapshot = ChainSnapshot::from_blocks(load_blocks(read_file(g.chain_path)));
        if (attest_index >= snapshot.size()) {
            fail(kUsage, "usage", "--index out of range (chain has " +
                                      std::to_string(snapshot.size()) + " blocks)");
        }
        emit(out, g.format, attestation_json(attest_report(snapshot, attest_index, manifest.trust)));
        return kOk;
    }

    if (simulate->parsed()) {
        sim::SimReport report;
        try {
            if (analytic->parsed() || real->parsed()) {
                const auto d = parse_difficulty(sim_difficulty);
                if (d < 1) fail(kUsage, "usage", "--difficulty must be >= 1");
                const auto nodes = sim::make_nodes(rates);
                const auto seed = parse_seed_u64(g.seed);
                report = analytic->parsed()
                             ? sim::run_pow_race_analytic(nodes, d, blocks, seed)
                             : sim::run_pow_race_real(nodes, d, blocks, seed,
                                                      lottery == "certificate" ? sim::Lottery::certificate
                                                                               : sim::Lottery::nonce);
            } else {
                const auto seed = parse_seed_u64(g.seed);
                std::unique_ptr<ExternalScheduler> scheduler;
                std::string name;
                if (round_robin > 0) {
                    scheduler = std::make_unique<RoundRobin>(round_robin);
                    name = "round-robin";
                } else if (random_leader > 0) {
                    scheduler = std::make_unique<RandomLeader>(
                        random_leader,
                        ElectionTiming{election_min_ms / 1000, election_max_ms / 1000,
                                       network_mean_ms / 1000},
                        seed);
                    name = "random-leader";
                } else if (single) {
                    scheduler = std::make_unique<SingleNode>();
                    name = "single";
                } else {
                    fail(kUsage, "usage", "choose --round-robin N, --random-leader N or --single");
                }
                std::vector<double> ones(scheduler->node_count(), 1.0);
                report = sim::run_schedule(*scheduler, blocks, sim::make_nodes(ones), seed, name);
            }
        } catch (const Failure&) {
            throw;
        } catch (const Error& e) {
            fail(kUsage, "usage", e.what());
        }
        const auto text = g.format == "csv" ? report.to_csv() : report.to_json();
        if (sim_out.empty()) {
            out << text;
        } else {
            write_file(sim_out, text, kIo);
        }
        return kOk;
    }

    fail(kUsage, "usage", "no command");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Hooks& hooks)
{
    try {
        return run_impl(args, out, hooks);
    } catch (const Failure& f) {
        err << "error: " << f.token << ": " << f.detail << "\n";
        return f.code;
    } catch (const ChainRejected& e) {
        err << "error: " << to_string(e.reason()) << ": block " << e.index() << "\n";
        return kRejected;
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << "\n";
        return kUsage;
    }
}

}  // namespace r2s::cli
