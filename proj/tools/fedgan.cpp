// Consortium simulator and transcript auditor.
//
// Exit codes: 0 success (audit pass), 1 audit failure, 2 usage/config error,
// 3 training stall.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fedgan/audit.hpp"
#include "fedgan/registry.hpp"

namespace fs = std::filesystem;
using namespace fedgan;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

void write_bytes(const fs::path& path, const Bytes& content) {
    write_file(path, std::string_view(
                         reinterpret_cast<const char*>(content.data()),
                         content.size()));
}

std::string matrix_csv(const Eigen::MatrixXd& m) {
    std::ostringstream out;
    out.precision(17);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        out << (c ? "," : "") << "v" << c;
    out << "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            out << (c ? "," : "") << m(r, c);
        out << "\n";
    }
    return out.str();
}

Json generator_json(const ModelParams& params) {
    Json layers = Json::array();
    for (const Layer& l : params.layers) {
        std::vector<std::vector<double>> w(l.weights.rows());
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
                w[r].push_back(l.weights(r, c));
        std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
        const char* act = l.activation == Activation::Tanh      ? "tanh"
                          : l.activation == Activation::Sigmoid ? "sigmoid"
                                                                : "linear";
        layers.push_back(Json{{"weights", w}, {"bias", b}, {"activation", act}});
    }
    return Json{{"layers", layers}};
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed,
                 bool seed_set, const std::vector<std::string>& fault_args,
                 const std::string& out_dir, bool quiet) {
    SimConfig cfg;
    if (!config_path.empty())
        cfg = SimConfig::from_json(Json::parse(read_file(config_path)));
    if (seed_set) cfg.seed = seed;
    for (const std::string& f : fault_args)
        cfg.faults.push_back(FaultSpec::parse(f));
    cfg.validate();

    fs::create_directories(out_dir);
    Simulation sim(cfg);
    SimResult result = sim.run();

    write_file(fs::path(out_dir) / "transcript.jsonl", result.transcript);
    write_file(fs::path(out_dir) / "summary.json",
               result.summary.to_json().dump(2) + "\n");
    write_file(fs::path(out_dir) / "config.json",
               cfg.to_json().dump(2) + "\n");
    write_file(fs::path(out_dir) / "final_generator.json",
               generator_json(result.final_generator).dump() + "\n");
    for (const auto& [id, bytes] : result.share_files) {
        write_bytes(fs::path(out_dir) /
                        ("share_" + std::to_string(id) + ".bin"),
                    bytes);
    }
    for (const auto& [id, data] : result.final_datasets) {
        write_file(fs::path(out_dir) /
                       ("dataset_" + std::to_string(id) + ".csv"),
                   matrix_csv(data));
    }
    if (!quiet) {
        std::cout << "termination: " << result.summary.termination << "\n"
                  << "merge rounds: "
                  << result.summary.merge_rounds_completed << "\n";
        for (const auto& [id, it] : result.summary.iterations)
            std::cout << "registry " << id << ": " << it
                      << " iterations, g_loss "
                      << result.summary.final_g_loss.at(id) << ", d_loss "
                      << result.summary.final_d_loss.at(id) << "\n";
        for (const std::string& v : result.summary.violations)
            std::cout << "violation: " << v << "\n";
        for (const std::string& r : result.summary.rejected_averages)
            std::cout << "rejected average: " << r << "\n";
        for (const std::string& e : result.summary.endorsement_failures)
            std::cout << "endorsement failure: " << e << "\n";
        std::cout << "outputs in " << out_dir << "\n";
    }
    return 0;
}

int cmd_audit(const std::string& transcript_path,
              const std::vector<std::string>& share_paths,
              const std::string& report_path, bool json_out) {
    std::string transcript = read_file(transcript_path);
    std::vector<Bytes> shares;
    for (const std::string& p : share_paths) {
        std::string raw = read_file(p);
        shares.emplace_back(raw.begin(), raw.end());
    }
    AuditReport report;
    try {
        report = run_audit(transcript, shares);
    } catch (const AuditError& e) {
        // a structurally unreadable transcript is a failed audit, not a
        // usage error
        report.failures.push_back(e.what());
        std::cout << report.to_text();
        return 1;
    }
    if (json_out)
        std::cout << report.to_json().dump(2) << "\n";
    else
        std::cout << report.to_text();
    if (!report_path.empty())
        write_file(report_path, report.to_json().dump(2) + "\n");
    return report.passed ? 0 : 1;
}

// Replace long hex blobs (ciphertexts, partial-decryption components) with
// short digests so inspect output stays readable and leaks nothing extra.
Json summarize_payload(const Json& j) {
    if (j.is_object()) {
        Json out = Json::object();
        for (auto it = j.begin(); it != j.end(); ++it)
            out[it.key()] = summarize_payload(it.value());
        return out;
    }
    if (j.is_array()) {
        Json out = Json::array();
        for (const Json& v : j) out.push_back(summarize_payload(v));
        return out;
    }
    if (j.is_string()) {
        const std::string& s = j.get_ref<const std::string&>();
        if (s.size() > 64 &&
            s.find_first_not_of("0123456789abcdef") == std::string::npos)
            return "sha256:" + to_hex(sha256(s)).substr(0, 16) + " (" +
                   std::to_string(s.size() / 2) + " bytes)";
    }
    return j;
}

void print_block(const TranscriptBlock& tb) {
    std::cout << tb.channel << " height " << tb.block.height << " hash "
              << to_hex(tb.block.block_hash).substr(0, 16) << " submitter "
              << tb.block.tx.submitter << " contract "
              << tb.block.tx.contract << " tick " << tb.block.tx.tick
              << "\n";
    if (!tb.payload_json.is_null())
        std::cout << "  payload: " << summarize_payload(tb.payload_json).dump()
                  << "\n";
    for (const Event& e : tb.block.events)
        std::cout << "  event " << event_type_name(e.type) << ": "
                  << summarize_payload(e.payload).dump() << "\n";
}

int cmd_inspect(const std::string& transcript_path, std::int64_t height,
                std::int64_t registry) {
    std::vector<TranscriptBlock> blocks =
        parse_transcript(read_file(transcript_path));
    if (height >= 0) {
        bool found = false;
        for (const TranscriptBlock& tb : blocks) {
            if (tb.block.height != static_cast<std::uint64_t>(height))
                continue;
            print_block(tb);
            found = true;
        }
        if (!found)
            throw std::invalid_argument("no block at height " +
                                        std::to_string(height));
        return 0;
    }
    if (registry >= 0) {
        for (const TranscriptBlock& tb : blocks)
            if (tb.block.tx.submitter == static_cast<std::uint32_t>(registry))
                print_block(tb);
        return 0;
    }
    std::map<std::string, std::uint64_t> per_channel;
    std::map<std::string, std::uint64_t> per_contract;
    std::map<std::string, std::uint64_t> per_event;
    for (const TranscriptBlock& tb : blocks) {
        ++per_channel[tb.channel];
        ++per_contract[tb.channel + "/" + tb.block.tx.contract];
        for (const Event& e : tb.block.events)
            ++per_event[std::string(event_type_name(e.type))];
    }
    std::cout << "blocks: " << blocks.size() << "\n";
    for (const auto& [ch, n] : per_channel)
        std::cout << "channel '" << ch << "': " << n << " blocks\n";
    std::cout << "transactions by contract:\n";
    for (const auto& [c, n] : per_contract)
        std::cout << "  " << c << ": " << n << "\n";
    std::cout << "events by type:\n";
    for (const auto& [e, n] : per_event)
        std::cout << "  " << e << ": " << n << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated GAN consortium simulator and auditor"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", transcript_path, report_path;
    std::vector<std::string> fault_args, share_paths;
    std::uint64_t seed = 0;
    bool json_out = false, quiet = false;

    CLI::App* sim = app.add_subcommand("simulate", "run a consortium training");
    sim->add_option("--config", config_path, "simulation config JSON");
    CLI::Option* seed_opt =
        sim->add_option("--seed", seed, "override the config seed");
    sim->add_option("--fault", fault_args,
                    "inject a fault: byzantine-merger:R, "
                    "tamper-fake-data:R:ITER, forge-record:R");
    sim->add_option("--out", out_dir, "output directory (default ./out)");
    sim->add_flag("--quiet", quiet, "suppress the summary printout");

    CLI::App* audit = app.add_subcommand("audit", "audit a transcript");
    audit->add_option("--transcript", transcript_path, "transcript.jsonl")
        ->required();
    audit->add_option("--share", share_paths,
                      "key share file (repeat; need >= threshold)")
        ->required();
    audit->add_option("--report", report_path, "write the JSON report here");
    audit->add_flag("--json", json_out, "print the JSON report to stdout");

    std::int64_t height = -1, registry = -1;
    CLI::App* inspect =
        app.add_subcommand("inspect", "summarize a transcript");
    inspect->add_option("--transcript", transcript_path, "transcript.jsonl")
        ->required();
    inspect->add_option("--height", height, "print the block at this height");
    inspect->add_option("--registry", registry,
                        "print only this registry's submissions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed())
            return cmd_simulate(config_path, seed, seed_opt->count() > 0,
                                fault_args, out_dir, quiet);
        if (audit->parsed())
            return cmd_audit(transcript_path, share_paths, report_path,
                             json_out);
        if (inspect->parsed())
            return cmd_inspect(transcript_path, height, registry);
    } catch (const StallError& e) {
        std::cerr << "stall: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
