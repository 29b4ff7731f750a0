#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>

#include "alchemist/analysis.hpp"
#include "alchemist/corpus_io.hpp"
#include "alchemist/errors.hpp"
#include "alchemist/pipeline.hpp"

namespace fs = std::filesystem;
using namespace alchemist;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct GlobalOptions {
    std::string config_path;
    long seed = -1;  // -1: keep the config's seed
    bool dry_run = false;
    std::string out_dir;
};

PipelineConfig load_config(const GlobalOptions& opts) {
    if (opts.config_path.empty()) throw ConfigInvalid("--config", "required");
    auto cfg = load_pipeline_config(opts.config_path);
    if (opts.seed >= 0) cfg.seed = static_cast<uint64_t>(opts.seed);
    if (!opts.out_dir.empty()) cfg.output_dir = fs::absolute(opts.out_dir);
    cfg.dry_run = opts.dry_run;
    return cfg;
}

void print_counts(const PipelineConfig& cfg) {
    std::ifstream in(cfg.output_dir / "checkpoints" / "counts.json");
    if (in) std::cout << in.rdbuf() << "\n";
}

int cmd_stage(const GlobalOptions& opts, const std::string& stage) {
    auto cfg = load_config(opts);
    run_stage(cfg, stage);
    std::cout << "stage " << stage << " done, checkpoints in "
              << (cfg.output_dir / "checkpoints").string() << "\n";
    return kExitOk;
}

int cmd_run(const GlobalOptions& opts, const std::string& from_stage) {
    auto cfg = load_config(opts);
    auto manifest = run_pipeline(cfg, from_stage.empty() ? "ingest" : from_stage);
    std::cout << "pipeline complete: " << manifest.counts.final_count << " samples, "
              << manifest.token_total << " tokens\n"
              << "manifest: " << (cfg.output_dir / "manifest.json").string() << "\n";
    return kExitOk;
}

int cmd_cpd(const GlobalOptions& opts) {
    auto cfg = load_config(opts);
    Corpus corpus = load_corpus(cfg.output_dir / "checkpoints" / "mix.jsonl", cfg.tokenizer);
    auto gateway = make_gateway(cfg);

    std::vector<CPDRecord> records;
    std::string lines;
    long limit = cfg.analysis.cpd_limit;
    for (const auto& s : corpus) {
        if (limit >= 0 && static_cast<long>(records.size()) >= limit) break;
        if (s.response.empty()) continue;
        auto rec = compute_cpd(s, *gateway, cfg.analysis.cpd_mode);
        lines += "{\"id\": " + nlohmann::json(rec.sample_id).dump() +
                 ", \"cpd\": " + std::to_string(rec.cpd) +
                 ", \"ppl_first_term\": " + std::to_string(rec.ppl_joint) +
                 ", \"ppl_response\": " + std::to_string(rec.ppl_response) + ", \"mode\": \"" +
                 rec.mode + "\"}\n";
        records.push_back(std::move(rec));
    }
    atomic_write_file(cfg.output_dir / "cpd.jsonl", lines);
    if (records.size() >= 2)
        write_density_csv(cpd_density(records), cfg.output_dir / "cpd_density.csv");
    std::cout << "scored " << records.size() << " samples (" << cfg.analysis.cpd_mode << " mode)\n";
    return kExitOk;
}

int cmd_errors(const GlobalOptions& opts, const std::string& log_override) {
    auto cfg = load_config(opts);
    fs::path log = log_override.empty() ? cfg.analysis.failure_log : fs::path(log_override);
    if (log.empty()) throw ConfigInvalid("analysis.failure_log", "no failure log configured");
    auto tally = categorize_errors(load_failure_log(log));
    auto text = tally_to_json(tally);
    atomic_write_file(cfg.output_dir / "errors.json", text);
    std::cout << text << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Builds instruction-tuning corpora: cleaning, decontamination, "
                 "hindsight prompt customization, comprehension-task synthesis, and mixing."};
    app.require_subcommand(1);

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "Pipeline config file (JSON)");
    app.add_option("--seed", opts.seed, "Override the config seed");
    app.add_flag("--dry-run", opts.dry_run, "Use the offline mock provider");
    app.add_option("--out", opts.out_dir, "Override the config output directory");

    std::string from_stage;
    auto* run = app.add_subcommand("run", "Run the full pipeline");
    run->add_option("--from", from_stage,
                    "Start at this stage, reusing earlier checkpoints");

    for (const auto& stage : pipeline_stages())
        app.add_subcommand(stage, "Run only the " + stage + " stage");
    app.add_subcommand("cpd", "Score the mixed dataset's conditional perplexity discrepancy");
    std::string log_override;
    auto* errors_cmd = app.add_subcommand("errors", "Tally a failure log by error category");
    errors_cmd->add_option("--log", log_override, "Failure log path (JSONL)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        auto chosen = app.get_subcommands().at(0)->get_name();
        if (chosen == "run") return cmd_run(opts, from_stage);
        if (chosen == "cpd") return cmd_cpd(opts);
        if (chosen == "errors") return cmd_errors(opts, log_override);
        int rc = cmd_stage(opts, chosen);
        if (chosen == "stats") print_counts(load_config(opts));
        return rc;
    } catch (const ConfigInvalid& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const StageFailure& e) {
        std::cerr << "stage error: " << e.what() << "\n";
        return kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
}
