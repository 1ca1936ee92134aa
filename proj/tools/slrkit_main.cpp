// slrkit command line: thin argument parsing over the C API.

#include <slrkit.h>

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"slrkit: pose-based isolated sign language recognition toolkit"};
    app.set_version_flag("--version", std::string(slrkit_version()));
    app.require_subcommand(1);

    struct Cmd {
        std::string name;
        std::string help;
    };
    const std::vector<Cmd> commands = {
        {"pack", "Ingest pose JSONL clips into a corpus container"},
        {"validate", "Report noisy clips in a packed corpus"},
        {"synth", "Generate a synthetic labeled or unlabeled corpus"},
        {"pretrain", "Self-supervised pretraining (dpc, moco or masked)"},
        {"train", "Train a classifier from scratch"},
        {"finetune", "Fine-tune from a pretrained encoder checkpoint"},
        {"evaluate", "Evaluate a checkpoint on a split"},
        {"benchmark", "Serial batch-1 latency benchmark"},
        {"serve", "Real-time sliding-window prediction service"},
    };

    struct Args {
        std::string config;
        std::vector<std::string> sets;
    };
    std::vector<std::pair<CLI::App*, Args>> parsed;
    parsed.reserve(commands.size());
    for (const auto& cmd : commands) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
        parsed.emplace_back(sub, Args{});
        Args& args = parsed.back().second;
        sub->add_option("--config", args.config, "Run config (YAML)")->required();
        sub->add_option("--set", args.sets, "Override: key.path=value (repeatable)");
    }

    CLI11_PARSE(app, argc, argv);

    for (const auto& [sub, args] : parsed) {
        if (!sub->parsed()) continue;
        std::vector<const char*> overrides;
        overrides.reserve(args.sets.size());
        for (const auto& s : args.sets) overrides.push_back(s.c_str());
        slrkit_status status = slrkit_run(sub->get_name().c_str(), args.config.c_str(),
                                          overrides.data(), overrides.size());
        if (status == SLRKIT_OK) return 0;
        // the library already printed diagnostics; exit codes: 1 config, 2 runtime
        return status == SLRKIT_ERR_CONFIG ? 1 : 2;
    }
    std::fprintf(stderr, "no command given\n");
    return 1;
}
