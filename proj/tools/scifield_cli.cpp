// Command-line front end for the scifield pipeline. All functionality lives
// behind the C API in libscifield; this binary only parses flags, forwards
// configuration and prints stage summaries.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scifield.h"

namespace {

struct Options {
    std::string config;
    std::vector<std::pair<std::string, std::string>> overrides;

    void add(const std::string& key, const std::string& value) {
        overrides.emplace_back(key, value);
    }
};

int execute(const std::string& stage, const Options& options) {
    scifield_run* run = nullptr;
    int rc = scifield_run_open(options.config.empty() ? nullptr : options.config.c_str(), &run);
    if (rc != SCIFIELD_OK) {
        std::fprintf(stderr, "scifield: cannot load config %s\n", options.config.c_str());
        return rc;
    }
    std::unique_ptr<scifield_run, decltype(&scifield_run_close)> guard(run, &scifield_run_close);

    for (const auto& [key, value] : options.overrides) {
        rc = scifield_run_set(run, key.c_str(), value.c_str());
        if (rc != SCIFIELD_OK) {
            std::fprintf(stderr, "scifield: %s\n", scifield_run_error(run));
            return rc;
        }
    }

    if (stage == "label") rc = scifield_run_label(run);
    else if (stage == "ingest") rc = scifield_run_ingest(run);
    else if (stage == "train") rc = scifield_run_train(run);
    else if (stage == "infer") rc = scifield_run_infer(run);
    else rc = scifield_run_analyze(run);

    if (rc != SCIFIELD_OK) {
        std::fprintf(stderr, "scifield %s: %s\n", stage.c_str(), scifield_run_error(run));
        return rc;
    }
    std::fputs(scifield_run_summary(run), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical science classification and citation analytics"};
    app.require_subcommand(1);

    Options options;
    std::string stage;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option_function<std::string>(
               "--config", [&](const std::string& v) { options.config = v; },
               "JSON configuration file");
        for (const char* key : {"taxonomy", "abstracts", "fos_tags", "descriptors", "citations",
                                "output_root", "store_root", "mode", "level", "scope", "seed",
                                "vocab_size", "max_len", "batch_size", "epochs", "learning_rate",
                                "decay", "epsilon", "validation_fraction", "threshold", "truncate",
                                "edge_threshold", "weighted_average", "analyze_labels",
                                "fos_min_level"}) {
            std::string name = "--" + std::string(key);
            std::string k = key;
            cmd->add_option_function<std::string>(
                name, [&options, k](const std::string& v) { options.add(k, v); });
        }
        cmd->callback([&stage, cmd] { stage = cmd->get_name(); });
    };

    add_common(app.add_subcommand("ingest", "decode, tokenize, vectorize and stage abstracts"));
    add_common(app.add_subcommand("label", "match FOS tags to subfields and split the corpus"));
    add_common(app.add_subcommand("train", "train classifier tree nodes"));
    add_common(app.add_subcommand("infer", "predict triplets for the inference pool"));
    add_common(app.add_subcommand("analyze", "build citation matrices and interfieldness scores"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return SCIFIELD_ERR_USAGE;
    }

    return execute(stage, options);
}
