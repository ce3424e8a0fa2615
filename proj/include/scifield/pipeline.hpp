#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scifield/classifier.hpp"
#include "scifield/taxonomy.hpp"

namespace scifield::pipeline {

/// Everything a run needs, resolved before a stage starts. Loaded from a
/// JSON file and/or overridden key by key (the CLI flags map straight onto
/// set()).
struct RunConfig {
    // inputs
    std::filesystem::path taxonomy;
    std::filesystem::path abstracts;
    std::filesystem::path fos_tags;
    std::filesystem::path descriptors;
    std::filesystem::path citations;

    // run directory; store_root defaults to <output_root>/stores
    std::filesystem::path output_root;
    std::filesystem::path store_root;

    LabelMode mode = LabelMode::single;
    std::optional<int> level;  // restrict training to one classifier level
    std::string scope;         // restrict training to one node: "root", "43", "43-30"
    uint64_t seed = 0;

    size_t vocab_size = 3000;
    size_t max_len = 200;
    clf::TrainConfig train;

    double truncate = 0.01;        // clip threshold for emitted heat grids
    double edge_threshold = 0.06;  // strong-cell cutoff for the edge list
    bool weighted_average = false; // citation-weighted discipline score averages
    std::string analyze_labels = "annotations";  // or "predictions"
    std::optional<int> fos_min_level;  // ignore tags shallower than this, when tagged

    static RunConfig from_json_file(const std::filesystem::path& path);
    void set(const std::string& key, const std::string& value);

    std::filesystem::path stores() const {
        return store_root.empty() ? output_root / "stores" : store_root;
    }
};

struct StageSummary {
    std::vector<std::pair<std::string, std::string>> items;

    void add(const std::string& key, const std::string& value);
    void add(const std::string& key, uint64_t value);
    std::string text() const;  // "key=value" per line
};

StageSummary run_ingest(const RunConfig& config);
StageSummary run_label(const RunConfig& config);
StageSummary run_train(const RunConfig& config);
StageSummary run_infer(const RunConfig& config);
StageSummary run_analyze(const RunConfig& config);

StageSummary run_stage(const RunConfig& config, const std::string& stage);

/// Assemble a classifier tree from the model files under models_dir
/// (root.bin, d<code>.bin, f<coding>.bin). Missing node files are left
/// empty; routing errors out if it reaches one. The vocabulary hash of
/// every loaded model must match.
clf::ClassifierTree load_trained_tree(const std::filesystem::path& models_dir,
                                      const Taxonomy& tax, LabelMode mode,
                                      uint64_t vocab_hash);

}  // namespace scifield::pipeline
