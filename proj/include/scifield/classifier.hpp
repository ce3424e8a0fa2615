#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scifield/taxonomy.hpp"

namespace scifield::clf {

/// Sparse feature vector: (feature index, value) pairs, indices strictly
/// increasing. Feature space is the vocabulary, dimension k.
using FeatureVec = std::vector<std::pair<uint32_t, double>>;

struct Example {
    FeatureVec features;
    std::vector<uint8_t> labels;  // multi-hot over the node's classes
};

struct Dataset {
    size_t feature_dim = 0;
    size_t num_classes = 0;
    std::vector<Example> examples;
};

struct TrainConfig {
    size_t batch_size = 1024;
    size_t epochs = 1;
    double learning_rate = 0.001;
    double decay = 0.9;      // squared-gradient moving-average factor
    double epsilon = 1e-7;
    double validation_fraction = 0.4;
    double threshold = 0.5;  // multi-label relevance cutoff
    uint64_t seed = 0;
};

/// The configured batch size, or when the dataset is smaller, the largest
/// power of two below the dataset size (at least 1).
size_t effective_batch_size(size_t configured, size_t dataset_size);

/// Append-only training log, one structured line per event. Replaces an
/// external experiment tracker; carries no wall-clock so identical runs
/// produce identical records.
class RunRecord {
public:
    void log_config(size_t num_classes, size_t feature_dim, LabelMode mode,
                    const TrainConfig& config, size_t dataset_size);
    void log_batch(size_t epoch, size_t batch, double loss);
    void log_epoch(size_t epoch, double mean_loss);
    void log_final(double loss, size_t examples);
    void note(const std::string& type, const std::string& message);

    const std::vector<std::string>& lines() const { return lines_; }
    std::string text() const;

private:
    std::vector<std::string> lines_;
};

/// Interface every node of the classifier tree satisfies; an external model
/// with matching dimensions can be plugged in place of the built-in one.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual size_t num_classes() const = 0;
    virtual size_t feature_dim() const = 0;
    virtual LabelMode mode() const = 0;

    /// Class scores: a probability distribution in single mode (softmax),
    /// independent per-class relevances in (0,1) in multi mode (sigmoid).
    virtual std::vector<double> forward(const FeatureVec& x) const = 0;

    virtual void fit(const Dataset& data, const TrainConfig& config, RunRecord* record) = 0;

    /// Single mode: the arg-max class (ties to the lowest index). Multi
    /// mode: every class with score >= threshold; may be empty.
    virtual std::vector<size_t> predict(const FeatureVec& x, double threshold) const;
};

class LinearClassifier : public Classifier {
public:
    LinearClassifier(size_t num_classes, size_t feature_dim, LabelMode mode);

    size_t num_classes() const override { return num_classes_; }
    size_t feature_dim() const override { return feature_dim_; }
    LabelMode mode() const override { return mode_; }

    std::vector<double> logits(const FeatureVec& x) const;
    std::vector<double> forward(const FeatureVec& x) const override;

    /// Categorical cross entropy in single mode, per-class binary cross
    /// entropy summed over classes in multi mode. Probabilities are clamped
    /// at 1e-12 before the logs.
    double loss(const FeatureVec& x, const std::vector<uint8_t>& labels) const;

    struct Gradients {
        std::vector<double> weights;  // num_classes x feature_dim, row major
        std::vector<double> bias;     // num_classes
    };
    /// Analytic gradients of the mean loss over the batch. Both contracts
    /// reduce to d(loss)/d(logit) = score - label.
    Gradients batch_gradient(std::span<const Example> batch) const;

    void fit(const Dataset& data, const TrainConfig& config, RunRecord* record) override;

    std::vector<double>& weights() { return weights_; }
    const std::vector<double>& weights() const { return weights_; }
    std::vector<double>& bias() { return bias_; }
    const std::vector<double>& bias() const { return bias_; }

private:
    size_t num_classes_;
    size_t feature_dim_;
    LabelMode mode_;
    std::vector<double> weights_;  // row major, class-major
    std::vector<double> bias_;
};

/// Node model file: fixed header followed by row-major weights then bias,
/// little-endian 64-bit floats. A vocabulary hash mismatch at load is an
/// error: features would not line up.
struct ModelHeader {
    int64_t scope_id = -1;  // -1 for the root (discipline) node
    LabelMode mode = LabelMode::single;
    uint64_t num_classes = 0;
    uint64_t feature_dim = 0;
    uint64_t vocab_hash = 0;
};

void save_model(const std::filesystem::path& path, const ModelHeader& header,
                const LinearClassifier& model);
LinearClassifier load_model(const std::filesystem::path& path, ModelHeader& header,
                            std::optional<uint64_t> expected_vocab_hash = std::nullopt);

/// The three-level tree. `root` classifies the leaf disciplines; nodes[d]
/// classifies the fields of discipline d; nodes[f] the subfields of field
/// f. Class order everywhere is the taxonomy's file order.
struct ClassifierTree {
    const Taxonomy* taxonomy = nullptr;
    LabelMode mode = LabelMode::single;
    std::unique_ptr<Classifier> root;
    std::map<int64_t, std::unique_ptr<Classifier>> nodes;
};

struct Route {
    int64_t discipline = 0;
    int64_t field = 0;
    int64_t subfield = 0;
    double score = 0.0;  // product of the three conditional scores
};

/// Root picks disciplines, each picked discipline's node picks fields, each
/// picked field's node picks subfields. Single mode yields exactly one
/// route; multi mode zero or more. A missing model on a taken path is an
/// error naming the node.
std::vector<Route> route_hierarchical(const ClassifierTree& tree, const FeatureVec& x,
                                      double threshold);

/// Swap the classifier at `scope` (nullopt = root) for another one with
/// identical class count and feature dimension.
void replace_node(ClassifierTree& tree, std::optional<int64_t> scope,
                  std::unique_ptr<Classifier> classifier);

}  // namespace scifield::clf
