#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace scifield::metrics {

using Scores = std::vector<std::vector<double>>;   // per example, per class
using Truths = std::vector<std::vector<uint8_t>>;  // multi-hot, aligned

/// Fraction of examples whose maximum-score class (ties to the lowest
/// index) is a relevant class. This is deliberately conservative for sparse
/// multi-hot truths; see binary_accuracy for the inflated alternative.
double categorical_accuracy(const Scores& preds, const Truths& truths);

/// Mean agreement over (example, class) cells after thresholding scores.
double binary_accuracy(const Scores& preds, const Truths& truths, double threshold);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    bool precision_defined = true;  // false when no positives were predicted
    bool recall_defined = true;     // false when the truth has no positives
};

/// Micro-averaged over cells: TP/(TP+FP) and TP/(TP+FN). 0/0 is reported
/// as 0 with the corresponding defined flag cleared.
PrecisionRecall precision_recall(const Scores& preds, const Truths& truths, double threshold);

struct EvalReport {
    double categorical_accuracy = 0.0;
    double binary_accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    bool precision_defined = true;
    bool recall_defined = true;
    size_t n_examples = 0;
    double threshold = 0.5;

    /// One structured-text record (micro averaging noted in the header).
    std::string to_record(const std::string& model_id) const;
};

EvalReport evaluate(const Scores& preds, const Truths& truths, double threshold);

struct ResultRow {
    std::string model_id;
    int level = 0;
    std::string architecture;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

std::string results_csv(const std::vector<ResultRow>& rows);

}  // namespace scifield::metrics
