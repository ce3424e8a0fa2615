#include "scifield/metrics.hpp"

#include "scifield/common.hpp"

namespace scifield::metrics {

namespace {

void check_aligned(const Scores& preds, const Truths& truths) {
    if (preds.size() != truths.size()) {
        throw_data("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                   std::to_string(truths.size()) + " truths");
    }
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].size() != truths[i].size()) {
            throw_data("metrics: class count mismatch at example " + std::to_string(i));
        }
    }
}

}  // namespace

double categorical_accuracy(const Scores& preds, const Truths& truths) {
    check_aligned(preds, truths);
    if (preds.empty()) throw_data("metrics: empty evaluation set");
    size_t hits = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        size_t best = 0;
        for (size_t c = 1; c < preds[i].size(); ++c) {
            if (preds[i][c] > preds[i][best]) best = c;
        }
        if (!truths[i].empty() && truths[i][best]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double binary_accuracy(const Scores& preds, const Truths& truths, double threshold) {
    check_aligned(preds, truths);
    size_t cells = 0;
    size_t agree = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        for (size_t c = 0; c < preds[i].size(); ++c) {
            bool predicted = preds[i][c] >= threshold;
            bool relevant = truths[i][c] != 0;
            agree += predicted == relevant;
            ++cells;
        }
    }
    if (cells == 0) throw_data("metrics: empty evaluation set");
    return static_cast<double>(agree) / static_cast<double>(cells);
}

PrecisionRecall precision_recall(const Scores& preds, const Truths& truths, double threshold) {
    check_aligned(preds, truths);
    size_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        for (size_t c = 0; c < preds[i].size(); ++c) {
            bool predicted = preds[i][c] >= threshold;
            bool relevant = truths[i][c] != 0;
            tp += predicted && relevant;
            fp += predicted && !relevant;
            fn += !predicted && relevant;
        }
    }
    PrecisionRecall out;
    if (tp + fp == 0) {
        out.precision_defined = false;
    } else {
        out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (tp + fn == 0) {
        out.recall_defined = false;
    } else {
        out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    return out;
}

EvalReport evaluate(const Scores& preds, const Truths& truths, double threshold) {
    EvalReport report;
    report.categorical_accuracy = categorical_accuracy(preds, truths);
    report.binary_accuracy = binary_accuracy(preds, truths, threshold);
    PrecisionRecall pr = precision_recall(preds, truths, threshold);
    report.precision = pr.precision;
    report.recall = pr.recall;
    report.precision_defined = pr.precision_defined;
    report.recall_defined = pr.recall_defined;
    report.n_examples = preds.size();
    report.threshold = threshold;
    return report;
}

std::string EvalReport::to_record(const std::string& model_id) const {
    std::string out = "eval";
    out += "\tmodel=" + model_id;
    out += "\taveraging=micro";
    out += "\tn=" + std::to_string(n_examples);
    out += "\tthreshold=" + format_double(threshold, 4);
    out += "\tcategorical_accuracy=" + format_double(categorical_accuracy, 6);
    out += "\tbinary_accuracy=" + format_double(binary_accuracy, 6);
    out += "\tprecision=" + (precision_defined ? format_double(precision, 6) : std::string("undefined"));
    out += "\trecall=" + (recall_defined ? format_double(recall, 6) : std::string("undefined"));
    return out;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
    std::string out = "model,level,architecture,accuracy,precision,recall\n";
    for (const ResultRow& row : rows) {
        out += row.model_id + "," + std::to_string(row.level) + "," + row.architecture + "," +
               format_double(row.accuracy, 6) + "," + format_double(row.precision, 6) + "," +
               format_double(row.recall, 6) + "\n";
    }
    return out;
}

}  // namespace scifield::metrics
