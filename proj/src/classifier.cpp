#include "scifield/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "scifield/common.hpp"

namespace scifield::clf {

namespace {

constexpr double kProbClamp = 1e-12;

double clamp_prob(double p) {
    return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

const char* mode_name(LabelMode mode) {
    return mode == LabelMode::single ? "single" : "multi";
}

}  // namespace

size_t effective_batch_size(size_t configured, size_t dataset_size) {
    if (configured == 0) throw_usage("train: batch size must be positive");
    if (dataset_size >= configured) return configured;
    size_t b = 1;
    while (b * 2 < dataset_size) b *= 2;
    return b;
}

void RunRecord::log_config(size_t num_classes, size_t feature_dim, LabelMode mode,
                           const TrainConfig& config, size_t dataset_size) {
    nlohmann::json j{{"event", "config"},
                     {"classes", num_classes},
                     {"features", feature_dim},
                     {"mode", mode_name(mode)},
                     {"batch_size", config.batch_size},
                     {"effective_batch", effective_batch_size(config.batch_size, dataset_size)},
                     {"epochs", config.epochs},
                     {"learning_rate", config.learning_rate},
                     {"decay", config.decay},
                     {"epsilon", config.epsilon},
                     {"seed", config.seed},
                     {"examples", dataset_size}};
    lines_.push_back(j.dump());
}

void RunRecord::log_batch(size_t epoch, size_t batch, double loss) {
    nlohmann::json j{{"event", "batch"}, {"epoch", epoch}, {"batch", batch}, {"loss", loss}};
    lines_.push_back(j.dump());
}

void RunRecord::log_epoch(size_t epoch, double mean_loss) {
    nlohmann::json j{{"event", "epoch"}, {"epoch", epoch}, {"mean_loss", mean_loss}};
    lines_.push_back(j.dump());
}

void RunRecord::log_final(double loss, size_t examples) {
    nlohmann::json j{{"event", "final"}, {"loss", loss}, {"examples", examples}};
    lines_.push_back(j.dump());
}

void RunRecord::note(const std::string& type, const std::string& message) {
    nlohmann::json j{{"event", type}, {"message", message}};
    lines_.push_back(j.dump());
}

std::string RunRecord::text() const {
    std::string out;
    for (const std::string& line : lines_) {
        out += line;
        out.push_back('\n');
    }
    return out;
}

std::vector<size_t> Classifier::predict(const FeatureVec& x, double threshold) const {
    std::vector<double> scores = forward(x);
    if (mode() == LabelMode::single) {
        size_t best = 0;
        for (size_t c = 1; c < scores.size(); ++c) {
            if (scores[c] > scores[best]) best = c;
        }
        return {best};
    }
    std::vector<size_t> out;
    for (size_t c = 0; c < scores.size(); ++c) {
        if (scores[c] >= threshold) out.push_back(c);
    }
    return out;
}

LinearClassifier::LinearClassifier(size_t num_classes, size_t feature_dim, LabelMode mode)
    : num_classes_(num_classes),
      feature_dim_(feature_dim),
      mode_(mode),
      weights_(num_classes * feature_dim, 0.0),
      bias_(num_classes, 0.0) {
    if (num_classes == 0) throw_usage("classifier: need at least one class");
}

std::vector<double> LinearClassifier::logits(const FeatureVec& x) const {
    std::vector<double> z(bias_);
    for (const auto& [feature, value] : x) {
        if (feature >= feature_dim_) {
            throw_data("classifier: feature index " + std::to_string(feature) +
                       " exceeds dimension " + std::to_string(feature_dim_));
        }
        for (size_t c = 0; c < num_classes_; ++c) {
            z[c] += weights_[c * feature_dim_ + feature] * value;
        }
    }
    return z;
}

std::vector<double> LinearClassifier::forward(const FeatureVec& x) const {
    std::vector<double> z = logits(x);
    if (mode_ == LabelMode::single) {
        double zmax = *std::max_element(z.begin(), z.end());
        double denom = 0.0;
        for (double& v : z) {
            v = std::exp(v - zmax);
            denom += v;
        }
        for (double& v : z) v /= denom;
    } else {
        // clamped so relevances stay inside the open interval even when the
        // logit saturates in double precision
        for (double& v : z) v = clamp_prob(stable_sigmoid(v));
    }
    return z;
}

double LinearClassifier::loss(const FeatureVec& x, const std::vector<uint8_t>& labels) const {
    if (labels.size() != num_classes_) {
        throw_data("classifier: label vector length " + std::to_string(labels.size()) +
                   " does not match " + std::to_string(num_classes_) + " classes");
    }
    std::vector<double> p = forward(x);
    double total = 0.0;
    if (mode_ == LabelMode::single) {
        for (size_t c = 0; c < num_classes_; ++c) {
            if (labels[c]) total -= std::log(clamp_prob(p[c]));
        }
    } else {
        for (size_t c = 0; c < num_classes_; ++c) {
            double q = clamp_prob(p[c]);
            total -= labels[c] ? std::log(q) : std::log(1.0 - q);
        }
    }
    return total;
}

LinearClassifier::Gradients LinearClassifier::batch_gradient(std::span<const Example> batch) const {
    if (batch.empty()) throw_usage("classifier: gradient of an empty batch");
    Gradients g;
    g.weights.assign(num_classes_ * feature_dim_, 0.0);
    g.bias.assign(num_classes_, 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    std::vector<double> dz(num_classes_);
    for (const Example& ex : batch) {
        std::vector<double> p = forward(ex.features);
        for (size_t c = 0; c < num_classes_; ++c) {
            dz[c] = (p[c] - static_cast<double>(ex.labels[c])) * inv;
            g.bias[c] += dz[c];
        }
        for (const auto& [feature, value] : ex.features) {
            for (size_t c = 0; c < num_classes_; ++c) {
                g.weights[c * feature_dim_ + feature] += dz[c] * value;
            }
        }
    }
    return g;
}

void LinearClassifier::fit(const Dataset& data, const TrainConfig& config, RunRecord* record) {
    if (data.examples.empty()) throw_data("train: empty dataset");
    if (data.num_classes != num_classes_ || data.feature_dim != feature_dim_) {
        throw_data("train: dataset shape (" + std::to_string(data.num_classes) + " x " +
                   std::to_string(data.feature_dim) + ") does not match model (" +
                   std::to_string(num_classes_) + " x " + std::to_string(feature_dim_) + ")");
    }
    const size_t batch_size = effective_batch_size(config.batch_size, data.examples.size());
    if (record) record->log_config(num_classes_, feature_dim_, mode_, config, data.examples.size());

    std::vector<double> cache_w(weights_.size(), 0.0);
    std::vector<double> cache_b(bias_.size(), 0.0);
    std::vector<size_t> order(data.examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed);
    std::vector<Example> batch;
    batch.reserve(batch_size);

    for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += batch_size) {
            size_t n = std::min(batch_size, order.size() - start);
            batch.clear();
            for (size_t i = 0; i < n; ++i) batch.push_back(data.examples[order[start + i]]);

            double batch_loss = 0.0;
            for (const Example& ex : batch) batch_loss += loss(ex.features, ex.labels);
            batch_loss /= static_cast<double>(n);
            if (!std::isfinite(batch_loss)) {
                throw_data("train: loss diverged (epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches) + ", loss " + std::to_string(batch_loss) + ")");
            }
            epoch_loss += batch_loss;
            ++batches;
            if (record) record->log_batch(epoch, batches - 1, batch_loss);

            Gradients g = batch_gradient(std::span<const Example>(batch.data(), batch.size()));
            for (size_t i = 0; i < weights_.size(); ++i) {
                cache_w[i] = config.decay * cache_w[i] + (1.0 - config.decay) * g.weights[i] * g.weights[i];
                weights_[i] -= config.learning_rate * g.weights[i] / (std::sqrt(cache_w[i]) + config.epsilon);
            }
            for (size_t i = 0; i < bias_.size(); ++i) {
                cache_b[i] = config.decay * cache_b[i] + (1.0 - config.decay) * g.bias[i] * g.bias[i];
                bias_[i] -= config.learning_rate * g.bias[i] / (std::sqrt(cache_b[i]) + config.epsilon);
            }
        }
        if (record && batches > 0) {
            record->log_epoch(epoch, epoch_loss / static_cast<double>(batches));
        }
    }
    if (record) {
        double final_loss = 0.0;
        for (const Example& ex : data.examples) final_loss += loss(ex.features, ex.labels);
        record->log_final(final_loss / static_cast<double>(data.examples.size()), data.examples.size());
    }
}

namespace {

constexpr uint64_t kModelMagic = 0x4c444f4d464c4353ull;  // "SCLFMODL"

}  // namespace

void save_model(const std::filesystem::path& path, const ModelHeader& header,
                const LinearClassifier& model) {
    std::string out;
    put_u64(out, kModelMagic);
    put_u64(out, static_cast<uint64_t>(header.scope_id));
    put_u64(out, header.mode == LabelMode::single ? 0 : 1);
    put_u64(out, model.num_classes());
    put_u64(out, model.feature_dim());
    put_u64(out, header.vocab_hash);
    auto put_f64 = [&out](double v) {
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        put_u64(out, bits);
    };
    for (double w : model.weights()) put_f64(w);
    for (double b : model.bias()) put_f64(b);
    write_file_atomic(path, out);
}

LinearClassifier load_model(const std::filesystem::path& path, ModelHeader& header,
                            std::optional<uint64_t> expected_vocab_hash) {
    std::string in = read_file(path);
    if (in.size() < 48 || get_u64(in, 0) != kModelMagic) {
        throw_data("model: " + path.string() + " is not a model file");
    }
    header.scope_id = static_cast<int64_t>(get_u64(in, 8));
    header.mode = get_u64(in, 16) == 0 ? LabelMode::single : LabelMode::multi;
    header.num_classes = get_u64(in, 24);
    header.feature_dim = get_u64(in, 32);
    header.vocab_hash = get_u64(in, 40);
    if (expected_vocab_hash && header.vocab_hash != *expected_vocab_hash) {
        throw_data("model: " + path.string() + ": vocabulary hash mismatch (model " +
                   to_hex(header.vocab_hash) + ", current " + to_hex(*expected_vocab_hash) + ")");
    }
    size_t n = header.num_classes * header.feature_dim + header.num_classes;
    if (in.size() != 48 + 8 * n) throw_data("model: " + path.string() + ": truncated payload");

    LinearClassifier model(header.num_classes, header.feature_dim, header.mode);
    auto get_f64 = [&in](size_t off) {
        uint64_t bits = get_u64(in, off);
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    };
    size_t off = 48;
    for (double& w : model.weights()) {
        w = get_f64(off);
        off += 8;
    }
    for (double& b : model.bias()) {
        b = get_f64(off);
        off += 8;
    }
    return model;
}

namespace {

const Classifier& node_or_fail(const ClassifierTree& tree, int64_t scope) {
    auto it = tree.nodes.find(scope);
    if (it == tree.nodes.end() || !it->second) {
        throw_data("route: no trained model for node " + std::to_string(scope) + " ('" +
                   tree.taxonomy->node(scope).name + "')");
    }
    return *it->second;
}

}  // namespace

std::vector<Route> route_hierarchical(const ClassifierTree& tree, const FeatureVec& x,
                                      double threshold) {
    if (!tree.taxonomy) throw_usage("route: tree has no taxonomy attached");
    if (!tree.root) throw_data("route: no trained root model");
    const Taxonomy& tax = *tree.taxonomy;
    std::vector<int64_t> disciplines = tax.leaf_disciplines();

    std::vector<Route> routes;
    std::vector<double> d_scores = tree.root->forward(x);
    for (size_t di : tree.root->predict(x, threshold)) {
        int64_t d = disciplines.at(di);
        const Classifier& field_node = node_or_fail(tree, d);
        const std::vector<int64_t>& fields = tax.children(d);
        std::vector<double> f_scores = field_node.forward(x);
        for (size_t fi : field_node.predict(x, threshold)) {
            int64_t f = fields.at(fi);
            const Classifier& sub_node = node_or_fail(tree, f);
            const std::vector<int64_t>& subs = tax.children(f);
            std::vector<double> s_scores = sub_node.forward(x);
            for (size_t si : sub_node.predict(x, threshold)) {
                Route r;
                r.discipline = d;
                r.field = f;
                r.subfield = subs.at(si);
                r.score = d_scores[di] * f_scores[fi] * s_scores[si];
                routes.push_back(r);
            }
        }
    }
    return routes;
}

void replace_node(ClassifierTree& tree, std::optional<int64_t> scope,
                  std::unique_ptr<Classifier> classifier) {
    if (!classifier) throw_usage("plug: null classifier");
    const Taxonomy& tax = *tree.taxonomy;
    size_t expected_classes =
        scope ? tax.children(*scope).size() : tax.leaf_disciplines().size();
    if (classifier->num_classes() != expected_classes) {
        throw_data("plug: classifier has " + std::to_string(classifier->num_classes()) +
                   " classes, scope needs " + std::to_string(expected_classes));
    }
    const Classifier* current = scope ? tree.nodes[*scope].get() : tree.root.get();
    if (current && current->feature_dim() != classifier->feature_dim()) {
        throw_data("plug: feature dimension " + std::to_string(classifier->feature_dim()) +
                   " does not match existing " + std::to_string(current->feature_dim()));
    }
    if (scope) {
        tree.nodes[*scope] = std::move(classifier);
    } else {
        tree.root = std::move(classifier);
    }
}

}  // namespace scifield::clf
