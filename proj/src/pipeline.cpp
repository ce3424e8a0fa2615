#include "scifield/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <map>
#include <set>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "scifield/analytics.hpp"
#include "scifield/ingest.hpp"
#include "scifield/kvstore.hpp"
#include "scifield/metrics.hpp"
#include "scifield/staging.hpp"
#include "scifield/weaklabel.hpp"

namespace scifield::pipeline {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// config

int64_t parse_i64(const std::string& value, const std::string& key) {
    int64_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw_usage("config: " + key + " expects an integer, got '" + value + "'");
    }
    return out;
}

double parse_f64(const std::string& value, const std::string& key) {
    try {
        size_t end = 0;
        double out = std::stod(value, &end);
        if (end != value.size()) throw std::invalid_argument(value);
        return out;
    } catch (const std::exception&) {
        throw_usage("config: " + key + " expects a number, got '" + value + "'");
    }
}

LabelMode parse_mode(const std::string& value) {
    if (value == "single") return LabelMode::single;
    if (value == "multi") return LabelMode::multi;
    throw_usage("config: mode must be 'single' or 'multi', got '" + value + "'");
}

}  // namespace

RunConfig RunConfig::from_json_file(const fs::path& path) {
    nlohmann::json doc = nlohmann::json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw_data("config: " + path.string() + " is not a JSON object");
    }
    RunConfig config;
    fs::path base = path.parent_path();
    for (const auto& [key, value] : doc.items()) {
        std::string text;
        if (value.is_string()) {
            text = value.get<std::string>();
        } else if (value.is_boolean()) {
            text = value.get<bool>() ? "true" : "false";
        } else {
            text = value.dump();
        }
        config.set(key, text);
    }
    // relative paths are relative to the config file
    for (fs::path* p : {&config.taxonomy, &config.abstracts, &config.fos_tags,
                        &config.descriptors, &config.citations, &config.output_root,
                        &config.store_root}) {
        if (!p->empty() && p->is_relative()) *p = base / *p;
    }
    return config;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "taxonomy") taxonomy = value;
    else if (key == "abstracts") abstracts = value;
    else if (key == "fos_tags") fos_tags = value;
    else if (key == "descriptors") descriptors = value;
    else if (key == "citations") citations = value;
    else if (key == "output_root") output_root = value;
    else if (key == "store_root") store_root = value;
    else if (key == "mode") mode = parse_mode(value);
    else if (key == "level") {
        int v = static_cast<int>(parse_i64(value, key));
        if (v < 0 || v > 2) throw_usage("config: level must be 0, 1 or 2");
        level = v;
    }
    else if (key == "scope") scope = value;
    else if (key == "seed") { seed = static_cast<uint64_t>(parse_i64(value, key)); train.seed = seed; }
    else if (key == "vocab_size" || key == "max_len" || key == "batch_size" || key == "epochs") {
        int64_t v = parse_i64(value, key);
        if (v < 1) throw_usage("config: " + key + " must be at least 1");
        if (key == "vocab_size") vocab_size = static_cast<size_t>(v);
        else if (key == "max_len") max_len = static_cast<size_t>(v);
        else if (key == "batch_size") train.batch_size = static_cast<size_t>(v);
        else train.epochs = static_cast<size_t>(v);
    }
    else if (key == "learning_rate") train.learning_rate = parse_f64(value, key);
    else if (key == "decay") train.decay = parse_f64(value, key);
    else if (key == "epsilon") train.epsilon = parse_f64(value, key);
    else if (key == "validation_fraction") train.validation_fraction = parse_f64(value, key);
    else if (key == "threshold") {
        train.threshold = parse_f64(value, key);
        if (train.threshold <= 0.0 || train.threshold >= 1.0) {
            throw_usage("config: threshold must lie strictly between 0 and 1");
        }
    }
    else if (key == "truncate") truncate = parse_f64(value, key);
    else if (key == "edge_threshold") edge_threshold = parse_f64(value, key);
    else if (key == "weighted_average") weighted_average = value == "true" || value == "1";
    else if (key == "analyze_labels") {
        if (value != "annotations" && value != "predictions") {
            throw_usage("config: analyze_labels must be 'annotations' or 'predictions'");
        }
        analyze_labels = value;
    }
    else if (key == "fos_min_level") fos_min_level = static_cast<int>(parse_i64(value, key));
    else throw_usage("config: unknown key '" + key + "'");
}

void StageSummary::add(const std::string& key, const std::string& value) {
    items.emplace_back(key, value);
}

void StageSummary::add(const std::string& key, uint64_t value) {
    items.emplace_back(key, std::to_string(value));
}

std::string StageSummary::text() const {
    std::string out;
    for (const auto& [key, value] : items) {
        out += key;
        out.push_back('=');
        out += value;
        out.push_back('\n');
    }
    return out;
}

namespace {

// ---------------------------------------------------------------------------
// run directory plumbing

const std::vector<std::string> kStageChain = {"label", "ingest", "train", "infer", "analyze"};

/// One process owns the run directory while a stage executes.
class RunLock {
public:
    explicit RunLock(const fs::path& run_dir) {
        fs::create_directories(run_dir);
        fs::path lock_path = run_dir / ".lock";
        fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw_internal("run: cannot open " + lock_path.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw_data("run: another process owns " + run_dir.string());
        }
    }
    ~RunLock() {
        if (fd_ >= 0) ::close(fd_);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    int fd_ = -1;
};

void require_input(const fs::path& path, const std::string& role) {
    if (path.empty()) throw_usage("config: missing required path '" + role + "'");
    if (!fs::exists(path)) throw_usage("config: " + role + " path does not exist: " + path.string());
}

/// Content-hashed stage manifest. Rerunning a stage drops the manifests of
/// every later stage, so staleness is visible without deleting data.
class Manifests {
public:
    explicit Manifests(const fs::path& run_dir) : dir_(run_dir / "manifests") {
        fs::create_directories(dir_);
    }

    void input(const std::string& role, const fs::path& path) {
        inputs_[role] = to_hex(hash_file(path));
    }
    void output(const fs::path& run_dir, const fs::path& path) {
        outputs_[fs::relative(path, run_dir).generic_string()] = to_hex(hash_file(path));
    }

    void publish(const std::string& stage) {
        nlohmann::json doc{{"stage", stage}, {"inputs", inputs_}, {"outputs", outputs_}};
        write_file_atomic(dir_ / (stage + ".json"), doc.dump(2) + "\n");
        bool downstream = false;
        for (const std::string& other : kStageChain) {
            if (downstream) fs::remove(dir_ / (other + ".json"));
            if (other == stage) downstream = true;
        }
    }

private:
    fs::path dir_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> outputs_;
};

// ---------------------------------------------------------------------------
// shared readers

struct Annotations {
    // paper -> subfield codings (sorted); insertion order preserved separately
    std::vector<int64_t> order;
    std::unordered_map<int64_t, std::vector<std::string>> triplets;

    bool empty() const { return order.empty(); }
};

Annotations read_annotations(const fs::path& path) {
    Annotations ann;
    if (!fs::exists(path)) return ann;
    std::string content = read_file(path);
    for (std::string_view line : split_view(content, '\n')) {
        if (line.empty()) continue;
        auto fields = split_view(line, '\t');
        if (fields.size() != 2) throw_data("annotations: malformed line '" + std::string(line) + "'");
        int64_t paper = parse_i64(std::string(fields[0]), "paper id");
        std::vector<std::string> codings;
        for (std::string_view c : split_view(fields[1], ' ')) {
            if (!c.empty()) codings.emplace_back(c);
        }
        ann.order.push_back(paper);
        ann.triplets.emplace(paper, std::move(codings));
    }
    return ann;
}

std::unordered_map<int64_t, weaklabel::SplitSlot> read_split(const fs::path& path) {
    std::unordered_map<int64_t, weaklabel::SplitSlot> split;
    if (!fs::exists(path)) return split;
    std::string content = read_file(path);
    for (std::string_view line : split_view(content, '\n')) {
        if (line.empty()) continue;
        auto fields = split_view(line, '\t');
        if (fields.size() != 2) throw_data("split: malformed line '" + std::string(line) + "'");
        int64_t paper = parse_i64(std::string(fields[0]), "paper id");
        weaklabel::SplitSlot slot;
        if (fields[1] == "train") slot = weaklabel::SplitSlot::train;
        else if (fields[1] == "validation") slot = weaklabel::SplitSlot::validation;
        else if (fields[1] == "test") slot = weaklabel::SplitSlot::test;
        else throw_data("split: unknown slot '" + std::string(fields[1]) + "'");
        split.emplace(paper, slot);
    }
    return split;
}

std::string discipline_of(const std::string& subfield_coding) {
    return subfield_coding.substr(0, subfield_coding.find('-'));
}

std::string field_of(const std::string& subfield_coding) {
    size_t first = subfield_coding.find('-');
    size_t second = subfield_coding.find('-', first + 1);
    return subfield_coding.substr(0, second);
}

// Node model files: root.bin, d<code>.bin, f<d-f>.bin
std::string scope_file_stem(const Taxonomy& tax, std::optional<int64_t> scope) {
    if (!scope) return "root";
    const TaxNode& node = tax.node(*scope);
    return (node.level == 0 ? "d" : "f") + node.coding;
}

}  // namespace

// ---------------------------------------------------------------------------
// label

StageSummary run_label(const RunConfig& config) {
    require_input(config.taxonomy, "taxonomy");
    require_input(config.fos_tags, "fos_tags");
    require_input(config.descriptors, "descriptors");
    if (config.output_root.empty()) throw_usage("config: missing required path 'output_root'");

    RunLock lock(config.output_root);
    Manifests manifests(config.output_root);
    manifests.input("taxonomy", config.taxonomy);
    manifests.input("fos_tags", config.fos_tags);
    manifests.input("descriptors", config.descriptors);

    Taxonomy tax = Taxonomy::load(config.taxonomy);
    weaklabel::DescriptorSet descriptors = weaklabel::DescriptorSet::load(config.descriptors, tax);

    // fos file: paper_id \t tag [\t level]
    std::vector<int64_t> paper_order;
    std::unordered_map<int64_t, std::vector<weaklabel::FosTag>> tags;
    std::string content = read_file(config.fos_tags);
    uint64_t dropped_by_level = 0;
    for (std::string_view line : split_view(content, '\n')) {
        if (line.empty() || line.front() == '#') continue;
        auto fields = split_view(line, '\t');
        if (fields.size() != 2 && fields.size() != 3) {
            throw_data("fos: malformed line '" + std::string(line) + "'");
        }
        int64_t paper = parse_i64(std::string(fields[0]), "paper id");
        std::optional<int> level;
        if (fields.size() == 3) level = static_cast<int>(parse_i64(std::string(fields[2]), "fos level"));
        if (config.fos_min_level && level && *level < *config.fos_min_level) {
            ++dropped_by_level;
            continue;
        }
        auto [it, inserted] = tags.try_emplace(paper);
        if (inserted) paper_order.push_back(paper);
        it->second.push_back(weaklabel::make_tag(fields[1], level));
    }

    std::vector<std::pair<int64_t, std::string>> labeled;  // paper, stratum (first subfield)
    std::vector<int64_t> unmatched;
    std::string annotations_text;
    for (int64_t paper : paper_order) {
        std::optional<weaklabel::AnnotatedPaper> ann =
            weaklabel::annotate_paper(paper, tags[paper], descriptors, tax);
        if (!ann) {
            unmatched.push_back(paper);
            continue;
        }
        annotations_text += std::to_string(paper);
        annotations_text.push_back('\t');
        for (size_t i = 0; i < ann->triplets.size(); ++i) {
            if (i) annotations_text.push_back(' ');
            annotations_text += tax.node(ann->triplets[i][2]).coding;
        }
        annotations_text.push_back('\n');
        labeled.emplace_back(paper, tax.node(ann->triplets.front()[2]).coding);
    }

    if (labeled.empty()) throw_data("label: no paper matched any subfield descriptor");
    weaklabel::SplitConfig split_config;
    split_config.validation_fraction = config.train.validation_fraction;
    split_config.seed = config.seed;
    weaklabel::SplitResult split = weaklabel::split_corpus(labeled, unmatched, split_config);

    fs::path labels_dir = config.output_root / "labels";
    fs::create_directories(labels_dir);
    write_file_atomic(labels_dir / "annotations.tsv", annotations_text);
    write_file_atomic(labels_dir / "split.tsv", split.to_manifest());

    manifests.output(config.output_root, labels_dir / "annotations.tsv");
    manifests.output(config.output_root, labels_dir / "split.tsv");
    manifests.publish("label");

    StageSummary summary;
    summary.add("papers", static_cast<uint64_t>(paper_order.size()));
    summary.add("matched", static_cast<uint64_t>(labeled.size()));
    summary.add("unmatched", static_cast<uint64_t>(unmatched.size()));
    double rate = paper_order.empty()
                      ? 0.0
                      : static_cast<double>(labeled.size()) / static_cast<double>(paper_order.size());
    summary.add("match_rate", format_double(rate, 6));
    summary.add("train", static_cast<uint64_t>(split.count(weaklabel::SplitSlot::train)));
    summary.add("validation", static_cast<uint64_t>(split.count(weaklabel::SplitSlot::validation)));
    summary.add("test", static_cast<uint64_t>(split.count(weaklabel::SplitSlot::test)));
    if (dropped_by_level) summary.add("tags_dropped_by_level", dropped_by_level);
    for (const std::string& warning : split.warnings) summary.add("warning", warning);
    return summary;
}

// ---------------------------------------------------------------------------
// ingest

StageSummary run_ingest(const RunConfig& config) {
    require_input(config.taxonomy, "taxonomy");
    require_input(config.abstracts, "abstracts");
    if (config.output_root.empty()) throw_usage("config: missing required path 'output_root'");

    RunLock lock(config.output_root);
    Manifests manifests(config.output_root);
    manifests.input("taxonomy", config.taxonomy);
    manifests.input("abstracts", config.abstracts);

    Taxonomy tax = Taxonomy::load(config.taxonomy);
    Annotations annotations = read_annotations(config.output_root / "labels" / "annotations.tsv");
    auto split = read_split(config.output_root / "labels" / "split.tsv");
    if (!annotations.empty()) {
        manifests.input("annotations", config.output_root / "labels" / "annotations.tsv");
        manifests.input("split", config.output_root / "labels" / "split.tsv");
    }

    // decode + normalize
    std::vector<std::pair<int64_t, std::vector<std::string>>> docs;
    std::string content = read_file(config.abstracts);
    for (std::string_view line : split_view(content, '\n')) {
        if (line.empty() || line.front() == '#') continue;
        ingest::AbstractRecord rec = ingest::parse_abstract_line(line);
        std::string text = ingest::decode_abstract(rec);
        docs.emplace_back(rec.paper_id, ingest::normalize_tokens(text, config.max_len));
    }

    // vocabulary from the training population when a split exists
    ingest::VocabBuilder builder;
    size_t vocab_docs = 0;
    for (const auto& [paper, tokens] : docs) {
        if (!split.empty()) {
            auto it = split.find(paper);
            if (it == split.end() || it->second != weaklabel::SplitSlot::train) continue;
        }
        builder.add(tokens);
        ++vocab_docs;
    }
    if (vocab_docs == 0) throw_data("ingest: no documents available to build the vocabulary");
    ingest::VocabIndex vocab = builder.finish(config.vocab_size);
    vocab.save(config.output_root / "vocab.tsv");

    // vectorize and shard by discipline; unlabeled papers go to the pool
    std::map<std::string, std::vector<ingest::TokenSeq>> shards;
    for (const auto& [paper, tokens] : docs) {
        ingest::TokenSeq seq = ingest::vectorize(paper, tokens, vocab, config.max_len);
        auto it = annotations.triplets.find(paper);
        if (it == annotations.triplets.end()) {
            shards["pool"].push_back(seq);
            continue;
        }
        std::set<std::string> disciplines;
        for (const std::string& coding : it->second) disciplines.insert(discipline_of(coding));
        for (const std::string& d : disciplines) shards[d].push_back(seq);
    }

    // The staging area is regenerated wholesale: stale shards from an
    // earlier corpus must not survive, and a rerun on the same input has to
    // reproduce the same bytes.
    fs::remove_all(config.stores());
    uint64_t batches = 0;
    for (const auto& [shard, seqs] : shards) {
        KvStore store = KvStore::open_writer(config.stores() / shard);
        batches += ingest::stage_batches(std::span<const ingest::TokenSeq>(seqs.data(), seqs.size()),
                                         config.train.batch_size, store);
        store.commit();
    }

    manifests.output(config.output_root, config.output_root / "vocab.tsv");
    manifests.publish("ingest");

    StageSummary summary;
    summary.add("papers", static_cast<uint64_t>(docs.size()));
    summary.add("vocab_documents", static_cast<uint64_t>(vocab_docs));
    summary.add("vocab_tokens", static_cast<uint64_t>(vocab.size()));
    summary.add("stores", static_cast<uint64_t>(shards.size()));
    summary.add("batches", batches);
    return summary;
}

// ---------------------------------------------------------------------------
// train

namespace {

struct LabeledCorpus {
    // paper -> sparse features, in store order, train/validation separated
    struct Doc {
        int64_t paper = 0;
        clf::FeatureVec features;
        std::vector<std::string> codings;  // subfield triplet codings
        bool validation = false;
    };
    std::vector<Doc> docs;
};

LabeledCorpus load_labeled_corpus(const RunConfig& config, const Annotations& annotations,
                                  const std::unordered_map<int64_t, weaklabel::SplitSlot>& split) {
    LabeledCorpus corpus;
    std::unordered_set<int64_t> seen;
    std::set<std::string> shard_names;
    for (const auto& [paper, codings] : annotations.triplets) {
        for (const std::string& coding : codings) shard_names.insert(discipline_of(coding));
    }
    for (const std::string& shard : shard_names) {
        fs::path dir = config.stores() / shard;
        if (!fs::exists(dir / "store.skv")) {
            throw_data("train: missing staged store for discipline " + shard +
                       " (run ingest after label)");
        }
        KvStore store = KvStore::open_reader(dir);
        size_t batches = ingest::batch_count(store);
        for (size_t b = 0; b < batches; ++b) {
            for (ingest::TokenSeq& seq : ingest::fetch_batch(store, b)) {
                if (!seen.insert(seq.paper_id).second) continue;  // multi-discipline papers
                auto slot = split.find(seq.paper_id);
                if (slot == split.end() || slot->second == weaklabel::SplitSlot::test) continue;
                LabeledCorpus::Doc doc;
                doc.paper = seq.paper_id;
                doc.features = ingest::bow_features(seq.ids);
                doc.codings = annotations.triplets.at(seq.paper_id);
                doc.validation = slot->second == weaklabel::SplitSlot::validation;
                corpus.docs.push_back(std::move(doc));
            }
        }
    }
    return corpus;
}

/// The class labels a document carries inside one scope. Single mode uses
/// only the paper's first triplet; multi mode uses all of them.
std::vector<std::string> codings_in_scope(const std::vector<std::string>& codings,
                                          LabelMode mode, int node_level,
                                          const std::string& scope_coding) {
    std::vector<std::string> out;
    auto consider = [&](const std::string& subfield) {
        std::string child;
        if (node_level == 0) {
            child = discipline_of(subfield);
        } else if (node_level == 1) {
            if (discipline_of(subfield) != scope_coding) return;
            child = field_of(subfield);
        } else {
            if (field_of(subfield) != scope_coding) return;
            child = subfield;
        }
        if (std::find(out.begin(), out.end(), child) == out.end()) out.push_back(child);
    };
    if (mode == LabelMode::single) {
        consider(codings.front());
    } else {
        for (const std::string& c : codings) consider(c);
    }
    return out;
}

struct NodePlan {
    std::optional<int64_t> scope;  // nullopt = root
    int node_level = 0;            // 0 root, 1 discipline node, 2 field node
    std::string scope_coding;      // "" for root
    std::vector<int64_t> classes;
};

std::vector<NodePlan> plan_nodes(const RunConfig& config, const Taxonomy& tax) {
    std::vector<NodePlan> plans;
    auto add = [&](std::optional<int64_t> scope, int node_level) {
        NodePlan plan;
        plan.scope = scope;
        plan.node_level = node_level;
        plan.scope_coding = scope ? tax.node(*scope).coding : "";
        plan.classes = scope ? tax.children(*scope) : tax.leaf_disciplines();
        if (!plan.classes.empty()) plans.push_back(std::move(plan));
    };
    if (!config.scope.empty()) {
        if (config.scope == "root") {
            add(std::nullopt, 0);
        } else {
            int64_t id = tax.require_coding(config.scope);
            int level = tax.node(id).level;
            if (level > 1) throw_usage("train: scope must be 'root', a discipline or a field");
            add(id, level + 1);
        }
        return plans;
    }
    if (!config.level || *config.level == 0) add(std::nullopt, 0);
    if (!config.level || *config.level == 1) {
        for (int64_t d : tax.leaf_disciplines()) add(d, 1);
    }
    if (!config.level || *config.level == 2) {
        for (int64_t d : tax.leaf_disciplines()) {
            for (int64_t f : tax.children(d)) add(f, 2);
        }
    }
    return plans;
}

struct NodeOutcome {
    std::string stem;
    bool trained = false;
    std::string warning;
    metrics::EvalReport report;
    bool evaluated = false;
};

NodeOutcome train_node(const RunConfig& config, const Taxonomy& tax, const NodePlan& plan,
                       const LabeledCorpus& corpus, uint64_t vocab_hash, size_t feature_dim) {
    NodeOutcome outcome;
    outcome.stem = scope_file_stem(tax, plan.scope);

    // class index by coding
    std::unordered_map<std::string, size_t> class_index;
    for (size_t i = 0; i < plan.classes.size(); ++i) {
        class_index.emplace(tax.node(plan.classes[i]).coding, i);
    }

    clf::Dataset train_set;
    train_set.feature_dim = feature_dim;
    train_set.num_classes = plan.classes.size();
    std::vector<clf::Example> validation;
    for (const LabeledCorpus::Doc& doc : corpus.docs) {
        std::vector<std::string> labels =
            codings_in_scope(doc.codings, config.mode, plan.node_level, plan.scope_coding);
        if (labels.empty()) continue;
        clf::Example ex;
        ex.features = doc.features;
        ex.labels.assign(plan.classes.size(), 0);
        for (const std::string& label : labels) ex.labels[class_index.at(label)] = 1;
        if (doc.validation) {
            validation.push_back(std::move(ex));
        } else {
            train_set.examples.push_back(std::move(ex));
        }
    }
    if (train_set.examples.empty()) {
        outcome.warning = "no training data for node " + outcome.stem + ", skipped";
        return outcome;
    }

    clf::LinearClassifier model(plan.classes.size(), feature_dim, config.mode);
    clf::RunRecord record;
    clf::TrainConfig node_config = config.train;
    node_config.seed = config.seed ^ fnv1a64(outcome.stem);
    model.fit(train_set, node_config, &record);

    if (!validation.empty()) {
        metrics::Scores preds;
        metrics::Truths truths;
        for (const clf::Example& ex : validation) {
            preds.push_back(model.forward(ex.features));
            truths.push_back(ex.labels);
        }
        outcome.report = metrics::evaluate(preds, truths, config.train.threshold);
        outcome.evaluated = true;
        record.note("eval", outcome.report.to_record(outcome.stem));
    }

    clf::ModelHeader header;
    header.scope_id = plan.scope.value_or(-1);
    header.mode = config.mode;
    header.num_classes = plan.classes.size();
    header.feature_dim = feature_dim;
    header.vocab_hash = vocab_hash;
    fs::path models_dir = config.output_root / "models";  // created by run_train
    save_model(models_dir / (outcome.stem + ".bin"), header, model);
    write_file_atomic(models_dir / (outcome.stem + ".runlog"), record.text());
    outcome.trained = true;
    return outcome;
}

}  // namespace

StageSummary run_train(const RunConfig& config) {
    require_input(config.taxonomy, "taxonomy");
    if (config.output_root.empty()) throw_usage("config: missing required path 'output_root'");
    fs::path vocab_path = config.output_root / "vocab.tsv";
    fs::path annotations_path = config.output_root / "labels" / "annotations.tsv";
    fs::path split_path = config.output_root / "labels" / "split.tsv";
    require_input(vocab_path, "vocab (run ingest first)");
    require_input(annotations_path, "annotations (run label first)");

    RunLock lock(config.output_root);
    Manifests manifests(config.output_root);
    manifests.input("taxonomy", config.taxonomy);
    manifests.input("vocab", vocab_path);
    manifests.input("annotations", annotations_path);

    Taxonomy tax = Taxonomy::load(config.taxonomy);
    ingest::VocabIndex vocab = ingest::VocabIndex::load(vocab_path);
    Annotations annotations = read_annotations(annotations_path);
    auto split = read_split(split_path);
    LabeledCorpus corpus = load_labeled_corpus(config, annotations, split);
    if (corpus.docs.empty()) throw_data("train: no staged training documents found");

    std::vector<NodePlan> plans = plan_nodes(config, tax);
    std::vector<NodeOutcome> outcomes(plans.size());
    fs::create_directories(config.output_root / "models");

    // Nodes have disjoint parameters, so they train in parallel without
    // affecting determinism.
    size_t workers = std::min<size_t>(std::thread::hardware_concurrency(), plans.size());
    workers = std::max<size_t>(workers, 1);
    std::atomic<size_t> next{0};
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    for (size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            try {
                while (true) {
                    size_t i = next.fetch_add(1);
                    if (i >= plans.size()) break;
                    outcomes[i] = train_node(config, tax, plans[i], corpus, vocab.content_hash(),
                                             vocab.k);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (std::thread& t : threads) t.join();
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    // Aggregate results table only on a full-tree run, so a selective
    // retrain touches nothing but its own node's files.
    bool full_run = config.scope.empty() && !config.level;
    uint64_t trained = 0, skipped = 0;
    std::vector<metrics::ResultRow> rows;
    for (size_t i = 0; i < plans.size(); ++i) {
        const NodeOutcome& outcome = outcomes[i];
        if (!outcome.trained) {
            ++skipped;
            continue;
        }
        ++trained;
        if (outcome.evaluated) {
            metrics::ResultRow row;
            row.model_id = outcome.stem;
            row.level = plans[i].node_level;
            row.architecture = "linear";
            row.accuracy = outcome.report.categorical_accuracy;
            row.precision = outcome.report.precision;
            row.recall = outcome.report.recall;
            rows.push_back(std::move(row));
        }
    }
    if (full_run) {
        write_file_atomic(config.output_root / "models" / "results.csv", metrics::results_csv(rows));
    }

    for (const NodeOutcome& outcome : outcomes) {
        if (outcome.trained) {
            manifests.output(config.output_root,
                             config.output_root / "models" / (outcome.stem + ".bin"));
        }
    }
    manifests.publish("train");

    StageSummary summary;
    summary.add("nodes_planned", static_cast<uint64_t>(plans.size()));
    summary.add("nodes_trained", trained);
    summary.add("nodes_skipped", skipped);
    for (const NodeOutcome& outcome : outcomes) {
        if (!outcome.warning.empty()) summary.add("warning", outcome.warning);
    }
    return summary;
}

// ---------------------------------------------------------------------------
// infer

StageSummary run_infer(const RunConfig& config) {
    require_input(config.taxonomy, "taxonomy");
    if (config.output_root.empty()) throw_usage("config: missing required path 'output_root'");
    fs::path vocab_path = config.output_root / "vocab.tsv";
    require_input(vocab_path, "vocab (run ingest first)");
    fs::path models_dir = config.output_root / "models";
    require_input(models_dir, "models (run train first)");

    RunLock lock(config.output_root);
    Manifests manifests(config.output_root);
    manifests.input("taxonomy", config.taxonomy);
    manifests.input("vocab", vocab_path);

    Taxonomy tax = Taxonomy::load(config.taxonomy);
    ingest::VocabIndex vocab = ingest::VocabIndex::load(vocab_path);

    clf::ClassifierTree tree = load_trained_tree(models_dir, tax, config.mode, vocab.content_hash());
    if (!tree.root) throw_data("infer: no trained root model in " + models_dir.string());

    // The inference pool: staged papers without labels.
    fs::path pool_dir = config.stores() / "pool";
    if (!fs::exists(pool_dir / "store.skv")) {
        throw_data("infer: no staged inference pool in " + pool_dir.string());
    }
    KvStore pool = KvStore::open_reader(pool_dir);
    std::string out;
    uint64_t papers = 0, triplets = 0, unrouted = 0;
    size_t batches = ingest::batch_count(pool);
    for (size_t b = 0; b < batches; ++b) {
        for (const ingest::TokenSeq& seq : ingest::fetch_batch(pool, b)) {
            ++papers;
            clf::FeatureVec features = ingest::bow_features(seq.ids);
            std::vector<clf::Route> routes =
                clf::route_hierarchical(tree, features, config.train.threshold);
            if (routes.empty()) ++unrouted;
            for (const clf::Route& route : routes) {
                ++triplets;
                out += std::to_string(seq.paper_id);
                out.push_back('\t');
                out += tax.node(route.discipline).coding;
                out.push_back('\t');
                out += tax.node(route.field).coding;
                out.push_back('\t');
                out += tax.node(route.subfield).coding;
                out.push_back('\t');
                out += format_double(route.score, 9);
                out.push_back('\n');
            }
        }
    }
    write_file_atomic(config.output_root / "predictions.tsv", out);
    manifests.output(config.output_root, config.output_root / "predictions.tsv");
    manifests.publish("infer");

    StageSummary summary;
    summary.add("papers", papers);
    summary.add("triplets", triplets);
    summary.add("papers_without_prediction", unrouted);
    return summary;
}

// ---------------------------------------------------------------------------
// analyze

namespace {

std::unordered_map<int64_t, std::vector<std::string>> label_map_for_analysis(
    const RunConfig& config) {
    std::unordered_map<int64_t, std::vector<std::string>> labels;
    if (config.analyze_labels == "annotations") {
        fs::path path = config.output_root / "labels" / "annotations.tsv";
        require_input(path, "annotations (run label first, or analyze_labels=predictions)");
        Annotations ann = read_annotations(path);
        for (auto& [paper, codings] : ann.triplets) labels.emplace(paper, std::move(codings));
    } else {
        fs::path path = config.output_root / "predictions.tsv";
        require_input(path, "predictions (run infer first, or analyze_labels=annotations)");
        std::string content = read_file(path);
        for (std::string_view line : split_view(content, '\n')) {
            if (line.empty()) continue;
            auto fields = split_view(line, '\t');
            if (fields.size() != 5) throw_data("predictions: malformed line '" + std::string(line) + "'");
            labels[parse_i64(std::string(fields[0]), "paper id")].emplace_back(fields[3]);
        }
    }
    return labels;
}

struct EdgeSet {
    std::vector<std::pair<int64_t, int64_t>> edges;  // deduplicated
    uint64_t lines = 0;
    uint64_t self_citations = 0;
    uint64_t duplicates = 0;
};

EdgeSet read_edges(const fs::path& path) {
    EdgeSet set;
    std::string content = read_file(path);
    std::set<std::pair<int64_t, int64_t>> seen;
    for (std::string_view line : split_view(content, '\n')) {
        if (line.empty() || line.front() == '#') continue;
        auto fields = split_view(line, '\t');
        if (fields.size() != 2) throw_data("citations: malformed line '" + std::string(line) + "'");
        ++set.lines;
        int64_t citing = parse_i64(std::string(fields[0]), "citing paper");
        int64_t cited = parse_i64(std::string(fields[1]), "cited paper");
        if (citing == cited) {
            ++set.self_citations;  // no self-citations at the publication level
            continue;
        }
        if (!seen.emplace(citing, cited).second) {
            ++set.duplicates;
            continue;
        }
        set.edges.emplace_back(citing, cited);
    }
    return set;
}

void write_matrix_files(const fs::path& dir, const std::string& stem,
                        const analytics::CountMatrix& m, const analytics::LabelSpace& space) {
    write_file_atomic(dir / (stem + ".coord.tsv"), analytics::matrix_coord_text(m, space));
    if (m.dim <= 256) {
        write_file_atomic(dir / (stem + ".csv"), analytics::matrix_dense_csv(m, space));
    }
}

void write_matrix_files(const fs::path& dir, const std::string& stem,
                        const analytics::NormMatrix& m, const analytics::LabelSpace& space) {
    write_file_atomic(dir / (stem + ".coord.tsv"), analytics::matrix_coord_text(m, space));
    if (m.dim <= 256) {
        write_file_atomic(dir / (stem + ".csv"), analytics::matrix_dense_csv(m, space));
    }
}

}  // namespace

StageSummary run_analyze(const RunConfig& config) {
    require_input(config.taxonomy, "taxonomy");
    require_input(config.citations, "citations");
    if (config.output_root.empty()) throw_usage("config: missing required path 'output_root'");

    RunLock lock(config.output_root);
    Manifests manifests(config.output_root);
    manifests.input("taxonomy", config.taxonomy);
    manifests.input("citations", config.citations);

    Taxonomy tax = Taxonomy::load(config.taxonomy);
    analytics::LabelSpace disciplines = analytics::discipline_space(tax);
    analytics::LabelSpace fields = analytics::field_space(tax);
    auto labels = label_map_for_analysis(config);
    EdgeSet edges = read_edges(config.citations);

    // label sets per paper at both levels, as label-space indices
    auto indices_of = [&](int64_t paper, const analytics::LabelSpace& space,
                          bool field_level) -> std::vector<uint32_t> {
        auto it = labels.find(paper);
        if (it == labels.end()) return {};
        std::vector<uint32_t> out;
        for (const std::string& subfield : it->second) {
            std::string coding = field_level ? field_of(subfield) : discipline_of(subfield);
            out.push_back(space.require(coding));
        }
        return out;
    };

    analytics::CountMatrix field_counts = analytics::CountMatrix::zeros(fields.dim());
    analytics::CountMatrix disc_counts = analytics::CountMatrix::zeros(disciplines.dim());
    uint64_t skipped_edges = 0;
    uint64_t field_tuples = 0, disc_tuples = 0;
    uint64_t field_tuples_raw = 0;
    for (const auto& [citing, cited] : edges.edges) {
        std::vector<uint32_t> citing_fields = indices_of(citing, fields, true);
        std::vector<uint32_t> cited_fields = indices_of(cited, fields, true);
        if (citing_fields.empty() || cited_fields.empty()) {
            ++skipped_edges;
            continue;
        }
        field_tuples_raw += citing_fields.size() * cited_fields.size();
        auto field_pairs = analytics::expand_pairs(citing_fields, cited_fields);
        field_tuples += field_pairs.size();
        analytics::accumulate(field_counts, field_pairs);
        auto disc_pairs = analytics::expand_pairs(indices_of(citing, disciplines, false),
                                                  indices_of(cited, disciplines, false));
        disc_tuples += disc_pairs.size();
        analytics::accumulate(disc_counts, disc_pairs);
    }

    fs::path dir = config.output_root / "analysis";
    fs::create_directories(dir);

    // discipline level: raw, transposed, normalized, net, truncated grids
    analytics::CountMatrix disc_out = analytics::transpose(disc_counts);
    analytics::NormMatrix disc_in_norm = analytics::row_normalize(disc_counts);
    analytics::NormMatrix disc_out_norm = analytics::row_normalize(disc_out);
    analytics::NetOutput disc_net = analytics::net_output(disc_counts, disc_out);
    write_matrix_files(dir, "inputs_disciplines", disc_counts, disciplines);
    write_matrix_files(dir, "outputs_disciplines", disc_out, disciplines);
    write_matrix_files(dir, "inputs_disciplines_normalized", disc_in_norm, disciplines);
    write_matrix_files(dir, "outputs_disciplines_normalized", disc_out_norm, disciplines);
    write_matrix_files(dir, "net_disciplines", disc_net.raw, disciplines);
    write_matrix_files(dir, "net_disciplines_normalized", disc_net.normalized, disciplines);

    // field level
    analytics::CountMatrix field_out = analytics::transpose(field_counts);
    analytics::NormMatrix field_in_norm = analytics::row_normalize(field_counts);
    analytics::NormMatrix field_out_norm = analytics::row_normalize(field_out);
    analytics::NetOutput field_net = analytics::net_output(field_counts, field_out);
    write_matrix_files(dir, "inputs_fields", field_counts, fields);
    write_matrix_files(dir, "outputs_fields", field_out, fields);
    write_matrix_files(dir, "inputs_fields_normalized", field_in_norm, fields);
    write_matrix_files(dir, "outputs_fields_normalized", field_out_norm, fields);
    write_matrix_files(dir, "net_fields_normalized", field_net.normalized, fields);
    write_matrix_files(dir, "inputs_fields_normalized_truncated",
                       analytics::truncate_cells(field_in_norm, config.truncate), fields);
    write_matrix_files(dir, "outputs_fields_normalized_truncated",
                       analytics::truncate_cells(field_out_norm, config.truncate), fields);
    write_matrix_files(dir, "net_fields_normalized_truncated",
                       analytics::truncate_cells(field_net.normalized, config.truncate), fields);

    // interfieldness scores
    analytics::FieldScores across = analytics::across_scores(field_counts, fields);
    analytics::FieldScores within;
    within.overlap.assign(fields.dim(), 0.0);
    within.imbalance.assign(fields.dim(), 0.0);
    within.totals.assign(fields.dim(), 0);
    within.defined.assign(fields.dim(), 0);
    within.boundary.assign(fields.dim(), 0);
    std::string demand_supply = "field,within_demand,within_supply\n";
    for (size_t b = 0; b < fields.blocks.size(); ++b) {
        auto [begin, end] = fields.blocks[b];
        size_t n = end - begin;
        if (n == 0) continue;
        analytics::CountMatrix block = analytics::CountMatrix::zeros(n);
        for (size_t r = 0; r < n; ++r) {
            for (size_t c = 0; c < n; ++c) block.at(r, c) = field_counts.at(begin + r, begin + c);
        }
        analytics::FieldScores scores = analytics::within_scores(block);
        for (size_t f = 0; f < n; ++f) {
            within.overlap[begin + f] = scores.overlap[f];
            within.imbalance[begin + f] = scores.imbalance[f];
            within.totals[begin + f] = scores.totals[f];
            within.defined[begin + f] = scores.defined[f];
            within.boundary[begin + f] = scores.boundary[f];
        }
        // within-discipline interfield demand/supply: off-diagonal row sums
        // of the normalized block and its transpose
        analytics::NormMatrix in_norm = analytics::row_normalize(block);
        analytics::NormMatrix out_norm = analytics::row_normalize(analytics::transpose(block));
        for (size_t f = 0; f < n; ++f) {
            double demand = 0.0, supply = 0.0;
            for (size_t g = 0; g < n; ++g) {
                if (g == f) continue;
                demand += in_norm.at(f, g);
                supply += out_norm.at(f, g);
            }
            demand_supply += fields.codings[begin + f] + "," + format_double(demand, 9) + "," +
                             format_double(supply, 9) + "\n";
        }
    }
    write_file_atomic(dir / "interfield_demand_supply.csv", demand_supply);

    std::string sigma_fields =
        "field,intra_overlap,intra_imbalance,inter_overlap,inter_imbalance,defined,at_boundary\n";
    for (size_t f = 0; f < fields.dim(); ++f) {
        bool defined = within.defined[f] || across.defined[f];
        bool boundary = within.boundary[f] || across.boundary[f];
        sigma_fields += fields.codings[f] + ",";
        sigma_fields += (within.defined[f] ? format_double(within.overlap[f], 9) : "") + ",";
        sigma_fields += (within.defined[f] ? format_double(within.imbalance[f], 9) : "") + ",";
        sigma_fields += (across.defined[f] ? format_double(across.overlap[f], 9) : "") + ",";
        sigma_fields += (across.defined[f] ? format_double(across.imbalance[f], 9) : "") + ",";
        sigma_fields += defined ? "1" : "0";
        sigma_fields += ",";
        sigma_fields += boundary ? "1" : "0";
        sigma_fields += "\n";
    }
    write_file_atomic(dir / "sigma_fields.csv", sigma_fields);

    std::vector<analytics::DisciplineScoreRow> table =
        analytics::discipline_score_table(within, across, fields, config.weighted_average);
    std::string sigma_disc =
        "discipline_label,discipline,intra_overlap,intra_imbalance,inter_overlap,inter_imbalance\n";
    for (const analytics::DisciplineScoreRow& row : table) {
        sigma_disc += std::to_string(row.code) + "," + row.name + "," +
                      format_double(row.intra_overlap, 9) + "," +
                      format_double(row.intra_imbalance, 9) + "," +
                      format_double(row.inter_overlap, 9) + "," +
                      format_double(row.inter_imbalance, 9) + "\n";
    }
    write_file_atomic(dir / "sigma_disciplines.csv", sigma_disc);

    // per-discipline corpus summary: papers, field count, ratio
    std::vector<uint64_t> papers_per_block(fields.blocks.size(), 0);
    for (const auto& [paper, codings] : labels) {
        std::set<uint32_t> blocks;
        for (const std::string& subfield : codings) {
            blocks.insert(fields.block_of[fields.require(field_of(subfield))]);
        }
        for (uint32_t b : blocks) ++papers_per_block[b];
    }
    std::string disc_summary = "discipline_label,discipline,papers,fields,papers_per_field\n";
    for (size_t b = 0; b < fields.blocks.size(); ++b) {
        auto [begin, end] = fields.blocks[b];
        size_t n_fields = end - begin;
        double ratio = n_fields ? static_cast<double>(papers_per_block[b]) / static_cast<double>(n_fields) : 0.0;
        disc_summary += std::to_string(fields.block_codes[b]) + "," + fields.block_names[b] + "," +
                        std::to_string(papers_per_block[b]) + "," + std::to_string(n_fields) + "," +
                        format_double(ratio, 6) + "\n";
    }
    write_file_atomic(dir / "discipline_summary.csv", disc_summary);

    // interdisciplinarity scatter: off-diagonal (cross-block) row sums of the
    // normalized matrices, at discipline and at field granularity
    std::string disc_scatter = "discipline_label,discipline,outside_demand,outside_supply\n";
    for (size_t d = 0; d < disciplines.dim(); ++d) {
        double demand = 0.0, supply = 0.0;
        for (size_t e = 0; e < disciplines.dim(); ++e) {
            if (e == d) continue;
            demand += disc_in_norm.at(d, e);
            supply += disc_out_norm.at(d, e);
        }
        disc_scatter += std::to_string(disciplines.block_codes[d]) + "," + disciplines.names[d] +
                        "," + format_double(demand, 9) + "," + format_double(supply, 9) + "\n";
    }
    write_file_atomic(dir / "interdisciplinarity_disciplines.csv", disc_scatter);

    std::string field_scatter = "field,outside_demand,outside_supply\n";
    for (size_t f = 0; f < fields.dim(); ++f) {
        auto [begin, end] = fields.blocks[fields.block_of[f]];
        double demand = 0.0, supply = 0.0;
        for (size_t g = 0; g < fields.dim(); ++g) {
            if (g >= begin && g < end) continue;
            demand += field_in_norm.at(f, g);
            supply += field_out_norm.at(f, g);
        }
        field_scatter += fields.codings[f] + "," + format_double(demand, 9) + "," +
                         format_double(supply, 9) + "\n";
    }
    write_file_atomic(dir / "interdisciplinarity_fields.csv", field_scatter);

    // strong demand/supply cells at discipline level
    std::string edges_csv = "kind,citing,cited,share\n";
    for (size_t r = 0; r < disciplines.dim(); ++r) {
        for (size_t c = 0; c < disciplines.dim(); ++c) {
            if (disc_in_norm.at(r, c) > config.edge_threshold) {
                edges_csv += "demand," + disciplines.codings[r] + "," + disciplines.codings[c] +
                             "," + format_double(disc_in_norm.at(r, c), 9) + "\n";
            }
        }
    }
    for (size_t r = 0; r < disciplines.dim(); ++r) {
        for (size_t c = 0; c < disciplines.dim(); ++c) {
            if (disc_out_norm.at(r, c) > config.edge_threshold) {
                edges_csv += "supply," + disciplines.codings[r] + "," + disciplines.codings[c] +
                             "," + format_double(disc_out_norm.at(r, c), 9) + "\n";
            }
        }
    }
    write_file_atomic(dir / "strong_edges_disciplines.csv", edges_csv);

    for (const fs::directory_entry& entry : fs::directory_iterator(dir)) {
        manifests.output(config.output_root, entry.path());
    }
    manifests.publish("analyze");

    uint64_t zero_rows = 0;
    for (uint8_t z : field_in_norm.zero_rows) zero_rows += z;

    StageSummary summary;
    summary.add("citation_lines", edges.lines);
    summary.add("self_citations_dropped", edges.self_citations);
    summary.add("duplicate_edges_dropped", edges.duplicates);
    summary.add("edges", static_cast<uint64_t>(edges.edges.size()));
    summary.add("edges_skipped_unlabeled", skipped_edges);
    summary.add("field_tuples_raw", field_tuples_raw);
    summary.add("field_tuples", field_tuples);
    summary.add("discipline_tuples", disc_tuples);
    summary.add("zero_rows_flagged", zero_rows);
    return summary;
}

clf::ClassifierTree load_trained_tree(const fs::path& models_dir, const Taxonomy& tax,
                                      LabelMode mode, uint64_t vocab_hash) {
    clf::ClassifierTree tree;
    tree.taxonomy = &tax;  // caller keeps the taxonomy alive
    tree.mode = mode;
    auto load_node = [&](std::optional<int64_t> scope) {
        fs::path path = models_dir / (scope_file_stem(tax, scope) + ".bin");
        if (!fs::exists(path)) return;
        clf::ModelHeader header;
        auto model =
            std::make_unique<clf::LinearClassifier>(clf::load_model(path, header, vocab_hash));
        if (scope) {
            tree.nodes[*scope] = std::move(model);
        } else {
            tree.root = std::move(model);
        }
    };
    load_node(std::nullopt);
    for (int64_t d : tax.leaf_disciplines()) {
        load_node(d);
        for (int64_t f : tax.children(d)) load_node(f);
    }
    return tree;
}

StageSummary run_stage(const RunConfig& config, const std::string& stage) {
    if (stage == "ingest") return run_ingest(config);
    if (stage == "label") return run_label(config);
    if (stage == "train") return run_train(config);
    if (stage == "infer") return run_infer(config);
    if (stage == "analyze") return run_analyze(config);
    throw_usage("unknown stage '" + stage + "'");
}

}  // namespace scifield::pipeline
