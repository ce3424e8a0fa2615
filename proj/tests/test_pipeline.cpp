#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <map>
#include <set>

#include "corpus_fixture.hpp"
#include "scifield/pipeline.hpp"

using namespace scifield;
using namespace scifield::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("scifield_pipe_" + tag + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int counter;
};
int TempDir::counter = 0;

RunConfig config_for(const fixture::Corpus& corpus, const fs::path& out) {
    RunConfig config;
    config.taxonomy = corpus.taxonomy;
    config.abstracts = corpus.abstracts;
    config.fos_tags = corpus.fos_tags;
    config.descriptors = corpus.descriptors;
    config.citations = corpus.citations;
    config.output_root = out;
    config.vocab_size = 200;
    config.max_len = 64;
    config.train.batch_size = 32;
    config.seed = 9;
    config.train.seed = 9;
    return config;
}

std::string summary_value(const StageSummary& summary, const std::string& key) {
    for (const auto& [k, v] : summary.items) {
        if (k == key) return v;
    }
    return "";
}

// relative path -> content hash for every regular file under root
std::map<std::string, uint64_t> snapshot(const fs::path& root) {
    std::map<std::string, uint64_t> out;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        out[fs::relative(entry.path(), root).generic_string()] = hash_file(entry.path());
    }
    return out;
}

}  // namespace

TEST_CASE("full pipeline runs end to end on a synthetic corpus") {
    TempDir dir("e2e");
    fixture::CorpusSpec spec;
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", spec);
    RunConfig config = config_for(corpus, dir.path / "run");

    StageSummary label = run_label(config);
    CHECK(summary_value(label, "matched") == std::to_string(corpus.labeled_docs));
    CHECK(summary_value(label, "unmatched") == "8");
    CHECK(fs::exists(config.output_root / "labels" / "annotations.tsv"));
    CHECK(fs::exists(config.output_root / "labels" / "split.tsv"));

    StageSummary ingest = run_ingest(config);
    CHECK(summary_value(ingest, "papers") == std::to_string(corpus.labeled_docs + 8));
    CHECK(fs::exists(config.output_root / "vocab.tsv"));
    // one store per discipline plus the inference pool
    CHECK(summary_value(ingest, "stores") == "3");

    SUBCASE("ingest is idempotent byte for byte") {
        uint64_t vocab_hash = hash_file(config.output_root / "vocab.tsv");
        auto stores_before = snapshot(config.stores());
        StageSummary again = run_ingest(config);
        CHECK(hash_file(config.output_root / "vocab.tsv") == vocab_hash);
        CHECK(summary_value(again, "batches") == summary_value(ingest, "batches"));
        CHECK(snapshot(config.stores()) == stores_before);
    }


    StageSummary train = run_train(config);
    CHECK(summary_value(train, "nodes_trained") == std::to_string(1 + 2 + 4));
    CHECK(fs::exists(config.output_root / "models" / "root.bin"));
    CHECK(fs::exists(config.output_root / "models" / "d1.bin"));
    CHECK(fs::exists(config.output_root / "models" / "f1-1.bin"));
    CHECK(fs::exists(config.output_root / "models" / "results.csv"));
    CHECK(fs::exists(config.output_root / "models" / "root.runlog"));

    StageSummary infer = run_infer(config);
    CHECK(summary_value(infer, "papers") == "8");
    // single mode: exactly one triplet per pool paper
    CHECK(summary_value(infer, "triplets") == "8");
    CHECK(summary_value(infer, "papers_without_prediction") == "0");

    StageSummary analyze = run_analyze(config);
    CHECK(summary_value(analyze, "edges") ==
          std::to_string(corpus.labeled_docs / 2));
    CHECK(fs::exists(config.output_root / "analysis" / "sigma_disciplines.csv"));
    CHECK(fs::exists(config.output_root / "analysis" / "inputs_fields.coord.tsv"));

    SUBCASE("analyze can consume inference output as its label source") {
        config.analyze_labels = "predictions";
        StageSummary pred_analyze = run_analyze(config);
        // pool papers have predictions but the synthetic citations join
        // labeled papers, which the prediction file does not cover
        CHECK(summary_value(pred_analyze, "edges_skipped_unlabeled") ==
              std::to_string(corpus.labeled_docs / 2));
    }
}

TEST_CASE("re-ingesting a smaller corpus leaves no stale shards behind") {
    TempDir dir("shrink");
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", fixture::CorpusSpec{});
    RunConfig config = config_for(corpus, dir.path / "run");
    run_label(config);
    run_ingest(config);
    CHECK(fs::exists(config.stores() / "1"));

    // drop discipline 1's descriptors and relabel: its store must go
    std::string kept;
    for (std::string_view line : split_view(read_file(corpus.descriptors), '\n')) {
        if (line.rfind("0-", 0) == 0) {
            kept += std::string(line);
            kept.push_back('\n');
        }
    }
    write_file(corpus.descriptors, kept);
    run_label(config);
    StageSummary again = run_ingest(config);
    CHECK(summary_value(again, "stores") == "2");  // discipline 0 + pool
    CHECK_FALSE(fs::exists(config.stores() / "1"));
}

TEST_CASE("label reports the match rate of the fixture") {
    TempDir dir("rate");
    fixture::CorpusSpec spec;
    spec.disciplines = 1;
    spec.fields_per_discipline = 1;
    spec.subfields_per_field = 1;
    spec.docs_per_leaf = 3;
    spec.unmatched_docs = 3;  // 3 of 6 papers match
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", spec);
    RunConfig config = config_for(corpus, dir.path / "run");
    StageSummary label = run_label(config);
    CHECK(summary_value(label, "match_rate") == "0.5");
}

TEST_CASE("tagged FOS lines respect the minimum-level filter") {
    TempDir dir("floor");
    fixture::CorpusSpec spec;
    spec.disciplines = 1;
    spec.fields_per_discipline = 1;
    spec.subfields_per_field = 1;
    spec.docs_per_leaf = 4;
    spec.unmatched_docs = 0;
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", spec);
    // re-tag: two papers carry a deep tag (level 4), two a shallow one (level 2)
    std::string fos;
    for (int i = 0; i < 4; ++i) {
        fos += std::to_string(1000 + i) + "\t" + fixture::leaf_token(0, 0, 0, 0) + "\t" +
               (i < 2 ? "4" : "2") + "\n";
    }
    write_file(corpus.fos_tags, fos);

    RunConfig config = config_for(corpus, dir.path / "run");
    config.fos_min_level = 4;
    StageSummary label = run_label(config);
    CHECK(summary_value(label, "matched") == "2");
    CHECK(summary_value(label, "tags_dropped_by_level") == "2");
}

TEST_CASE("labeling with no matching descriptors is an error") {
    TempDir dir("nodesc");
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", fixture::CorpusSpec{});
    write_file(corpus.descriptors, "");
    RunConfig config = config_for(corpus, dir.path / "run");
    CHECK_THROWS_WITH_AS(run_label(config), doctest::Contains("no paper matched"), Error);
}

TEST_CASE("inference over an untrained path fails naming the node") {
    TempDir dir("untrained");
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", fixture::CorpusSpec{});
    RunConfig config = config_for(corpus, dir.path / "run");
    run_label(config);
    run_ingest(config);
    run_train(config);
    // drop one discipline's field model; routing may need it for pool papers
    fs::remove(config.output_root / "models" / "d0.bin");
    CHECK_THROWS_WITH_AS(run_infer(config), doctest::Contains("no trained model"), Error);
}

TEST_CASE("a malformed abstract aborts ingest naming the record") {
    TempDir dir("bad");
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", fixture::CorpusSpec{});
    // corrupt one record: duplicate position
    write_file(corpus.abstracts, "4242\t2\t{\"a\": [0, 0]}\n");
    RunConfig config = config_for(corpus, dir.path / "run");
    CHECK_THROWS_WITH_AS(run_ingest(config), doctest::Contains("4242"), Error);
}

TEST_CASE("the citation example fixture produces the exact pair sets") {
    TempDir dir("table4");
    RunConfig config;
    config.taxonomy = std::string(SCIFIELD_DATA_DIR) + "/taxonomy_desk.tsv";
    config.citations = std::string(SCIFIELD_DATA_DIR) + "/table4_citations.tsv";
    config.output_root = dir.path / "run";
    fs::create_directories(config.output_root / "labels");
    fs::copy_file(std::string(SCIFIELD_DATA_DIR) + "/table4_annotations.tsv",
                  config.output_root / "labels" / "annotations.tsv");

    StageSummary analyze = run_analyze(config);
    CHECK(summary_value(analyze, "field_tuples") == "3");
    CHECK(summary_value(analyze, "discipline_tuples") == "2");

    CHECK(read_file(config.output_root / "analysis" / "inputs_fields.coord.tsv") ==
          "43-30\t3-18\t1\n43-30\t43-2\t1\n43-30\t43-30\t1\n");
    CHECK(read_file(config.output_root / "analysis" / "inputs_disciplines.coord.tsv") ==
          "43\t3\t1\n43\t43\t1\n");

    // score tables, hand-derived from the single edge:
    //   field 43-30 inside discipline 43: 2 block citations, net inflow 1
    //   field 43-2: only cited, within-imbalance at the -1 boundary
    //   field 3-18: silent inside its own discipline, cited across
    std::string sigma_fields = read_file(config.output_root / "analysis" / "sigma_fields.csv");
    CHECK(sigma_fields.find("43-30,0.5,0.5,0.666666667,0.333333333,1,0\n") != std::string::npos);
    CHECK(sigma_fields.find("43-2,0.0,-1.0,1.0,0.0,1,1\n") != std::string::npos);
    CHECK(sigma_fields.find("3-18,,,0.0,-1.0,1,1\n") != std::string::npos);
    std::string sigma_disc = read_file(config.output_root / "analysis" / "sigma_disciplines.csv");
    CHECK(sigma_disc.find("43,Biology,0.25,-0.25,0.833333333,0.166666667\n") != std::string::npos);
    CHECK(sigma_disc.find("3,Physics,0.0,0.0,0.0,-1.0\n") != std::string::npos);

    // the normalized demand row splits 1/3 each and the emitted heat grid is
    // clipped at the configured truncation threshold
    CHECK(read_file(config.output_root / "analysis" / "inputs_fields_normalized.coord.tsv") ==
          "43-30\t3-18\t0.333333333\n43-30\t43-2\t0.333333333\n43-30\t43-30\t0.333333333\n");
    CHECK(read_file(config.output_root / "analysis" /
                    "inputs_fields_normalized_truncated.coord.tsv") ==
          "43-30\t3-18\t0.01\n43-30\t43-2\t0.01\n43-30\t43-30\t0.01\n");

    std::string edges_csv = read_file(config.output_root / "analysis" / "strong_edges_disciplines.csv");
    CHECK(edges_csv.find("demand,43,3,0.5\n") != std::string::npos);
    CHECK(edges_csv.find("demand,43,43,0.5\n") != std::string::npos);
    CHECK(edges_csv.find("supply,3,43,1.0\n") != std::string::npos);
}

TEST_CASE("self-citations and duplicate edges are dropped with counters") {
    TempDir dir("dedup");
    RunConfig config;
    config.taxonomy = std::string(SCIFIELD_DATA_DIR) + "/taxonomy_desk.tsv";
    config.output_root = dir.path / "run";
    fs::create_directories(config.output_root / "labels");
    fs::copy_file(std::string(SCIFIELD_DATA_DIR) + "/table4_annotations.tsv",
                  config.output_root / "labels" / "annotations.tsv");
    fs::path citations = dir.path / "cites.tsv";
    write_file(citations,
               "2786288045\t2101095530\n"
               "2786288045\t2101095530\n"   // duplicate
               "2101095530\t2101095530\n"); // self-citation
    config.citations = citations;
    StageSummary analyze = run_analyze(config);
    CHECK(summary_value(analyze, "citation_lines") == "3");
    CHECK(summary_value(analyze, "duplicate_edges_dropped") == "1");
    CHECK(summary_value(analyze, "self_citations_dropped") == "1");
    CHECK(summary_value(analyze, "edges") == "1");
    CHECK(summary_value(analyze, "field_tuples") == "3");
}

TEST_CASE("identical seeds give byte-identical run directories") {
    TempDir dir("det");
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", fixture::CorpusSpec{});
    auto run_all = [&](const fs::path& out) {
        RunConfig config = config_for(corpus, out);
        run_label(config);
        run_ingest(config);
        run_train(config);
        run_infer(config);
        run_analyze(config);
        return snapshot(out);
    };
    auto a = run_all(dir.path / "run_a");
    auto b = run_all(dir.path / "run_b");
    CHECK(a == b);
    CHECK(a.size() > 10);

    SUBCASE("a different seed changes the trained weights") {
        RunConfig config = config_for(corpus, dir.path / "run_c");
        config.seed = 1001;
        config.train.seed = 1001;
        run_label(config);
        run_ingest(config);
        run_train(config);
        CHECK(hash_file(dir.path / "run_c" / "models" / "root.bin") !=
              a.at("models/root.bin"));
    }
}

TEST_CASE("rerunning a stage invalidates only downstream manifests") {
    TempDir dir("stale");
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", fixture::CorpusSpec{});
    RunConfig config = config_for(corpus, dir.path / "run");
    run_label(config);
    run_ingest(config);
    run_train(config);
    fs::path manifests = config.output_root / "manifests";
    CHECK(fs::exists(manifests / "label.json"));
    CHECK(fs::exists(manifests / "train.json"));

    run_ingest(config);
    CHECK(fs::exists(manifests / "label.json"));   // upstream untouched
    CHECK(fs::exists(manifests / "ingest.json"));
    CHECK_FALSE(fs::exists(manifests / "train.json"));  // downstream invalidated
}

TEST_CASE("training a single scope touches only that node's files") {
    TempDir dir("scope");
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", fixture::CorpusSpec{});
    RunConfig config = config_for(corpus, dir.path / "run");
    run_label(config);
    run_ingest(config);
    run_train(config);
    auto before = snapshot(config.output_root / "models");

    RunConfig selective = config;
    selective.scope = "1";        // retrain discipline 1's field node
    selective.seed = 777;         // force different bytes
    selective.train.seed = 777;
    StageSummary summary = run_train(selective);
    CHECK(summary_value(summary, "nodes_trained") == "1");

    auto after = snapshot(config.output_root / "models");
    CHECK(after.size() == before.size());
    for (const auto& [file, hash] : after) {
        if (file == "d1.bin" || file == "d1.runlog") {
            CHECK(hash != before.at(file));
        } else {
            CHECK(hash == before.at(file));
        }
    }
}

TEST_CASE("scoped training accepts root and field scopes too") {
    TempDir dir("scopes");
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", fixture::CorpusSpec{});
    RunConfig config = config_for(corpus, dir.path / "run");
    run_label(config);
    run_ingest(config);

    config.scope = "root";
    CHECK(summary_value(run_train(config), "nodes_trained") == "1");
    config.scope = "0-1";
    CHECK(summary_value(run_train(config), "nodes_trained") == "1");
    config.scope = "0-1-0";
    CHECK_THROWS_AS(run_train(config), Error);  // subfields have no child model

    SUBCASE("level selector trains one tier") {
        RunConfig by_level = config_for(corpus, dir.path / "run2");
        run_label(by_level);
        run_ingest(by_level);
        by_level.level = 1;
        CHECK(summary_value(run_train(by_level), "nodes_trained") == "2");
    }
}

TEST_CASE("nodes without training data are skipped with a warning") {
    TempDir dir("skip");
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", fixture::CorpusSpec{});
    // keep only discipline 0's descriptors: discipline 1 papers go unmatched
    std::string kept;
    for (std::string_view line : split_view(read_file(corpus.descriptors), '\n')) {
        if (line.rfind("0-", 0) == 0) {
            kept += std::string(line);
            kept.push_back('\n');
        }
    }
    write_file(corpus.descriptors, kept);

    RunConfig config = config_for(corpus, dir.path / "run");
    run_label(config);
    run_ingest(config);
    StageSummary train = run_train(config);
    CHECK(summary_value(train, "nodes_planned") == "7");
    CHECK(summary_value(train, "nodes_trained") == "4");  // root, d0, f0-0, f0-1
    CHECK(summary_value(train, "nodes_skipped") == "3");
    bool warned = false;
    for (const auto& [k, v] : train.items) {
        if (k == "warning" && v.find("d1") != std::string::npos) warned = true;
    }
    CHECK(warned);
    CHECK_FALSE(fs::exists(config.output_root / "models" / "d1.bin"));
    CHECK(fs::exists(config.output_root / "models" / "d0.bin"));
}

TEST_CASE("multi-label pipeline emits supersets at lower thresholds") {
    TempDir dir("multi");
    fixture::CorpusSpec spec;
    spec.second_label_fraction = 0.2;
    spec.docs_per_leaf = 30;
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", spec);
    RunConfig config = config_for(corpus, dir.path / "run");
    config.mode = LabelMode::multi;
    run_label(config);
    run_ingest(config);
    run_train(config);

    config.train.threshold = 0.5;
    run_infer(config);
    std::string strict = read_file(config.output_root / "predictions.tsv");
    config.train.threshold = 0.3;
    run_infer(config);
    std::string loose = read_file(config.output_root / "predictions.tsv");

    auto triplets_of = [](const std::string& text) {
        std::set<std::string> out;
        for (std::string_view line : split_view(text, '\n')) {
            if (line.empty()) continue;
            auto fields = split_view(line, '\t');
            out.insert(std::string(fields[0]) + "|" + std::string(fields[3]));
        }
        return out;
    };
    std::set<std::string> strict_set = triplets_of(strict);
    std::set<std::string> loose_set = triplets_of(loose);
    for (const std::string& t : strict_set) CHECK(loose_set.count(t) == 1);
}

TEST_CASE("config files load with path resolution and overrides") {
    TempDir dir("conf");
    fixture::Corpus corpus = fixture::write_corpus(dir.path / "in", fixture::CorpusSpec{});
    fs::path config_file = dir.path / "in" / "run.json";
    write_file(config_file,
               "{\"taxonomy\": \"taxonomy.tsv\", \"abstracts\": \"abstracts.tsv\",\n"
               " \"fos_tags\": \"fos.tsv\", \"descriptors\": \"descriptors.tsv\",\n"
               " \"citations\": \"citations.tsv\", \"output_root\": \"run\",\n"
               " \"mode\": \"multi\", \"seed\": 17, \"vocab_size\": 99}");
    RunConfig config = RunConfig::from_json_file(config_file);
    CHECK(config.taxonomy == corpus.taxonomy);
    CHECK(config.mode == LabelMode::multi);
    CHECK(config.seed == 17);
    CHECK(config.train.seed == 17);
    CHECK(config.vocab_size == 99);

    config.set("mode", "single");
    CHECK(config.mode == LabelMode::single);
    CHECK_THROWS_AS(config.set("nonsense", "1"), Error);
    CHECK_THROWS_AS(config.set("threshold", "1.5"), Error);
    CHECK_THROWS_AS(config.set("level", "7"), Error);

    SUBCASE("missing inputs fail before any work happens") {
        RunConfig bad = config;
        bad.output_root = dir.path / "run";
        bad.taxonomy = dir.path / "nope.tsv";
        CHECK_THROWS_WITH_AS(run_label(bad), doctest::Contains("does not exist"), Error);
    }
}
