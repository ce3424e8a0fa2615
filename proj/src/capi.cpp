#include "scifield.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "scifield/ingest.hpp"
#include "scifield/pipeline.hpp"

using scifield::Error;
using scifield::ErrorKind;

struct scifield_run {
    scifield::pipeline::RunConfig config;
    std::string summary;
    std::string error;
};

namespace {

int code_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return SCIFIELD_ERR_USAGE;
        case ErrorKind::data: return SCIFIELD_ERR_DATA;
        case ErrorKind::internal: return SCIFIELD_ERR_INTERNAL;
    }
    return SCIFIELD_ERR_INTERNAL;
}

template <typename Fn>
int guard(scifield_run* run, Fn&& fn) {
    if (!run) return SCIFIELD_ERR_USAGE;
    run->error.clear();
    try {
        fn();
        return SCIFIELD_OK;
    } catch (const Error& e) {
        run->error = e.what();
        return code_of(e.kind());
    } catch (const std::exception& e) {
        run->error = e.what();
        return SCIFIELD_ERR_INTERNAL;
    } catch (...) {
        run->error = "unknown error";
        return SCIFIELD_ERR_INTERNAL;
    }
}

int run_stage(scifield_run* run, const char* stage) {
    return guard(run, [&] {
        run->summary = scifield::pipeline::run_stage(run->config, stage).text();
    });
}

}  // namespace

extern "C" {

int scifield_run_open(const char* config_path, scifield_run** out) {
    if (!out) return SCIFIELD_ERR_USAGE;
    *out = nullptr;
    auto* run = new (std::nothrow) scifield_run();
    if (!run) return SCIFIELD_ERR_INTERNAL;
    if (config_path) {
        int rc = guard(run, [&] {
            run->config = scifield::pipeline::RunConfig::from_json_file(config_path);
        });
        if (rc != SCIFIELD_OK) {
            delete run;
            return rc;
        }
    }
    *out = run;
    return SCIFIELD_OK;
}

int scifield_run_set(scifield_run* run, const char* key, const char* value) {
    if (!key || !value) return SCIFIELD_ERR_USAGE;
    return guard(run, [&] { run->config.set(key, value); });
}

int scifield_run_label(scifield_run* run) { return run_stage(run, "label"); }
int scifield_run_ingest(scifield_run* run) { return run_stage(run, "ingest"); }
int scifield_run_train(scifield_run* run) { return run_stage(run, "train"); }
int scifield_run_infer(scifield_run* run) { return run_stage(run, "infer"); }
int scifield_run_analyze(scifield_run* run) { return run_stage(run, "analyze"); }

const char* scifield_run_summary(const scifield_run* run) {
    return run ? run->summary.c_str() : "";
}

const char* scifield_run_error(const scifield_run* run) {
    return run ? run->error.c_str() : "";
}

void scifield_run_close(scifield_run* run) { delete run; }

int scifield_decode_abstract(const char* line, char** text_out) {
    if (!line || !text_out) return SCIFIELD_ERR_USAGE;
    *text_out = nullptr;
    try {
        scifield::ingest::AbstractRecord rec = scifield::ingest::parse_abstract_line(line);
        std::string text = scifield::ingest::decode_abstract(rec);
        char* buf = static_cast<char*>(std::malloc(text.size() + 1));
        if (!buf) return SCIFIELD_ERR_INTERNAL;
        std::memcpy(buf, text.c_str(), text.size() + 1);
        *text_out = buf;
        return SCIFIELD_OK;
    } catch (const Error& e) {
        return code_of(e.kind());
    } catch (...) {
        return SCIFIELD_ERR_INTERNAL;
    }
}

void scifield_string_free(char* s) { std::free(s); }

const char* scifield_version(void) { return "0.1.0"; }

}  // extern "C"
