// Shells the CLI binary and checks the exit-code contract:
// 0 success, 1 usage, 2 data error.

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

static int failures = 0;

#define CHECK(cond)                                                       \
    do {                                                                  \
        if (!(cond)) {                                                    \
            std::fprintf(stderr, "CHECK failed at %s:%d: %s\n", __FILE__, \
                         __LINE__, #cond);                                \
            ++failures;                                                   \
        }                                                                 \
    } while (0)

namespace {

int run(const std::string& args, const fs::path& capture = {}) {
    std::string cmd = std::string(SCIFIELD_CLI_PATH) + " " + args;
    cmd += capture.empty() ? " > /dev/null 2>&1"
                           : " > " + capture.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void write(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

}  // namespace

int main() {
    fs::path dir = fs::temp_directory_path() / "scifield_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::path log = dir / "out.txt";

    // usage errors
    CHECK(run("") == 1);                       // a subcommand is required
    CHECK(run("frobnicate") == 1);             // unknown subcommand
    CHECK(run("ingest --no-such-flag 1") == 1);
    CHECK(run("--help", log) == 0);
    CHECK(slurp(log).find("ingest") != std::string::npos);

    // missing inputs are usage errors
    CHECK(run("label --output_root " + (dir / "run").string()) == 1);

    // malformed data is a data error, with the record named on stderr
    write(dir / "taxonomy.tsv", "1\t0\t-\t1\t0\tOnly\n");
    write(dir / "abstracts.tsv", "4242\t2\t{\"a\": [0, 0]}\n");
    int rc = run("ingest --taxonomy " + (dir / "taxonomy.tsv").string() +
                     " --abstracts " + (dir / "abstracts.tsv").string() +
                     " --output_root " + (dir / "run").string(),
                 log);
    CHECK(rc == 2);
    CHECK(slurp(log).find("4242") != std::string::npos);

    // a clean ingest succeeds and prints its counts
    write(dir / "abstracts.tsv", "7\t2\t{\"big\": [0], \"data\": [1]}\n");
    rc = run("ingest --taxonomy " + (dir / "taxonomy.tsv").string() +
                 " --abstracts " + (dir / "abstracts.tsv").string() +
                 " --output_root " + (dir / "run").string(),
             log);
    CHECK(rc == 0);
    CHECK(slurp(log).find("papers=1") != std::string::npos);

    // bad flag values are usage errors
    CHECK(run("train --threshold 2.0 --taxonomy x --output_root y") == 1);

    fs::remove_all(dir);
    if (failures == 0) std::puts("test_cli: all checks passed");
    return failures == 0 ? 0 : 1;
}
