#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
}

struct Stage {
    fs::path dir;
    int run_id = 0;

    Stage() {
        dir = fs::temp_directory_path() / ("tabitd-cli-" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Stage() { fs::remove_all(dir); }

    RunResult run(const std::string& args, const std::string& env_prefix = "") {
        fs::path out = dir / ("stdout." + std::to_string(run_id));
        fs::path err = dir / ("stderr." + std::to_string(run_id));
        ++run_id;
        std::string cmd = env_prefix + "\"" + TABITD_BIN + "\" " + args + " > \"" +
                          out.string() + "\" 2> \"" + err.string() + "\"";
        int rc = std::system(cmd.c_str());
        RunResult r;
        r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
        r.out = read_file(out);
        r.err = read_file(err);
        return r;
    }

    fs::path p(const std::string& name) const { return dir / name; }
    std::string q(const std::string& name) const { return "\"" + (dir / name).string() + "\""; }
};

Stage& stage() {
    static Stage s;
    return s;
}

// Small-model training flags shared by the pipeline tests.
const char* kSmallNet = " --epochs 3 --batch-size 64 --virtual-batch 32 "
                        "--n-steps 2 --n-d 8 --n-a 8 --val-fraction 0.1 --seed 5";

} // namespace

TEST_CASE("help and argument errors use the expected exit codes") {
    auto& s = stage();
    CHECK(s.run("--help").exit_code == 0);
    CHECK(s.run("").exit_code == 2);               // a subcommand is required
    CHECK(s.run("fuse").exit_code == 2);           // missing required options
    CHECK(s.run("no-such-command").exit_code == 2);
    CHECK(s.run("train --bogus-flag 1").exit_code == 2);
}

TEST_CASE("schema dump matches the shipped default") {
    auto& s = stage();
    auto r = s.run("schema");
    REQUIRE(r.exit_code == 0);
    auto shipped = read_file(fs::path(TABITD_DATA_DIR) / "default_schema.json");
    CHECK(r.out == shipped);

    auto r2 = s.run("schema --out " + s.q("schema.json"));
    REQUIRE(r2.exit_code == 0);
    CHECK(read_file(s.p("schema.json")) == shipped);
}

TEST_CASE("datagen is deterministic in its seed") {
    auto& s = stage();
    auto r1 = s.run("datagen --ids " + s.q("ids.csv") + " --ueba " + s.q("ueba.csv") +
                    " --seed 5 --ids-rows 1200 --ueba-rows 200");
    REQUIRE(r1.exit_code == 0);
    auto r2 = s.run("datagen --ids " + s.q("ids2.csv") + " --ueba " + s.q("ueba2.csv") +
                    " --seed 5 --ids-rows 1200 --ueba-rows 200");
    REQUIRE(r2.exit_code == 0);
    CHECK(read_file(s.p("ids.csv")) == read_file(s.p("ids2.csv")));
    CHECK(read_file(s.p("ueba.csv")) == read_file(s.p("ueba2.csv")));

    auto r3 = s.run("datagen --ids " + s.q("ids3.csv") + " --ueba " + s.q("ueba3.csv") +
                    " --seed 6 --ids-rows 1200 --ueba-rows 200");
    REQUIRE(r3.exit_code == 0);
    CHECK(read_file(s.p("ids.csv")) != read_file(s.p("ids3.csv")));
}

TEST_CASE("fuse splits deterministically and validates its flags") {
    auto& s = stage();
    auto r = s.run("fuse --ids " + s.q("ids.csv") + " --ueba " + s.q("ueba.csv") +
                   " --out " + s.q("train.titd") + " --test-fraction 0.25 --test-out " +
                   s.q("test.titd") + " --seed 11");
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(s.p("train.titd")));
    CHECK(fs::exists(s.p("test.titd")));
    CHECK(r.out.find("schema fingerprint:") != std::string::npos);
    CHECK(r.out.find("train split ->") != std::string::npos);
    CHECK(r.out.find("test split ->") != std::string::npos);

    // Byte-identical rerun.
    auto r2 = s.run("fuse --ids " + s.q("ids.csv") + " --ueba " + s.q("ueba.csv") +
                    " --out " + s.q("train_b.titd") + " --test-fraction 0.25 --test-out " +
                    s.q("test_b.titd") + " --seed 11");
    REQUIRE(r2.exit_code == 0);
    CHECK(read_file(s.p("train.titd")) == read_file(s.p("train_b.titd")));
    CHECK(read_file(s.p("test.titd")) == read_file(s.p("test_b.titd")));

    // --test-fraction without --test-out is a usage error.
    auto r3 = s.run("fuse --ids " + s.q("ids.csv") + " --ueba " + s.q("ueba.csv") +
                    " --out " + s.q("x.titd") + " --test-fraction 0.25");
    CHECK(r3.exit_code == 2);

    // Missing input carries the offending path in the message.
    auto r4 = s.run("fuse --ids " + s.q("nope.csv") + " --ueba " + s.q("ueba.csv") +
                    " --out " + s.q("x.titd"));
    CHECK(r4.exit_code == 2);
    CHECK(r4.err.find("nope.csv") != std::string::npos);
}

TEST_CASE("train writes a model artifact deterministically") {
    auto& s = stage();
    auto r = s.run("train --data " + s.q("train.titd") + " --out " + s.q("model.timd") +
                   kSmallNet);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("resolved configuration:") != std::string::npos);
    CHECK(r.out.find("epoch 1 ") != std::string::npos);
    CHECK(r.out.find("model ->") != std::string::npos);
    CHECK(r.out.find("best epoch") != std::string::npos);
    auto bytes = read_file(s.p("model.timd"));
    REQUIRE(bytes.size() > 8);
    CHECK(bytes.substr(0, 4) == "TIMD");

    auto r2 = s.run("train --data " + s.q("train.titd") + " --out " + s.q("model_b.timd") +
                    kSmallNet);
    REQUIRE(r2.exit_code == 0);
    CHECK(bytes == read_file(s.p("model_b.timd")));
}

TEST_CASE("config files feed the run log and cli flags override them") {
    auto& s = stage();
    write_file(s.p("cfg.json"),
               "{\"epochs\": 2, \"batch_size\": 64, \"virtual_batch\": 32,"
               " \"encoder\": {\"n_steps\": 2, \"n_d\": 8, \"n_a\": 8}}");
    auto r = s.run("train --data " + s.q("train.titd") + " --out " + s.q("model_cfg.timd") +
                   " --config " + s.q("cfg.json") + " --seed 5");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("epochs = 2  (config)") != std::string::npos);
    CHECK(r.out.find("seed = 5  (cli)") != std::string::npos);
    CHECK(r.out.find("lr_decay = 0.95  (default)") != std::string::npos);

    auto r2 = s.run("train --data " + s.q("train.titd") + " --out " + s.q("model_cfg2.timd") +
                    " --config " + s.q("cfg.json") + " --seed 5 --epochs 3");
    REQUIRE(r2.exit_code == 0);
    CHECK(r2.out.find("epochs = 3  (cli)") != std::string::npos);

    write_file(s.p("bad.json"), "{\"epochz\": 2}");
    auto r3 = s.run("train --data " + s.q("train.titd") + " --out " + s.q("x.timd") +
                    " --config " + s.q("bad.json"));
    CHECK(r3.exit_code == 2);
    CHECK(r3.err.find("epochz") != std::string::npos);
}

TEST_CASE("evaluate writes the full report set and is reproducible") {
    auto& s = stage();
    fs::create_directories(s.p("rep"));
    auto r = s.run("evaluate --model " + s.q("model.timd") + " --data " + s.q("test.titd") +
                   " --reference paper-ours-nsl-ueba --out-dir " + s.q("rep"));
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(s.p("rep/metrics.txt")));
    CHECK(fs::exists(s.p("rep/metrics.json")));
    CHECK(fs::exists(s.p("rep/plot_data.csv")));
    CHECK(fs::exists(s.p("rep/delta.txt")));
    CHECK(fs::exists(s.p("rep/delta.json")));

    auto metrics = nlohmann::json::parse(read_file(s.p("rep/metrics.json")));
    double acc = metrics["accuracy"].get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    auto delta = nlohmann::json::parse(read_file(s.p("rep/delta.json")));
    CHECK(delta["reference"].get<std::string>() == "paper-ours-nsl-ueba");

    fs::create_directories(s.p("rep2"));
    auto r2 = s.run("evaluate --model " + s.q("model.timd") + " --data " + s.q("test.titd") +
                    " --reference paper-ours-nsl-ueba --out-dir " + s.q("rep2"));
    REQUIRE(r2.exit_code == 0);
    CHECK(read_file(s.p("rep/metrics.json")) == read_file(s.p("rep2/metrics.json")));
    CHECK(read_file(s.p("rep/delta.json")) == read_file(s.p("rep2/delta.json")));

    auto r3 = s.run("evaluate --model " + s.q("model.timd") + " --data " + s.q("test.titd") +
                    " --reference not-a-table --out-dir " + s.q("rep"));
    CHECK(r3.exit_code == 2);
    CHECK(r3.err.find("not-a-table") != std::string::npos);
}

TEST_CASE("explain writes the sample, global, and aggregate artifacts") {
    auto& s = stage();
    auto r = s.run("explain --model " + s.q("model.timd") + " --data " + s.q("test.titd") +
                   " --top-k 3 --out " + s.q("exp"));
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(s.p("exp_samples.txt")));
    CHECK(fs::exists(s.p("exp_global.csv")));
    CHECK(fs::exists(s.p("exp_magg.csv")));

    // Global ranking holds one line per fused feature plus a header.
    auto global = read_file(s.p("exp_global.csv"));
    std::size_t lines = static_cast<std::size_t>(std::count(global.begin(), global.end(), '\n'));
    CHECK(lines == 55); // 54 fused columns + header

    auto rbad = s.run("explain --model " + s.q("model.timd") + " --data " + s.q("test.titd") +
                      " --top-k 0 --out " + s.q("exp0"));
    CHECK(rbad.exit_code == 2);
}

TEST_CASE("predict scores raw lines in both formats") {
    auto& s = stage();
    // First four flow records as the prediction input.
    {
        std::istringstream all(read_file(s.p("ids.csv")));
        std::ofstream head(s.p("head.csv"), std::ios::binary);
        std::string line;
        for (int i = 0; i < 4 && std::getline(all, line); ++i) head << line << "\n";
    }

    auto r = s.run("predict --model " + s.q("model.timd") + " --input " + s.q("head.csv") +
                   " --out " + s.q("pred.csv"));
    REQUIRE(r.exit_code == 0);
    std::istringstream csv(read_file(s.p("pred.csv")));
    std::string header;
    REQUIRE(std::getline(csv, header));
    CHECK(header == "line,prediction,p_benign,p_dos,p_malicious,p_normal,p_probe,p_r2l,p_u2r");
    std::string line;
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        std::istringstream fields(line);
        std::string cell;
        std::getline(fields, cell, ',');
        CHECK(std::stoi(cell) == rows); // line numbers are 1-based and ordered
        std::getline(fields, cell, ','); // class name
        double sum = 0.0;
        while (std::getline(fields, cell, ',')) sum += std::stod(cell);
        CHECK(std::abs(sum - 1.0) < 1e-5);
    }
    CHECK(rows == 4);

    auto rj = s.run("predict --model " + s.q("model.timd") + " --input " + s.q("head.csv") +
                    " --format jsonl --out " + s.q("pred.jsonl"));
    REQUIRE(rj.exit_code == 0);
    std::istringstream jsonl(read_file(s.p("pred.jsonl")));
    rows = 0;
    while (std::getline(jsonl, line)) {
        ++rows;
        auto obj = nlohmann::json::parse(line);
        CHECK(obj["line"].get<int>() == rows);
        CHECK(obj.contains("class"));
        REQUIRE(obj["probabilities"].size() == 7);
        double sum = 0.0;
        for (auto& v : obj["probabilities"]) sum += v.get<double>();
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    CHECK(rows == 4);

    // An empty input fails loudly, as does one where no line parses.
    write_file(s.p("empty.csv"), "");
    auto re = s.run("predict --model " + s.q("model.timd") + " --input " + s.q("empty.csv"));
    CHECK(re.exit_code == 2);
    CHECK(re.err.find("holds no records") != std::string::npos);

    write_file(s.p("garbage.csv"), "not,a,flow,record\nanother bad line\n");
    auto rg = s.run("predict --model " + s.q("model.timd") + " --input " + s.q("garbage.csv"));
    CHECK(rg.exit_code == 2);
    CHECK(rg.err.find("no input line") != std::string::npos);

    // A malformed thread budget is rejected before any scoring.
    auto rt = s.run("predict --model " + s.q("model.timd") + " --input " + s.q("head.csv"),
                    "TABITD_THREADS=banana ");
    CHECK(rt.exit_code == 2);
    CHECK(rt.err.find("TABITD_THREADS") != std::string::npos);
}

TEST_CASE("fuse can borrow statistics so fingerprints line up across corpora") {
    auto& s = stage();
    auto r0 = s.run("datagen --ids " + s.q("ids_c.csv") + " --ueba " + s.q("ueba_c.csv") +
                    " --seed 21 --ids-rows 1000 --ueba-rows 150");
    REQUIRE(r0.exit_code == 0);
    auto r1 = s.run("fuse --ids " + s.q("ids_c.csv") + " --ueba " + s.q("ueba_c.csv") +
                    " --out " + s.q("other.titd") + " --stats-from " + s.q("train.titd"));
    REQUIRE(r1.exit_code == 0);
    // Same fitted schema -> same fingerprint -> the trained model scores it.
    auto r2 = s.run("evaluate --model " + s.q("model.timd") + " --data " + s.q("other.titd") +
                    " --out-dir " + s.q("rep"));
    CHECK(r2.exit_code == 0);
}

TEST_CASE("a model refuses datasets fused under a different schema") {
    auto& s = stage();
    auto shipped = read_file(fs::path(TABITD_DATA_DIR) / "default_schema.json");
    auto pos = shipped.find("\"duration\"");
    REQUIRE(pos != std::string::npos);
    write_file(s.p("renamed.json"),
               shipped.substr(0, pos) + "\"duration_x\"" + shipped.substr(pos + 10));

    auto r1 = s.run("fuse --ids " + s.q("ids.csv") + " --ueba " + s.q("ueba.csv") +
                    " --out " + s.q("foreign.titd") + " --schema " + s.q("renamed.json"));
    REQUIRE(r1.exit_code == 0);
    auto r2 = s.run("evaluate --model " + s.q("model.timd") + " --data " +
                    s.q("foreign.titd") + " --out-dir " + s.q("rep"));
    CHECK(r2.exit_code == 4);
    CHECK(r2.err.find("fingerprint") != std::string::npos);
}

TEST_CASE("training divergence exits 3 and leaves a refusable artifact") {
    auto& s = stage();
    auto r = s.run("train --data " + s.q("train.titd") + " --out " + s.q("diverged.timd") +
                   kSmallNet + " --lr 1e308");
    CHECK(r.exit_code == 3);
    CHECK_FALSE(fs::exists(s.p("diverged.timd")));
    REQUIRE(fs::exists(s.p("diverged.timd.failed")));

    auto r2 = s.run("evaluate --model " + s.q("diverged.timd.failed") + " --data " +
                    s.q("test.titd") + " --out-dir " + s.q("rep"));
    CHECK(r2.exit_code == 2); // not a supervised model
}

TEST_CASE("the pretraining phase runs end to end from the command line") {
    auto& s = stage();
    auto r = s.run("train --data " + s.q("train.titd") + " --out " + s.q("model_pre.timd") +
                   kSmallNet + " --pretrain --pretrain-epochs 2");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("pretrain epoch 1") != std::string::npos);
    CHECK(r.out.find("holdout loss") != std::string::npos);
    CHECK(r.out.find("model ->") != std::string::npos);
    // The warm-started model is a different artifact than the cold one.
    CHECK(read_file(s.p("model_pre.timd")) != read_file(s.p("model.timd")));
}
