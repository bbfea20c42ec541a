// End-to-end checks of the bdkd binary: exit codes, artifact layout, stdout
// contracts, and rerun determinism. Each case shells out to the real
// executable (path injected by the build) against small fixtures.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "bdkd/checkpoint.hpp"
#include "bdkd/common.hpp"
#include "bdkd/model.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace bdkd;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "bdkd_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

CmdResult run_cli(const std::string& args) {
    static int invocation = 0;
    const fs::path dir = fs::temp_directory_path() / "bdkd_cli_tests";
    fs::create_directories(dir);
    const fs::path out_path = dir / ("stdout_" + std::to_string(invocation) + ".txt");
    const fs::path err_path = dir / ("stderr_" + std::to_string(invocation) + ".txt");
    ++invocation;

    const std::string cmd = std::string(BDKD_BIN) + " " + args + " >" + out_path.string() +
                            " 2>" + err_path.string();
    const int raw = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

// Linear pixel-readout teacher: class c is driven by one distinct input pixel,
// so predictions on any varied corpus spread across all classes. A trained or
// randomly initialized conv net tends to collapse onto few classes, which
// would starve the curation pools and make these fixtures flaky.
void write_pixel_teacher(const fs::path& path) {
    Model t({3, 32, 32}, {FlattenSpec{}, DenseSpec{10}});
    Tensor& w = t.param("layer1.weight");
    for (std::size_t c = 0; c < 10; ++c) w.data[c * 3072 + c * 307] = 4.0f;
    save_checkpoint(t, path.string());
}

// Mirrors the executable's default teacher architecture so an epochs=0
// checkpoint can be compared against an independently constructed init.
Model default_teacher_init(std::uint64_t user_seed) {
    Rng rng(mix_seed_md5(user_seed));
    std::vector<LayerSpec> layers;
    for (int ch : {16, 32, 64}) {
        layers.push_back(Conv2dSpec{ch, 3, 1, 1});
        layers.push_back(BatchNorm2dSpec{ch});
        layers.push_back(ReluSpec{});
        layers.push_back(MaxPool2dSpec{2, 2});
    }
    layers.push_back(GlobalAvgPoolSpec{});
    layers.push_back(FlattenSpec{});
    layers.push_back(DenseSpec{10});
    return Model({3, 32, 32}, layers, rng);
}

const std::string& tiny_task() {
    static std::string dir;
    if (dir.empty()) {
        fs::path d = scratch_dir("task");
        CmdResult r = run_cli("gen-task --out " + d.string() +
                              " --train-per-class 3 --val-per-class 1 --test-per-class 2");
        REQUIRE(r.exit_code == 0);
        dir = d.string();
    }
    return dir;
}

const std::string& tiny_corpus() {
    static std::string dir;
    if (dir.empty()) {
        fs::path d = scratch_dir("corpus");
        CmdResult r = run_cli("gen-corpus --out " + d.string() + " --count 30 --seed 5");
        REQUIRE(r.exit_code == 0);
        dir = d.string();
    }
    return dir;
}

} // namespace

TEST_CASE("usage errors exit with code 2") {
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("gen-corpus --out /tmp/x --bogus-flag").exit_code == 2);
    CHECK(run_cli("no-such-subcommand").exit_code == 2);
    CHECK(run_cli("eval --model only").exit_code == 2); // missing required --data

    CmdResult r = run_cli("gen-corpus --out /tmp/x --count 0");
    CHECK(r.exit_code == 2);
    CHECK(run_cli("--help").exit_code == 0);
}

TEST_CASE("gen-corpus writes the archive, reports filter reasons, and reruns identically") {
    fs::path a = scratch_dir("corpus_a");
    fs::path b = scratch_dir("corpus_b");
    CmdResult ra = run_cli("gen-corpus --out " + a.string() + " --count 12 --size 16 --seed 3");
    REQUIRE(ra.exit_code == 0);
    CHECK(ra.out.find("kept 12/") != std::string::npos);
    CHECK(ra.out.find("discarded:") != std::string::npos);
    CHECK(fs::exists(a / "run.json"));

    // header plus one row per kept image
    CHECK(count_lines(slurp(a / "manifest.tsv")) == 13);

    CmdResult rb = run_cli("gen-corpus --out " + b.string() + " --count 12 --size 16 --seed 3");
    REQUIRE(rb.exit_code == 0);
    CHECK(slurp(a / "manifest.tsv") == slurp(b / "manifest.tsv"));
    CHECK(slurp(a / "img_00000.png") == slurp(b / "img_00000.png"));
    CHECK(slurp(a / "img_00011.png") == slurp(b / "img_00011.png"));
}

TEST_CASE("gen-task lays out train, val, and test splits") {
    const std::string& task = tiny_task();
    CHECK(count_lines(slurp(fs::path(task) / "train" / "labels.tsv")) == 31); // header + 10*3
    CHECK(count_lines(slurp(fs::path(task) / "val" / "labels.tsv")) == 11);
    CHECK(count_lines(slurp(fs::path(task) / "test" / "labels.tsv")) == 21);
    CHECK(fs::exists(fs::path(task) / "train" / "img_00000.png"));
}

TEST_CASE("train-teacher with zero epochs checkpoints the untouched initialization") {
    fs::path out = scratch_dir("teacher_e0");
    CmdResult r = run_cli("train-teacher --data " + tiny_task() + " --out " + out.string() +
                          " --epochs 0 --seed 7");
    REQUIRE(r.exit_code == 0);

    Model expected = default_teacher_init(7);
    Model actual = load_checkpoint((out / "teacher.ckpt").string());
    REQUIRE(actual.params().size() == expected.params().size());
    for (const auto& [name, tensor] : expected.params())
        CHECK(tensor.data == actual.params().at(name).data);

    // metrics.csv exists with just the header; no epochs ran
    CHECK(slurp(out / "metrics.csv") ==
          "epoch,train_loss,eval_accuracy,lr,attack_success_rate,wall_seconds\n");
}

TEST_CASE("eval prints four-decimal accuracy and 0.1000 for a constant-logit model") {
    fs::path dir = scratch_dir("zero_model");
    Model zero({3, 32, 32}, {FlattenSpec{}, DenseSpec{10}});
    save_checkpoint(zero, (dir / "zero.ckpt").string());

    CmdResult r = run_cli("eval --model " + (dir / "zero.ckpt").string() + " --data " +
                          tiny_task() + " --split test");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out == "0.1000\n");
}

TEST_CASE("eval rejects a checkpoint with corrupt magic, mentioning the format") {
    fs::path dir = scratch_dir("corrupt");
    std::ofstream((dir / "bad.ckpt").string(), std::ios::binary) << "XXXX not a checkpoint";
    CmdResult r = run_cli("eval --model " + (dir / "bad.ckpt").string() + " --data " + tiny_task());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("BDKD") != std::string::npos);
}

TEST_CASE("eval reproduces the test accuracy train-teacher logged") {
    fs::path out = scratch_dir("teacher_e1");
    CmdResult train = run_cli("train-teacher --data " + tiny_task() + " --out " + out.string() +
                              " --epochs 1 --batch 16 --seed 2");
    REQUIRE(train.exit_code == 0);
    const std::string tag = "test accuracy ";
    auto pos = train.out.find(tag);
    REQUIRE(pos != std::string::npos);
    const std::string logged = train.out.substr(pos + tag.size(), 6);

    CmdResult ev = run_cli("eval --model " + (out / "teacher.ckpt").string() + " --data " +
                           tiny_task() + " --split test");
    REQUIRE(ev.exit_code == 0);
    CHECK(ev.out == logged + "\n");
}

TEST_CASE("curate names a starved class and succeeds when the pools suffice") {
    fs::path dir = scratch_dir("curate");
    write_pixel_teacher(dir / "teacher.ckpt");

    // 45 per class over a 30-image corpus forces some 5-per-source quota to
    // exceed its bucket
    CmdResult starved = run_cli("curate --teacher " + (dir / "teacher.ckpt").string() +
                                " --corpus " + tiny_corpus() + " --out " + dir.string() +
                                " --per-class 45");
    CHECK(starved.exit_code == 1);
    CHECK(starved.err.find("class") != std::string::npos);

    CmdResult ok = run_cli("curate --teacher " + (dir / "teacher.ckpt").string() + " --corpus " +
                           tiny_corpus() + " --out " + dir.string() + " --per-class 2");
    REQUIRE(ok.exit_code == 0);
    CHECK(ok.out.find("class 0: 2 examples") != std::string::npos);
    CHECK(ok.out.find("class 9: 2 examples") != std::string::npos);
    CHECK(ok.out.find("verification: PASS (0 violations)") != std::string::npos);
    CHECK(count_lines(slurp(dir / "kd_manifest.tsv")) == 21); // header + 10*2
}

TEST_CASE("distill runs per seed, appends metrics once, and reruns bitwise-identically") {
    fs::path dir = scratch_dir("distill");
    write_pixel_teacher(dir / "teacher.ckpt");
    CmdResult cur = run_cli("curate --teacher " + (dir / "teacher.ckpt").string() + " --corpus " +
                            tiny_corpus() + " --out " + dir.string() + " --per-class 2");
    REQUIRE(cur.exit_code == 0);

    const std::string common = "distill --teacher " + (dir / "teacher.ckpt").string() +
                               " --corpus " + tiny_corpus() + " --manifest " +
                               (dir / "kd_manifest.tsv").string() + " --eval " + tiny_task() +
                               " --seeds 1,2 --epochs 2 --batch 4";
    CmdResult ra = run_cli(common + " --out " + (dir / "run_a").string());
    REQUIRE(ra.exit_code == 0);
    CHECK(ra.out.find("seed 1: accuracy") != std::string::npos);
    CHECK(ra.out.find("seed 2: accuracy") != std::string::npos);
    CHECK(ra.out.find("mean accuracy") != std::string::npos);

    const std::string metrics = slurp(dir / "run_a" / "metrics.csv");
    CHECK(count_lines(metrics) == 5); // one header + 2 seeds x 2 epochs
    CHECK(metrics.rfind("epoch,train_loss", 0) == 0);
    CHECK(metrics.find("epoch,train_loss", 10) == std::string::npos);

    nlohmann::json run = nlohmann::json::parse(slurp(dir / "run_a" / "run.json"));
    CHECK(run["epochs"] == 2);
    CHECK(run["seeds"] == std::vector<std::uint64_t>{1, 2});
    CHECK(run["effective_seeds"] ==
          std::vector<std::uint64_t>{mix_seed_md5(1), mix_seed_md5(2)});

    CmdResult rb = run_cli(common + " --out " + (dir / "run_b").string());
    REQUIRE(rb.exit_code == 0);
    CHECK(slurp(dir / "run_a" / "student_seed1.ckpt") ==
          slurp(dir / "run_b" / "student_seed1.ckpt"));
    CHECK(slurp(dir / "run_a" / "student_seed2.ckpt") ==
          slurp(dir / "run_b" / "student_seed2.ckpt"));
}

TEST_CASE("a config file fills in flags the command line leaves unset") {
    fs::path dir = scratch_dir("config");
    write_pixel_teacher(dir / "teacher.ckpt");
    CmdResult cur = run_cli("curate --teacher " + (dir / "teacher.ckpt").string() + " --corpus " +
                            tiny_corpus() + " --out " + dir.string() + " --per-class 2");
    REQUIRE(cur.exit_code == 0);

    std::ofstream(dir / "run.ini") << "[distill]\nepochs=1\nbatch=4\ntau=10\n";
    CmdResult r = run_cli("--config " + (dir / "run.ini").string() + " distill --teacher " +
                          (dir / "teacher.ckpt").string() + " --corpus " + tiny_corpus() +
                          " --manifest " + (dir / "kd_manifest.tsv").string() + " --out " +
                          (dir / "out").string() + " --epochs 2");
    REQUIRE(r.exit_code == 0);
    nlohmann::json run = nlohmann::json::parse(slurp(dir / "out" / "run.json"));
    CHECK(run["epochs"] == 2); // explicit flag beats the file
    CHECK(run["batch"] == 4);  // file beats the default
    CHECK(run["tau"] == 10.0);
}

TEST_CASE("attack-viz dumps boundary pairs for inspection") {
    fs::path dir = scratch_dir("viz");
    write_pixel_teacher(dir / "teacher.ckpt");
    CmdResult cur = run_cli("curate --teacher " + (dir / "teacher.ckpt").string() + " --corpus " +
                            tiny_corpus() + " --out " + dir.string() + " --per-class 2");
    REQUIRE(cur.exit_code == 0);

    // a huge epsilon makes every attack cross, so pair PNGs always appear
    CmdResult r = run_cli("attack-viz --teacher " + (dir / "teacher.ckpt").string() +
                          " --corpus " + tiny_corpus() + " --manifest " +
                          (dir / "kd_manifest.tsv").string() + " --out " + (dir / "out").string() +
                          " --count 4 --attack-eps 200 --attack-iters 25");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("attempted 4") != std::string::npos);

    int pngs = 0;
    for (const auto& entry : fs::directory_iterator(dir / "out"))
        if (entry.path().extension() == ".png") ++pngs;
    CHECK(pngs > 0);
}
