#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bdkd/augment.hpp"
#include "bdkd/boundary.hpp"
#include "bdkd/checkpoint.hpp"
#include "bdkd/common.hpp"
#include "bdkd/corpus.hpp"
#include "bdkd/curate.hpp"
#include "bdkd/distill.hpp"
#include "bdkd/geoshapes.hpp"
#include "bdkd/model.hpp"

extern "C" void openblas_set_num_threads(int);

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bdkd;

namespace {

std::vector<LayerSpec> conv_arch(const std::vector<int>& channels, int classes) {
    require(!channels.empty(), "model: need at least one conv stage");
    std::vector<LayerSpec> layers;
    for (int ch : channels) {
        require(ch >= 1, "model: channel counts must be positive");
        layers.push_back(Conv2dSpec{ch, 3, 1, 1});
        layers.push_back(BatchNorm2dSpec{ch});
        layers.push_back(ReluSpec{});
        layers.push_back(MaxPool2dSpec{2, 2});
    }
    layers.push_back(GlobalAvgPoolSpec{});
    layers.push_back(FlattenSpec{});
    layers.push_back(DenseSpec{classes});
    return layers;
}

/// Every subcommand records its fully resolved configuration before doing any
/// work, so a run can be reproduced from the artifact directory alone.
void echo_run_config(const std::string& out_dir, const json& config) {
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / "run.json";
    std::ofstream f(path, std::ios::trunc);
    require(f.good(), "cannot write " + path.string());
    f << config.dump(2) << "\n";
    require(f.good(), "write failed for " + path.string());
    std::cout << "config: " << path.string() << "\n";
}

/// Appends rows, writing the header only when the file does not exist yet.
void append_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    const bool fresh = !fs::exists(path);
    std::ofstream f(path, std::ios::app);
    require(f.good(), "cannot open " + path);
    if (fresh) f << "epoch,train_loss,eval_accuracy,lr,attack_success_rate,wall_seconds\n";
    char buf[160];
    for (const MetricsRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.3f\n", r.epoch, r.train_loss,
                      r.eval_accuracy, r.lr, r.attack_success_rate, r.wall_seconds);
        f << buf;
    }
    require(f.good(), "write failed for " + path);
}

std::vector<Tensor> corpus_images(const std::vector<CorpusImage>& corpus) {
    std::vector<Tensor> images;
    images.reserve(corpus.size());
    for (const CorpusImage& ci : corpus) images.push_back(ci.image);
    return images;
}

// ---------------------------------------------------------------- gen-corpus

struct GenCorpusCmd {
    std::string out;
    int count = 2000;
    int size = 32;
    int depth = 12;
    std::uint64_t seed = 1;
    bool raw = false;
};

int run_gen_corpus(const GenCorpusCmd& cmd) {
    echo_run_config(cmd.out, json{{"subcommand", "gen-corpus"},
                                  {"out", cmd.out},
                                  {"count", cmd.count},
                                  {"size", cmd.size},
                                  {"depth", cmd.depth},
                                  {"seed", cmd.seed},
                                  {"raw", cmd.raw}});
    Rng rng(cmd.seed);
    CorpusBuildStats stats;
    std::vector<CorpusImage> corpus = build_corpus(rng, cmd.count, cmd.size, cmd.size, cmd.depth,
                                                   &stats);
    save_corpus(cmd.out, corpus, cmd.raw);
    std::printf("kept %d/%d (discarded: %d constant, %d two-color, %d sparse)\n", stats.kept,
                stats.attempts, stats.discarded_constant, stats.discarded_two_color,
                stats.discarded_sparse);
    return 0;
}

// ------------------------------------------------------------------ gen-task

struct GenTaskCmd {
    std::string out;
    std::uint64_t seed = 1;
    int train_per_class = 500;
    int val_per_class = 100;
    int test_per_class = 200;
};

int run_gen_task(const GenTaskCmd& cmd) {
    echo_run_config(cmd.out, json{{"subcommand", "gen-task"},
                                  {"out", cmd.out},
                                  {"seed", cmd.seed},
                                  {"train_per_class", cmd.train_per_class},
                                  {"val_per_class", cmd.val_per_class},
                                  {"test_per_class", cmd.test_per_class}});
    GeoshapesSplits splits = generate_geoshapes(cmd.seed, cmd.train_per_class, cmd.val_per_class,
                                                cmd.test_per_class);
    save_labeled_dataset((fs::path(cmd.out) / "train").string(), splits.train);
    save_labeled_dataset((fs::path(cmd.out) / "val").string(), splits.val);
    save_labeled_dataset((fs::path(cmd.out) / "test").string(), splits.test);
    std::printf("geoshapes: %d train, %d val, %d test images across %d classes\n",
                splits.train.size(), splits.val.size(), splits.test.size(), kGeoshapesClasses);
    return 0;
}

// -------------------------------------------------------------- train-teacher

struct TrainTeacherCmd {
    std::string data;
    std::string out;
    std::vector<int> channels = {16, 32, 64};
    int epochs = 40;
    int batch = 128;
    float lr0 = 0.1f;
    float momentum = 0.9f;
    float weight_decay = 1e-4f;
    std::uint64_t seed = 1;
};

int run_train_teacher(const TrainTeacherCmd& cmd) {
    const std::uint64_t effective = mix_seed_md5(cmd.seed);
    echo_run_config(cmd.out, json{{"subcommand", "train-teacher"},
                                  {"data", cmd.data},
                                  {"out", cmd.out},
                                  {"channels", cmd.channels},
                                  {"epochs", cmd.epochs},
                                  {"batch", cmd.batch},
                                  {"lr0", cmd.lr0},
                                  {"momentum", cmd.momentum},
                                  {"weight_decay", cmd.weight_decay},
                                  {"seed", cmd.seed},
                                  {"effective_seed", effective}});

    LabeledDataset train = load_labeled_dataset((fs::path(cmd.data) / "train").string());
    const int h = train.images.front().dim(1), w = train.images.front().dim(2);

    Rng rng(effective);
    Model model({3, h, w}, conv_arch(cmd.channels, train.num_classes), rng);

    TrainConfig cfg;
    cfg.epochs = cmd.epochs;
    cfg.batch_size = cmd.batch;
    cfg.lr0 = cmd.lr0;
    cfg.momentum = cmd.momentum;
    cfg.weight_decay = cmd.weight_decay;

    std::vector<MetricsRow> metrics;
    Model teacher = train_teacher(train, model, cfg, rng, &metrics);
    write_metrics_csv((fs::path(cmd.out) / "metrics.csv").string(), metrics);
    save_checkpoint(teacher, (fs::path(cmd.out) / "teacher.ckpt").string());

    if (!metrics.empty())
        std::printf("best validation accuracy %.4f\n",
                    std::max_element(metrics.begin(), metrics.end(), [](auto& a, auto& b) {
                        return a.eval_accuracy < b.eval_accuracy;
                    })->eval_accuracy);
    const fs::path test_dir = fs::path(cmd.data) / "test";
    if (fs::exists(test_dir)) {
        LabeledDataset test = load_labeled_dataset(test_dir.string());
        std::printf("test accuracy %.4f\n", evaluate(teacher, test));
    }
    return 0;
}

// --------------------------------------------------------------------- curate

struct CurateCmd {
    std::string teacher;
    std::string corpus;
    std::string out;
    int per_class = 200;
    int batch = 64;
    std::uint64_t seed = 1;
    bool allow_replacement = false;
};

int run_curate(const CurateCmd& cmd) {
    echo_run_config(cmd.out, json{{"subcommand", "curate"},
                                  {"teacher", cmd.teacher},
                                  {"corpus", cmd.corpus},
                                  {"out", cmd.out},
                                  {"per_class", cmd.per_class},
                                  {"batch", cmd.batch},
                                  {"seed", cmd.seed},
                                  {"allow_replacement", cmd.allow_replacement}});

    Model teacher = load_checkpoint(cmd.teacher);
    teacher.set_mode(Mode::eval);
    std::vector<Tensor> images = corpus_images(load_corpus(cmd.corpus));
    std::vector<int> preds = predict_all(teacher, images, cmd.batch);

    Rng rng(cmd.seed);
    std::vector<std::string> warnings;
    KdDataset ds = build_kd_dataset(images, preds, teacher.num_classes(),
                                    std::vector<int>(static_cast<std::size_t>(teacher.num_classes()),
                                                     cmd.per_class),
                                    rng, cmd.allow_replacement, &warnings);
    for (const std::string& wmsg : warnings) std::cerr << "warning: " << wmsg << "\n";
    save_kd_manifest((fs::path(cmd.out) / "kd_manifest.tsv").string(), ds);

    for (int c = 0; c < ds.num_classes; ++c)
        std::printf("class %d: %d examples\n", c, ds.per_class_count[static_cast<std::size_t>(c)]);
    VerifyReport report = verify_dataset(teacher, ds);
    std::printf("verification: %s (%zu violations)\n", report.pass ? "PASS" : "FAIL",
                report.violations.size());
    return report.pass ? 0 : 1;
}

// -------------------------------------------------------------------- distill

struct DistillCmd {
    std::string teacher;
    std::string corpus;
    std::string manifest;
    std::string eval_root; // task dir; val drives per-epoch eval, test the report
    std::string out;
    std::vector<std::uint64_t> seeds = {1};
    std::vector<int> student_channels; // empty: clone the teacher architecture
    int epochs = 60;
    int batch = 32;
    int examples_per_class = 0; // 0: use the whole manifest
    float lr0 = 0.1f;
    float momentum = 0.9f;
    float weight_decay = 1e-4f;
    float tau = 20.0f;
    // attack settings
    float attack_eps = 10.0f;
    float attack_alpha0 = 1.0f;
    int attack_iters = 12;
    float softmax_threshold = 0.95f;
    bool pgd_init = false;
    float deeper_eps = 1.0f;
    float deeper_alpha = 1.0f;
    // ablation toggles (paper variants are flags, not code edits)
    bool no_border_attack = false;
    bool no_deeper_attack = false;
    bool no_pre_success = false;
    bool no_filters = false;
    bool no_mixup = false;
    bool attack_include_normal_mixup = false;
    bool loss_include_all = false;
    std::string aug_level = "standard";
    int rand_n = 4;
    int rand_m = 14;
    int pad = 4;
    float p_flip = 0.5f;
    float p_invert = 0.5f;
    float elastic_alpha = 8.0f;
    float elastic_sigma = 3.0f;
    bool attack_stats = false;
    bool dump_pairs_flag = false;
};

KdDataset trim_per_class(KdDataset kd, int per_class) {
    if (per_class <= 0) return kd;
    KdDataset trimmed;
    trimmed.num_classes = kd.num_classes;
    trimmed.per_class_count.assign(static_cast<std::size_t>(kd.num_classes), 0);
    for (Example& ex : kd.examples) {
        int& taken = trimmed.per_class_count[static_cast<std::size_t>(ex.target)];
        if (taken < per_class) {
            ++taken;
            trimmed.examples.push_back(std::move(ex));
        }
    }
    for (int c = 0; c < trimmed.num_classes; ++c)
        require(trimmed.per_class_count[static_cast<std::size_t>(c)] == per_class,
                "distill: class " + std::to_string(c) + " has only " +
                    std::to_string(trimmed.per_class_count[static_cast<std::size_t>(c)]) +
                    " curated examples, need " + std::to_string(per_class));
    return trimmed;
}

int run_distill(const DistillCmd& cmd) {
    std::vector<std::uint64_t> effective;
    for (std::uint64_t s : cmd.seeds) effective.push_back(mix_seed_md5(s));
    echo_run_config(
        cmd.out,
        json{{"subcommand", "distill"},
             {"teacher", cmd.teacher},
             {"corpus", cmd.corpus},
             {"manifest", cmd.manifest},
             {"eval", cmd.eval_root},
             {"out", cmd.out},
             {"seeds", cmd.seeds},
             {"effective_seeds", effective},
             {"student_channels", cmd.student_channels},
             {"epochs", cmd.epochs},
             {"batch", cmd.batch},
             {"examples_per_class", cmd.examples_per_class},
             {"lr0", cmd.lr0},
             {"momentum", cmd.momentum},
             {"weight_decay", cmd.weight_decay},
             {"tau", cmd.tau},
             {"attack_eps", cmd.attack_eps},
             {"attack_alpha0", cmd.attack_alpha0},
             {"attack_iters", cmd.attack_iters},
             {"softmax_threshold", cmd.softmax_threshold},
             {"pgd_init", cmd.pgd_init},
             {"deeper_eps", cmd.deeper_eps},
             {"deeper_alpha", cmd.deeper_alpha},
             {"no_border_attack", cmd.no_border_attack},
             {"no_deeper_attack", cmd.no_deeper_attack},
             {"no_pre_success", cmd.no_pre_success},
             {"no_filters", cmd.no_filters},
             {"no_mixup", cmd.no_mixup},
             {"attack_include_normal_mixup", cmd.attack_include_normal_mixup},
             {"loss_include_all", cmd.loss_include_all},
             {"aug_level", cmd.aug_level},
             {"rand_n", cmd.rand_n},
             {"rand_m", cmd.rand_m},
             {"pad", cmd.pad},
             {"p_flip", cmd.p_flip},
             {"p_invert", cmd.p_invert},
             {"elastic_alpha", cmd.elastic_alpha},
             {"elastic_sigma", cmd.elastic_sigma},
             {"attack_stats", cmd.attack_stats},
             {"dump_pairs", cmd.dump_pairs_flag}});

    Model teacher = load_checkpoint(cmd.teacher);
    teacher.set_mode(Mode::eval);
    std::vector<Tensor> images = corpus_images(load_corpus(cmd.corpus));
    KdDataset kd = trim_per_class(load_kd_dataset(cmd.manifest, images), cmd.examples_per_class);
    require(kd.num_classes == teacher.num_classes(),
            "distill: manifest and teacher disagree on the class count");

    LabeledDataset val, test;
    if (!cmd.eval_root.empty()) {
        const fs::path root(cmd.eval_root);
        if (fs::exists(root / "val")) val = load_labeled_dataset((root / "val").string());
        test = load_labeled_dataset((root / "test").string());
    }

    TrainConfig cfg;
    cfg.epochs = cmd.epochs;
    cfg.batch_size = cmd.batch;
    cfg.lr0 = cmd.lr0;
    cfg.momentum = cmd.momentum;
    cfg.weight_decay = cmd.weight_decay;
    cfg.tau = cmd.tau;
    cfg.use_border_attack = !cmd.no_border_attack;
    cfg.use_deeper_attack = !cmd.no_deeper_attack;
    cfg.use_pre_success = !cmd.no_pre_success;
    cfg.use_filters = !cmd.no_filters;
    cfg.attack_on_normal_and_mixup = cmd.attack_include_normal_mixup;
    cfg.loss_on_all_example_kinds = cmd.loss_include_all;

    AugmentConfig aug;
    aug.level = parse_augment_level(cmd.aug_level);
    aug.rand_n = cmd.rand_n;
    aug.rand_m = cmd.rand_m;
    aug.pad = cmd.pad;
    aug.p_flip = cmd.p_flip;
    aug.p_invert = cmd.p_invert;
    aug.elastic_alpha = cmd.elastic_alpha;
    aug.elastic_sigma = cmd.elastic_sigma;
    aug.mixup_enabled = !cmd.no_mixup;

    AttackConfig atk;
    atk.epsilon = cmd.attack_eps;
    atk.alpha0 = cmd.attack_alpha0;
    atk.max_iters = cmd.attack_iters;
    atk.softmax_threshold = cmd.softmax_threshold;
    atk.pgd_init = cmd.pgd_init;
    DeeperConfig deep;
    deep.epsilon = cmd.deeper_eps;
    deep.alpha = cmd.deeper_alpha;

    fs::create_directories(cmd.out);
    const std::string metrics_path = (fs::path(cmd.out) / "metrics.csv").string();
    const std::string stats_path = (fs::path(cmd.out) / "attack_stats.csv").string();
    fs::remove(metrics_path);
    fs::remove(stats_path);

    DistillOptions opts;
    if (!val.images.empty()) opts.eval_set = &val;
    if (cmd.attack_stats) opts.attack_stats_csv = stats_path;
    if (cmd.dump_pairs_flag) {
        opts.dump_pairs_dir = (fs::path(cmd.out) / "pairs").string();
        fs::create_directories(opts.dump_pairs_dir);
    }

    std::size_t run_index = 0;
    TrialStats stats = run_trials(cmd.seeds, [&](std::uint64_t eff_seed) {
        const std::uint64_t user_seed = cmd.seeds[run_index++];
        Rng rng(eff_seed);
        Model student = cmd.student_channels.empty()
                            ? Model(teacher.input_shape(), teacher.layers(), rng)
                            : Model(teacher.input_shape(),
                                    conv_arch(cmd.student_channels, teacher.num_classes()), rng);

        DistillOutputs outputs;
        Model trained = distill(teacher, student, kd, cfg, aug, atk, deep, rng, opts, &outputs);
        append_metrics_csv(metrics_path, outputs.metrics);
        save_checkpoint(trained, (fs::path(cmd.out) /
                                  ("student_seed" + std::to_string(user_seed) + ".ckpt"))
                                     .string());

        double acc = test.images.empty() ? 0.0 : evaluate(trained, test);
        if (test.images.empty())
            std::printf("seed %llu: done (%d starved batches)\n",
                        static_cast<unsigned long long>(user_seed), outputs.skipped_batches);
        else
            std::printf("seed %llu: accuracy %.4f (%d starved batches)\n",
                        static_cast<unsigned long long>(user_seed), acc,
                        outputs.skipped_batches);
        return acc;
    });

    if (!test.images.empty())
        std::printf("mean accuracy %.4f +- %.4f over %zu seeds\n", stats.mean, stats.stddev,
                    cmd.seeds.size());
    return 0;
}

// ----------------------------------------------------------------------- eval

struct EvalCmd {
    std::string model;
    std::string data;
    std::string split = "test";
};

int run_eval(const EvalCmd& cmd) {
    Model model = load_checkpoint(cmd.model);
    model.set_mode(Mode::eval);
    LabeledDataset ds = load_labeled_dataset((fs::path(cmd.data) / cmd.split).string());
    std::printf("%.4f\n", evaluate(model, ds));
    return 0;
}

// ----------------------------------------------------------------- attack-viz

struct AttackVizCmd {
    std::string teacher;
    std::string corpus;
    std::string manifest;
    std::string out;
    int count = 16;
    std::uint64_t seed = 1;
    float attack_eps = 10.0f;
    float attack_alpha0 = 1.0f;
    int attack_iters = 12;
    float softmax_threshold = 0.95f;
    bool pgd_init = false;
    bool no_filters = false;
};

int run_attack_viz(const AttackVizCmd& cmd) {
    echo_run_config(cmd.out, json{{"subcommand", "attack-viz"},
                                  {"teacher", cmd.teacher},
                                  {"corpus", cmd.corpus},
                                  {"manifest", cmd.manifest},
                                  {"out", cmd.out},
                                  {"count", cmd.count},
                                  {"seed", cmd.seed},
                                  {"attack_eps", cmd.attack_eps},
                                  {"attack_alpha0", cmd.attack_alpha0},
                                  {"attack_iters", cmd.attack_iters},
                                  {"softmax_threshold", cmd.softmax_threshold},
                                  {"pgd_init", cmd.pgd_init},
                                  {"no_filters", cmd.no_filters}});

    Model teacher = load_checkpoint(cmd.teacher);
    teacher.set_mode(Mode::eval);
    std::vector<Tensor> images = corpus_images(load_corpus(cmd.corpus));
    KdDataset kd = load_kd_dataset(cmd.manifest, images);
    const int n = std::min<int>(cmd.count, static_cast<int>(kd.examples.size()));
    std::vector<Example> batch(kd.examples.begin(), kd.examples.begin() + n);

    AttackConfig atk;
    atk.epsilon = cmd.attack_eps;
    atk.alpha0 = cmd.attack_alpha0;
    atk.max_iters = cmd.attack_iters;
    atk.softmax_threshold = cmd.softmax_threshold;
    atk.pgd_init = cmd.pgd_init;
    AttackBatchFlags flags;
    flags.use_filters = !cmd.no_filters;

    Rng rng(cmd.seed);
    AttackOutput output = attack_batch(teacher, batch, atk, {}, flags, rng);
    dump_pairs(cmd.out, "viz", output);
    std::printf("attempted %d, skipped %d, failed %d, kept %d (mean iters %.2f, mean alpha %.2f)\n",
                output.stats.attempted, output.stats.skipped, output.stats.failed,
                output.stats.kept, output.stats.mean_iters, output.stats.mean_alpha_final);
    std::printf("wrote %zu pair images under %s\n", output.kept_pairs.size() * 2 +
                                                        output.deeper.size() * 2,
                cmd.out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    int threads = 1;
    if (const char* env = std::getenv("BDKD_THREADS")) threads = std::max(1, std::atoi(env));
    openblas_set_num_threads(threads);

    CLI::App app{"data-free distillation pipeline over procedural image corpora"};
    app.require_subcommand(1);
    // Usage: bdkd --config FILE SUBCOMMAND [flags]. Keys are key=value lines,
    // either dotted (distill.batch=16) or under a [subcommand] section;
    // explicit command-line flags always win.
    app.set_config("--config", "", "key=value configuration file; command-line flags win");

    GenCorpusCmd gc;
    CLI::App* gen_corpus = app.add_subcommand("gen-corpus", "render and filter a shader corpus");
    gen_corpus->add_option("--out", gc.out, "output directory")->required();
    gen_corpus->add_option("--count", gc.count, "images to keep")->check(CLI::PositiveNumber);
    gen_corpus->add_option("--size", gc.size, "image height and width")->check(CLI::PositiveNumber);
    gen_corpus->add_option("--depth", gc.depth, "max expression depth")->check(CLI::PositiveNumber);
    gen_corpus->add_option("--seed", gc.seed, "generator seed");
    gen_corpus->add_flag("--raw", gc.raw, "also write lossless float sidecars");

    GenTaskCmd gt;
    CLI::App* gen_task = app.add_subcommand("gen-task", "emit the geoshapes benchmark dataset");
    gen_task->add_option("--out", gt.out, "output directory")->required();
    gen_task->add_option("--seed", gt.seed, "generator seed");
    gen_task->add_option("--train-per-class", gt.train_per_class)->check(CLI::PositiveNumber);
    gen_task->add_option("--val-per-class", gt.val_per_class)->check(CLI::PositiveNumber);
    gen_task->add_option("--test-per-class", gt.test_per_class)->check(CLI::PositiveNumber);

    TrainTeacherCmd tt;
    bool paper_scale = false;
    CLI::App* train_cmd = app.add_subcommand("train-teacher", "supervised teacher training");
    train_cmd->add_option("--data", tt.data, "task directory (train/ and test/ inside)")->required();
    train_cmd->add_option("--out", tt.out, "output directory")->required();
    train_cmd->add_option("--channels", tt.channels, "conv stage widths")->delimiter(',');
    CLI::Option* tt_epochs = train_cmd->add_option("--epochs", tt.epochs);
    CLI::Option* tt_batch = train_cmd->add_option("--batch", tt.batch)->check(CLI::PositiveNumber);
    CLI::Option* tt_lr = train_cmd->add_option("--lr", tt.lr0);
    train_cmd->add_option("--momentum", tt.momentum);
    train_cmd->add_option("--weight-decay", tt.weight_decay);
    train_cmd->add_option("--seed", tt.seed);
    train_cmd->add_flag("--paper-scale", paper_scale, "paper-scale defaults: 400 epochs, batch 256");

    CurateCmd cu;
    CLI::App* curate_cmd = app.add_subcommand("curate", "build the complement-class KD dataset");
    curate_cmd->add_option("--teacher", cu.teacher, "teacher checkpoint")->required();
    curate_cmd->add_option("--corpus", cu.corpus, "corpus directory")->required();
    curate_cmd->add_option("--out", cu.out, "output directory")->required();
    curate_cmd->add_option("--per-class", cu.per_class)->check(CLI::PositiveNumber);
    curate_cmd->add_option("--batch", cu.batch)->check(CLI::PositiveNumber);
    curate_cmd->add_option("--seed", cu.seed);
    curate_cmd->add_flag("--allow-replacement", cu.allow_replacement,
                         "fall back to sampling with replacement when a class pool runs dry");

    DistillCmd di;
    CLI::App* distill_cmd = app.add_subcommand("distill", "data-free distillation");
    distill_cmd->add_option("--teacher", di.teacher, "teacher checkpoint")->required();
    distill_cmd->add_option("--corpus", di.corpus, "corpus directory")->required();
    distill_cmd->add_option("--manifest", di.manifest, "kd_manifest.tsv path")->required();
    distill_cmd->add_option("--eval", di.eval_root,
                            "task directory; val/ drives per-epoch eval, test/ the final report");
    distill_cmd->add_option("--out", di.out, "output directory")->required();
    distill_cmd->add_option("--seeds", di.seeds, "one training run per seed")->delimiter(',');
    distill_cmd->add_option("--student-channels", di.student_channels,
                            "student conv widths (default: clone the teacher)")
        ->delimiter(',');
    distill_cmd->add_option("--epochs", di.epochs);
    distill_cmd->add_option("--batch", di.batch)->check(CLI::PositiveNumber);
    distill_cmd->add_option("--examples-per-class", di.examples_per_class,
                            "trim the manifest to this many per class (0: all)");
    distill_cmd->add_option("--lr", di.lr0);
    distill_cmd->add_option("--momentum", di.momentum);
    distill_cmd->add_option("--weight-decay", di.weight_decay);
    distill_cmd->add_option("--tau", di.tau);
    distill_cmd->add_option("--attack-eps", di.attack_eps);
    distill_cmd->add_option("--attack-alpha0", di.attack_alpha0);
    distill_cmd->add_option("--attack-iters", di.attack_iters)->check(CLI::PositiveNumber);
    distill_cmd->add_option("--softmax-threshold", di.softmax_threshold);
    distill_cmd->add_flag("--pgd-init", di.pgd_init, "random start inside the epsilon ball");
    distill_cmd->add_option("--deeper-eps", di.deeper_eps);
    distill_cmd->add_option("--deeper-alpha", di.deeper_alpha);
    distill_cmd->add_flag("--no-border-attack", di.no_border_attack);
    distill_cmd->add_flag("--no-deeper-attack", di.no_deeper_attack);
    distill_cmd->add_flag("--no-pre-success", di.no_pre_success);
    distill_cmd->add_flag("--no-filters", di.no_filters);
    distill_cmd->add_flag("--no-mixup", di.no_mixup);
    distill_cmd->add_flag("--attack-include-normal-mixup", di.attack_include_normal_mixup);
    distill_cmd->add_flag("--loss-include-all", di.loss_include_all);
    distill_cmd->add_option("--aug-level", di.aug_level)
        ->check(CLI::IsMember({"none", "minimal", "standard"}));
    distill_cmd->add_option("--rand-n", di.rand_n);
    distill_cmd->add_option("--rand-m", di.rand_m);
    distill_cmd->add_option("--pad", di.pad);
    distill_cmd->add_option("--p-flip", di.p_flip);
    distill_cmd->add_option("--p-invert", di.p_invert);
    distill_cmd->add_option("--elastic-alpha", di.elastic_alpha);
    distill_cmd->add_option("--elastic-sigma", di.elastic_sigma);
    distill_cmd->add_flag("--attack-stats", di.attack_stats, "append per-batch attack_stats.csv");
    distill_cmd->add_flag("--dump-pairs", di.dump_pairs_flag, "write boundary-pair PNGs");

    EvalCmd ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "checkpoint accuracy on a dataset split");
    eval_cmd->add_option("--model", ev.model, "checkpoint path")->required();
    eval_cmd->add_option("--data", ev.data, "task directory")->required();
    eval_cmd->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test"}));

    AttackVizCmd av;
    CLI::App* viz_cmd = app.add_subcommand("attack-viz", "dump boundary pairs as PNGs");
    viz_cmd->add_option("--teacher", av.teacher, "teacher checkpoint")->required();
    viz_cmd->add_option("--corpus", av.corpus, "corpus directory")->required();
    viz_cmd->add_option("--manifest", av.manifest, "kd_manifest.tsv path")->required();
    viz_cmd->add_option("--out", av.out, "output directory")->required();
    viz_cmd->add_option("--count", av.count)->check(CLI::PositiveNumber);
    viz_cmd->add_option("--seed", av.seed);
    viz_cmd->add_option("--attack-eps", av.attack_eps);
    viz_cmd->add_option("--attack-alpha0", av.attack_alpha0);
    viz_cmd->add_option("--attack-iters", av.attack_iters)->check(CLI::PositiveNumber);
    viz_cmd->add_option("--softmax-threshold", av.softmax_threshold);
    viz_cmd->add_flag("--pgd-init", av.pgd_init);
    viz_cmd->add_flag("--no-filters", av.no_filters);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2; // usage errors are distinct from runtime failures
    }

    try {
        if (paper_scale) {
            if (!tt_epochs->count()) tt.epochs = 400;
            if (!tt_batch->count()) tt.batch = 256;
            if (!tt_lr->count()) tt.lr0 = 0.1f;
        }
        if (gen_corpus->parsed()) return run_gen_corpus(gc);
        if (gen_task->parsed()) return run_gen_task(gt);
        if (train_cmd->parsed()) return run_train_teacher(tt);
        if (curate_cmd->parsed()) return run_curate(cu);
        if (distill_cmd->parsed()) return run_distill(di);
        if (eval_cmd->parsed()) return run_eval(ev);
        if (viz_cmd->parsed()) return run_attack_viz(av);
    } catch (const std::exception& e) {
        std::cerr << "bdkd: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
