#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <utility>

#include "bdkd/boundary.hpp"
#include "bdkd/common.hpp"
#include "bdkd/curate.hpp"
#include "bdkd/distill.hpp"
#include "bdkd/geoshapes.hpp"
#include "doctest.h"

using namespace bdkd;

namespace {

Model small_conv(const std::vector<int>& in_shape, int classes, std::uint64_t seed) {
    Rng rng(seed);
    return Model(in_shape,
                 {Conv2dSpec{8, 3, 1, 1}, BatchNorm2dSpec{8}, ReluSpec{}, MaxPool2dSpec{2, 2},
                  GlobalAvgPoolSpec{}, FlattenSpec{}, DenseSpec{classes}},
                 rng);
}

bool same_params(const Model& a, const Model& b) {
    if (a.params().size() != b.params().size()) return false;
    for (const auto& [name, tensor] : a.params()) {
        auto it = b.params().find(name);
        if (it == b.params().end() || tensor.data != it->second.data) return false;
    }
    return true;
}

// Ignores batchnorm running statistics, which move on any train-mode forward.
bool same_trainable(const Model& a, const Model& b) {
    for (const std::string& name : a.trainable_names())
        if (a.param(name).data != b.param(name).data) return false;
    return true;
}

std::vector<Tensor> random_images(int n, const std::vector<int>& shape, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> images;
    for (int i = 0; i < n; ++i) {
        Tensor t(shape);
        for (float& v : t.data) v = static_cast<float>(rng.uniform());
        images.push_back(std::move(t));
    }
    return images;
}

// A teacher plus a curated set it can actually be attacked against. The
// teacher reads out the first four pixels directly, so predictions on random
// images spread evenly across the classes (a fresh conv net tends to predict
// one class for everything, starving the complement pools) and attacks on
// close pixel pairs genuinely cross the boundary.
struct DistillFixture {
    Model teacher;
    KdDataset kd;
    LabeledDataset eval_set;
};

DistillFixture make_fixture(std::uint64_t seed) {
    DistillFixture f{Model({3, 8, 8}, {FlattenSpec{}, DenseSpec{4}}), {}, {}};
    Tensor& w = f.teacher.param("layer1.weight"); // [4, 192], zero-initialized
    for (int c = 0; c < 4; ++c) w.data[static_cast<std::size_t>(c * 192 + c)] = 4.0f;
    f.teacher.set_mode(Mode::eval);
    std::vector<Tensor> corpus = random_images(40, {3, 8, 8}, seed + 1);
    std::vector<int> preds = predict_all(f.teacher, corpus, 16);
    Rng rng(seed + 2);
    f.kd = build_kd_dataset(corpus, preds, 4, {3, 3, 3, 3}, rng, /*allow_fallback=*/true);
    f.eval_set.images = random_images(12, {3, 8, 8}, seed + 3);
    for (int i = 0; i < 12; ++i) f.eval_set.labels.push_back(i % 4);
    f.eval_set.num_classes = 4;
    return f;
}

// Zero-weight dense head (the uninitialized constructor zero-fills): every
// logit is 0, every prediction is class 0, and no perturbation can move it.
Model frozen_teacher(int classes) {
    Model m({3, 4, 4}, {FlattenSpec{}, DenseSpec{classes}});
    m.set_mode(Mode::eval);
    return m;
}

} // namespace

TEST_CASE("train_teacher with zero epochs returns the model untouched") {
    GeoshapesSplits splits = generate_geoshapes(5, 3, 1, 1);
    Model model = small_conv({3, 32, 32}, 10, 21);
    TrainConfig cfg;
    cfg.epochs = 0;
    Rng rng(9);
    Model out = train_teacher(splits.train, model, cfg, rng);
    CHECK(same_params(model, out));
    CHECK(out.mode() == Mode::eval); // ready for evaluate() like any trained result
}

TEST_CASE("train_teacher rejects bad inputs") {
    Model model = small_conv({3, 32, 32}, 10, 21);
    TrainConfig cfg;
    Rng rng(9);

    LabeledDataset empty;
    empty.num_classes = 10;
    CHECK_THROWS_WITH(train_teacher(empty, model, cfg, rng), doctest::Contains("empty"));

    GeoshapesSplits splits = generate_geoshapes(5, 2, 1, 1);
    LabeledDataset wrong = splits.train;
    wrong.num_classes = 7;
    CHECK_THROWS_WITH(train_teacher(wrong, model, cfg, rng), doctest::Contains("class count"));

    LabeledDataset bad_label = splits.train;
    bad_label.labels[0] = 10;
    CHECK_THROWS_WITH(train_teacher(bad_label, model, cfg, rng),
                      doctest::Contains("label out of range"));

    TrainConfig bad_batch = cfg;
    bad_batch.batch_size = 0;
    CHECK_THROWS_WITH(train_teacher(splits.train, model, bad_batch, rng),
                      doctest::Contains("batch_size"));
}

TEST_CASE("a fresh classifier starts near the uniform cross-entropy") {
    GeoshapesSplits splits = generate_geoshapes(7, 6, 1, 1);
    Model model = small_conv({3, 32, 32}, 10, 33);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.lr0 = 0.0f; // measure without moving the weights
    cfg.batch_size = 16;
    Rng rng(13);
    std::vector<MetricsRow> metrics;
    Model out = train_teacher(splits.train, model, cfg, rng, &metrics);

    REQUIRE(metrics.size() == 1);
    CHECK(metrics[0].epoch == 0);
    CHECK(metrics[0].train_loss == doctest::Approx(std::log(10.0)).epsilon(0.25));
    CHECK(metrics[0].lr == 0.0);
    CHECK(metrics[0].eval_accuracy >= 0.0);
    CHECK(metrics[0].eval_accuracy <= 1.0);
    CHECK(metrics[0].wall_seconds >= 0.0);
    CHECK(same_trainable(model, out)); // lr 0 freezes every trainable parameter
    CHECK(out.mode() == Mode::eval);
}

// Striped vs solid at matched mean brightness: the class signal is spatial
// frequency, which survives the training augmentations (crops, flips, small
// rotations, and the value remaps all preserve it).
LabeledDataset stripes_or_solid(int per_class, std::uint64_t seed) {
    Rng rng(seed);
    LabeledDataset ds;
    ds.num_classes = 2;
    for (int label = 0; label < 2; ++label) {
        for (int i = 0; i < per_class; ++i) {
            Tensor img({3, 32, 32});
            int phase = rng.uniform_int(4);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < 32; ++y)
                    for (int x = 0; x < 32; ++x) {
                        float base = label == 1 ? (((x + phase) % 4 < 2) ? 0.75f : 0.25f) : 0.5f;
                        img.at(c, y, x) = base + static_cast<float>(rng.uniform(-0.03, 0.03));
                    }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(label);
        }
    }
    return ds;
}

TEST_CASE("train_teacher learns a separable task well above chance") {
    LabeledDataset train = stripes_or_solid(30, 11);
    LabeledDataset test = stripes_or_solid(10, 12);
    Model model = small_conv({3, 32, 32}, 2, 40);
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.batch_size = 16;
    cfg.lr0 = 0.1f;
    Rng rng(17);
    std::vector<MetricsRow> metrics;
    Model out = train_teacher(train, model, cfg, rng, &metrics);

    REQUIRE(metrics.size() == 12);
    double test_acc = evaluate(out, test);
    CHECK(test_acc > 0.8); // chance is 0.50
}

TEST_CASE("evaluate counts argmax matches against the labels") {
    // identity readout of the first four pixels: prediction = brightest pixel
    Model m({3, 2, 2}, {FlattenSpec{}, DenseSpec{4}});
    Tensor& w = m.param("layer1.weight");
    std::fill(w.data.begin(), w.data.end(), 0.0f);
    for (int c = 0; c < 4; ++c) w.data[static_cast<std::size_t>(c * 12 + c)] = 1.0f;
    m.set_mode(Mode::eval);

    LabeledDataset ds;
    ds.num_classes = 4;
    Rng rng(3);
    int expected_correct = 0;
    for (int i = 0; i < 50; ++i) {
        Tensor img({3, 2, 2});
        for (float& v : img.data) v = static_cast<float>(rng.uniform());
        int brightest = 0;
        for (int c = 1; c < 4; ++c)
            if (img.data[static_cast<std::size_t>(c)] > img.data[static_cast<std::size_t>(brightest)])
                brightest = c;
        int label = i % 4;
        if (label == brightest) ++expected_correct;
        ds.images.push_back(std::move(img));
        ds.labels.push_back(label);
    }
    CHECK(evaluate(m, ds) == doctest::Approx(expected_correct / 50.0));
    CHECK(evaluate(m, ds) == evaluate(m, ds)); // deterministic

    Model constant = frozen_teacher(4);
    // all logits tie, argmax resolves to class 0
    int zeros = 0;
    for (int y : ds.labels)
        if (y == 0) ++zeros;
    LabeledDataset flat = ds;
    for (auto& img : flat.images) img = Tensor({3, 4, 4});
    CHECK(evaluate(constant, flat) == doctest::Approx(zeros / 50.0));

    LabeledDataset empty;
    CHECK_THROWS_WITH(evaluate(m, empty), doctest::Contains("empty"));
    m.set_mode(Mode::train);
    CHECK_THROWS_WITH(evaluate(m, ds), doctest::Contains("eval mode"));
}

TEST_CASE("distill with zero epochs copies the student verbatim") {
    DistillFixture f = make_fixture(50);
    Model student = small_conv({3, 8, 8}, 4, 51);
    TrainConfig cfg;
    cfg.epochs = 0;
    Rng rng(1);
    DistillOutputs out;
    Model result = distill(f.teacher, student, f.kd, cfg, {}, {}, {}, rng, {}, &out);
    CHECK(same_params(student, result));
    CHECK(out.metrics.empty());
    CHECK(out.skipped_batches == 0);
}

TEST_CASE("distill validates its contract") {
    DistillFixture f = make_fixture(50);
    Model student = small_conv({3, 8, 8}, 4, 51);
    TrainConfig cfg;
    cfg.epochs = 1;
    Rng rng(1);

    Model hot = f.teacher;
    hot.set_mode(Mode::train);
    CHECK_THROWS_WITH(distill(hot, student, f.kd, cfg, {}, {}, {}, rng),
                      doctest::Contains("eval mode"));

    KdDataset empty;
    empty.num_classes = 4;
    CHECK_THROWS_WITH(distill(f.teacher, student, empty, cfg, {}, {}, {}, rng),
                      doctest::Contains("empty"));

    TrainConfig tiny = cfg;
    tiny.batch_size = 1;
    CHECK_THROWS_WITH(distill(f.teacher, student, f.kd, tiny, {}, {}, {}, rng),
                      doctest::Contains("batch_size"));

    TrainConfig cold = cfg;
    cold.tau = 0.0f;
    CHECK_THROWS_WITH(distill(f.teacher, student, f.kd, cold, {}, {}, {}, rng),
                      doctest::Contains("tau"));

    KdDataset wrong = f.kd;
    wrong.num_classes = 3;
    CHECK_THROWS_WITH(distill(f.teacher, student, wrong, cfg, {}, {}, {}, rng),
                      doctest::Contains("class count"));
}

TEST_CASE("one epoch of distillation trains the student and leaves the teacher alone") {
    DistillFixture f = make_fixture(60);
    Model teacher_before = f.teacher;
    Model student = small_conv({3, 8, 8}, 4, 61);

    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.lr0 = 0.05f;
    cfg.loss_on_all_example_kinds = true; // guarantees a non-empty training batch
    AugmentConfig aug;
    AttackConfig atk;
    DeeperConfig deep;
    DistillOptions opts;
    opts.eval_set = &f.eval_set;

    Rng rng(7);
    DistillOutputs out;
    Model result = distill(f.teacher, student, f.kd, cfg, aug, atk, deep, rng, opts, &out);

    CHECK(same_params(f.teacher, teacher_before)); // frozen teacher, bitwise
    CHECK_FALSE(same_params(student, result));
    REQUIRE(out.metrics.size() == 1);
    CHECK(out.metrics[0].epoch == 0);
    CHECK(std::isfinite(out.metrics[0].train_loss));
    CHECK(out.metrics[0].train_loss >= 0.0);
    CHECK(out.metrics[0].lr == doctest::Approx(0.05));
    CHECK(out.metrics[0].attack_success_rate >= 0.0);
    CHECK(out.metrics[0].attack_success_rate <= 1.0);
    CHECK(out.metrics[0].eval_accuracy >= 0.0);
    CHECK(out.metrics[0].eval_accuracy <= 1.0);
    CHECK(result.mode() == Mode::eval);
}

TEST_CASE("distillation is reproducible from the seed") {
    DistillFixture f = make_fixture(70);
    Model student = small_conv({3, 8, 8}, 4, 71);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.lr0 = 0.05f;
    cfg.loss_on_all_example_kinds = true;

    auto run = [&](std::uint64_t seed) {
        Rng rng(seed);
        DistillOutputs out;
        Model m = distill(f.teacher, student, f.kd, cfg, {}, {}, {}, rng, {}, &out);
        return std::pair<Model, double>(std::move(m), out.metrics[0].train_loss);
    };
    auto [model_a, loss_a] = run(7);
    auto [model_b, loss_b] = run(7);
    auto [model_c, loss_c] = run(8);
    CHECK(same_params(model_a, model_b));
    CHECK(loss_a == loss_b);
    CHECK_FALSE(same_params(model_a, model_c));
}

TEST_CASE("without the attack the batch passes straight through to KD") {
    DistillFixture f = make_fixture(80);
    Model student = small_conv({3, 8, 8}, 4, 81);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.lr0 = 0.05f;
    cfg.use_border_attack = false;
    AugmentConfig aug;
    aug.level = AugmentLevel::none;
    aug.mixup_enabled = false;

    Rng rng(7);
    DistillOutputs out;
    Model result = distill(f.teacher, student, f.kd, cfg, aug, {}, {}, rng, {}, &out);
    CHECK_FALSE(same_params(student, result));
    CHECK(out.skipped_batches == 0);
    CHECK(out.metrics[0].attack_success_rate == 0.0); // nothing was attempted
}

TEST_CASE("an immovable teacher starves every batch and the student never moves") {
    Model teacher = frozen_teacher(3);
    Model student = small_conv({3, 4, 4}, 3, 91);

    KdDataset kd;
    kd.num_classes = 3;
    kd.per_class_count = {0, 6, 6};
    Rng img_rng(5);
    for (int i = 0; i < 12; ++i) {
        Example ex;
        ex.image = Tensor({3, 4, 4});
        for (float& v : ex.image.data) v = static_cast<float>(img_rng.uniform());
        ex.target = 1 + i % 2; // teacher predicts 0 everywhere, so never the target
        ex.provenance = i;
        ex.teacher_pred = 0;
        kd.examples.push_back(std::move(ex));
    }

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8; // chunks of 8 and 4 per epoch
    AugmentConfig aug;
    aug.level = AugmentLevel::none; // keep images exactly as constructed

    LabeledDataset eval_set;
    eval_set.num_classes = 3;
    for (int i = 0; i < 6; ++i) {
        eval_set.images.push_back(kd.examples[static_cast<std::size_t>(i)].image);
        eval_set.labels.push_back(i % 3);
    }
    DistillOptions opts;
    opts.eval_set = &eval_set;

    Rng rng(7);
    DistillOutputs out;
    Model result = distill(teacher, student, kd, cfg, aug, {}, {}, rng, opts, &out);

    CHECK(out.skipped_batches == 4); // every chunk of both epochs
    CHECK(same_params(student, result));
    REQUIRE(out.metrics.size() == 2);
    CHECK(out.metrics[0].train_loss == 0.0);
    CHECK(out.metrics[0].attack_success_rate == 0.0);

    // the reported accuracy matches evaluating the (unmoved) student directly
    Model ref = student;
    ref.set_mode(Mode::eval);
    CHECK(out.metrics[1].eval_accuracy == doctest::Approx(evaluate(ref, eval_set)));
}

TEST_CASE("run_trials hashes the seeds and aggregates the accuracies") {
    std::vector<std::uint64_t> received;
    std::vector<double> canned = {0.5, 0.7, 0.9};
    TrialStats stats = run_trials({1, 2, 3}, [&](std::uint64_t seed) {
        received.push_back(seed);
        return canned[received.size() - 1];
    });

    REQUIRE(received.size() == 3);
    CHECK(received[0] == mix_seed_md5(1));
    CHECK(received[1] == mix_seed_md5(2));
    CHECK(received[2] == mix_seed_md5(3));
    CHECK(received[0] != 1); // the raw seed is never handed through
    CHECK(stats.accuracies == canned);
    CHECK(stats.mean == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(stats.stddev == doctest::Approx(0.2).epsilon(1e-9));

    TrialStats single = run_trials({42}, [](std::uint64_t) { return 0.8; });
    CHECK(single.mean == doctest::Approx(0.8));
    CHECK(single.stddev == 0.0);

    TrialStats flat = run_trials({1, 2}, [](std::uint64_t) { return 0.6; });
    CHECK(flat.stddev == doctest::Approx(0.0));

    CHECK_THROWS_WITH(run_trials({}, [](std::uint64_t) { return 0.0; }),
                      doctest::Contains("seed"));
}

TEST_CASE("metrics CSV has a header and one row per epoch") {
    std::filesystem::path path = std::filesystem::temp_directory_path() / "bdkd_metrics_test.csv";
    std::vector<MetricsRow> rows = {{0, 2.302585, 0.1, 0.05, 0.75, 1.5},
                                    {1, 1.234567, 0.52, 0.025, 0.8125, 1.25}};
    write_metrics_csv(path.string(), rows);

    std::ifstream f(path);
    REQUIRE(f.good());
    std::string line;
    std::getline(f, line);
    CHECK(line == "epoch,train_loss,eval_accuracy,lr,attack_success_rate,wall_seconds");
    std::getline(f, line);
    CHECK(line == "0,2.302585,0.100000,0.050000,0.750000,1.500");
    std::getline(f, line);
    CHECK(line == "1,1.234567,0.520000,0.025000,0.812500,1.250");
    CHECK_FALSE(std::getline(f, line));
    std::filesystem::remove(path);
}
