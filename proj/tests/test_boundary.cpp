#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "attack_reference.hpp"
#include "bdkd/boundary.hpp"
#include "bdkd/common.hpp"
#include "bdkd/model.hpp"
#include "bdkd/png_io.hpp"
#include "doctest.h"

using namespace bdkd;

namespace {

// 2-class logistic teacher over a [3,2,2] input: logits = (w.x + b, 0).
// Only the first four weights are populated, so channels 1 and 2 carry zero
// gradient and must stay untouched by every attack step.
constexpr int kPixels = 12;

Model logistic_teacher(const std::vector<double>& w, double bias) {
    Rng rng(1);
    Model m({3, 2, 2}, {FlattenSpec{}, DenseSpec{2}}, rng);
    Tensor& weight = m.param("layer1.weight"); // [2, 12]
    weight.data.assign(weight.data.size(), 0.0f);
    for (int i = 0; i < kPixels; ++i) weight.data[static_cast<std::size_t>(i)] = static_cast<float>(w[static_cast<std::size_t>(i)]);
    Tensor& b = m.param("layer1.bias");
    b.data = {static_cast<float>(bias), 0.0f};
    m.set_mode(Mode::eval);
    return m;
}

std::vector<double> spread_weights() {
    std::vector<double> w(kPixels, 0.0);
    w[0] = 30.0;
    w[1] = -20.0;
    w[2] = 25.0;
    w[3] = 15.0;
    return w;
}

std::vector<float> base_pixels() {
    std::vector<float> x(kPixels, 0.5f);
    x[0] = 0.2f;
    x[1] = 0.7f;
    x[2] = 0.4f;
    x[3] = 0.9f;
    return x;
}

Tensor image_of(const std::vector<float>& px) {
    Tensor t({3, 2, 2});
    t.data = px;
    return t;
}

attack_reference::Config mirror_config(const AttackConfig& cfg) {
    attack_reference::Config ref;
    ref.epsilon = cfg.epsilon;
    ref.alpha0 = cfg.alpha0;
    ref.max_iters = cfg.max_iters;
    ref.softmax_threshold = cfg.softmax_threshold;
    ref.bold_up = cfg.bold_up;
    ref.bold_down = cfg.bold_down;
    ref.alpha_min = cfg.alpha_min;
    return ref;
}

} // namespace

TEST_CASE("bim_step follows the hand-computed cross-entropy gradient") {
    std::vector<double> w(kPixels, 0.0);
    w[0] = 3.0;
    Model teacher = logistic_teacher(w, 0.0);
    std::vector<float> px(kPixels, 0.5f);
    const Tensor x0 = image_of(px);

    // target class 1: d CE/dx = w * p0 with p0 > 0, so pixel 0 moves down by
    // exactly alpha/255 while all zero-weight pixels stay put
    const Tensor stepped = bim_step(teacher, x0, 1, 2.0f, x0, 10.0f);
    CHECK(stepped.data[0] == 0.5f - (2.0f / 255.0f) * 1.0f);
    for (int i = 1; i < kPixels; ++i) CHECK(stepped.data[static_cast<std::size_t>(i)] == 0.5f);

    // target class 0 pushes the same pixel the other way
    const Tensor up = bim_step(teacher, x0, 0, 2.0f, x0, 10.0f);
    CHECK(up.data[0] == 0.5f + (2.0f / 255.0f) * 1.0f);
}

TEST_CASE("bim_step with a zero gradient returns the input unchanged") {
    Model teacher = logistic_teacher(std::vector<double>(kPixels, 0.0), 0.0);
    const Tensor x0 = image_of(base_pixels());
    CHECK(bim_step(teacher, x0, 1, 4.0f, x0, 10.0f).data == x0.data);
}

TEST_CASE("chained bim steps never escape the epsilon ball or pixel range") {
    Rng rng(9);
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x0({3, 2, 2});
        for (float& v : x0.data) v = static_cast<float>(rng.uniform());
        Tensor x = x0;
        for (int step = 0; step < 5; ++step) {
            x = bim_step(teacher, x, rng.uniform_int(2), 8.0f, x0, 8.0f);
            for (std::size_t i = 0; i < x.data.size(); ++i) {
                CHECK(std::abs(x.data[i] - x0.data[i]) <= 8.0f / 255.0f + 1e-6f);
                CHECK(x.data[i] >= 0.0f);
                CHECK(x.data[i] <= 1.0f);
            }
        }
    }
}

TEST_CASE("border_attack matches the scalar reference trace on a crossing run") {
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    const std::vector<float> px = base_pixels();
    AttackConfig cfg; // defaults: eps 10, alpha0 1, 12 iters, threshold 0.95
    Rng rng(2);

    const BorderResult lib = border_attack(teacher, image_of(px), 1, cfg, rng);
    const attack_reference::Result ref = attack_reference::run(
        {spread_weights(), -14.0}, px, 1, mirror_config(cfg));

    REQUIRE(ref.pair.has_value());
    REQUIRE(lib.pair.has_value());
    CHECK(lib.pair->pre.data == ref.pair->pre);
    CHECK(lib.pair->post.data == ref.pair->post);
    CHECK(lib.pair->pre_pred == ref.pair->pre_pred);
    CHECK(lib.pair->post_pred == ref.pair->post_pred);
    CHECK(lib.pair->pre_conf == doctest::Approx(ref.pair->pre_conf).epsilon(1e-4));
    CHECK(lib.pair->post_conf == doctest::Approx(ref.pair->post_conf).epsilon(1e-4));
    CHECK(lib.pair->iterations == ref.pair->iterations);
    CHECK(lib.pair->alpha_final == ref.pair->alpha_final);

    // the designed trajectory accelerates three times and then crosses
    CHECK(ref.pair->iterations == 4);
    CHECK(std::string(ref.case_trace.begin(), ref.case_trace.end()) == "aaad");
    CHECK(lib.pair->target == 1);
    CHECK(lib.pair->post_pred == 1);
    CHECK(lib.pair->pre_pred != 1);
}

TEST_CASE("border_attack matches the reference when Bold Driver reverts kick in") {
    // a tight confidence ceiling forces overshoot handling and a retreat
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    const std::vector<float> px = base_pixels();
    AttackConfig cfg;
    cfg.softmax_threshold = 0.52f;
    Rng rng(3);

    const BorderResult lib = border_attack(teacher, image_of(px), 1, cfg, rng);
    const attack_reference::Result ref = attack_reference::run(
        {spread_weights(), -14.0}, px, 1, mirror_config(cfg));

    const std::string cases(ref.case_trace.begin(), ref.case_trace.end());
    INFO("reference case trace: ", cases);
    CHECK(cases.find('b') != std::string::npos);
    CHECK(cases.find('c') != std::string::npos);
    for (float a : ref.alpha_trace) {
        CHECK(a >= cfg.alpha_min);
        CHECK(a <= cfg.epsilon);
    }

    REQUIRE(lib.pair.has_value() == ref.pair.has_value());
    if (ref.pair) {
        CHECK(lib.pair->pre.data == ref.pair->pre);
        CHECK(lib.pair->post.data == ref.pair->post);
        CHECK(lib.pair->iterations == ref.pair->iterations);
        CHECK(lib.pair->alpha_final == ref.pair->alpha_final);
    }
}

TEST_CASE("border_attack skips examples the teacher already assigns the target") {
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    AttackConfig cfg;
    Rng rng(4);
    // logit0 = +1.5 here, so class 0 is already predicted
    const BorderResult res = border_attack(teacher, image_of(base_pixels()), 0, cfg, rng);
    CHECK(res.skipped);
    CHECK_FALSE(res.pair.has_value());
    CHECK_FALSE(res.last_pair.has_value());

    const attack_reference::Result ref = attack_reference::run(
        {spread_weights(), -14.0}, base_pixels(), 0, mirror_config(cfg));
    CHECK(ref.skipped);
}

TEST_CASE("border_attack exhausts the budget when the boundary is out of reach") {
    // small weights: 12 iterations of eps=10 movement cannot flip a +2.2 logit
    std::vector<double> w(kPixels, 0.0);
    w[0] = 2.0;
    w[1] = -1.5;
    w[2] = 1.0;
    w[3] = 0.5;
    Model teacher = logistic_teacher(w, 2.0);
    const std::vector<float> px = base_pixels();
    AttackConfig cfg;
    Rng rng(5);

    const BorderResult lib = border_attack(teacher, image_of(px), 1, cfg, rng);
    const attack_reference::Result ref =
        attack_reference::run({w, 2.0}, px, 1, mirror_config(cfg));

    CHECK_FALSE(ref.skipped);
    CHECK_FALSE(ref.pair.has_value());
    CHECK(std::string(ref.case_trace.begin(), ref.case_trace.end()) == "aaaaaaaaaaaa");

    CHECK_FALSE(lib.skipped);
    CHECK_FALSE(lib.pair.has_value());
    REQUIRE(lib.last_pair.has_value());
    CHECK(lib.iterations == cfg.max_iters);

    // rebuild the full trajectory with reference arithmetic and compare the
    // final two iterates exposed for filter-free consumers
    std::vector<float> cur = px;
    std::vector<float> prev = px;
    const std::vector<float> sign = attack_reference::step_sign({w, 2.0}, 1);
    for (std::size_t k = 0; k < ref.alpha_trace.size(); ++k) {
        prev = cur;
        cur = attack_reference::apply_step(cur, sign, ref.alpha_trace[k], px, cfg.epsilon);
    }
    CHECK(lib.last_pair->post.data == cur);
    CHECK(lib.last_pair->pre.data == prev);
}

TEST_CASE("constant-logit teacher cannot be attacked toward class 1") {
    Model teacher = logistic_teacher(std::vector<double>(kPixels, 0.0), 0.0);
    AttackConfig cfg;
    Rng rng(6);
    const BorderResult res = border_attack(teacher, image_of(base_pixels()), 1, cfg, rng);
    CHECK_FALSE(res.skipped); // argmax is 0 by tie-break, so the attack runs
    CHECK_FALSE(res.pair.has_value());
    REQUIRE(res.last_pair.has_value());
    CHECK(res.last_pair->post.data == base_pixels()); // zero gradient moves nothing
    CHECK(res.iterations == cfg.max_iters);
}

TEST_CASE("pgd initialization stays in the ball and is seed-deterministic") {
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    AttackConfig cfg;
    cfg.pgd_init = true;
    Rng a(7), b(7), c(8);
    const BorderResult ra = border_attack(teacher, image_of(base_pixels()), 1, cfg, a);
    const BorderResult rb = border_attack(teacher, image_of(base_pixels()), 1, cfg, b);
    const BorderResult rc = border_attack(teacher, image_of(base_pixels()), 1, cfg, c);
    REQUIRE(ra.pair.has_value() == rb.pair.has_value());
    if (ra.pair) {
        CHECK(ra.pair->pre.data == rb.pair->pre.data);
        CHECK(ra.pair->post.data == rb.pair->post.data);
        for (std::size_t i = 0; i < ra.pair->post.data.size(); ++i) {
            CHECK(std::abs(ra.pair->post.data[i] - base_pixels()[i]) <=
                  cfg.epsilon / 255.0f + 1e-6f);
        }
    }
    // different seed, different random start
    const Tensor& pa = ra.pair ? ra.pair->post : ra.last_pair->post;
    const Tensor& pc = rc.pair ? rc.pair->post : rc.last_pair->post;
    CHECK(pa.data != pc.data);

    // the skip check still runs on the clean image
    Rng d(9);
    CHECK(border_attack(teacher, image_of(base_pixels()), 0, cfg, d).skipped);
}

TEST_CASE("filter_pairs re-verifies pairs against the teacher") {
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    AttackConfig cfg;
    Rng rng(10);
    const BorderResult good = border_attack(teacher, image_of(base_pixels()), 1, cfg, rng);
    REQUIRE(good.pair.has_value());

    // post overwritten with an image deep inside class 1 (conf ~ 1 > 0.95)
    BoundaryPair too_deep = *good.pair;
    std::vector<float> deep(kPixels, 0.0f);
    deep[1] = 1.0f;
    too_deep.post = image_of(deep);

    // post overwritten with an image still classified as class 0
    BoundaryPair wrong_side = *good.pair;
    wrong_side.post = image_of(base_pixels());

    PairFilterReport report;
    const auto kept = filter_pairs(
        teacher, {good.pair, std::nullopt, too_deep, wrong_side}, cfg, &report);
    CHECK(report.attempted == 4);
    CHECK(report.failed == 3);
    CHECK(report.kept == 1);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].post.data == good.pair->post.data);

    // idempotence: filtering the survivors again keeps them all
    PairFilterReport again;
    std::vector<std::optional<BoundaryPair>> survivors(kept.begin(), kept.end());
    const auto kept2 = filter_pairs(teacher, survivors, cfg, &again);
    CHECK(again.kept == 1);
    CHECK(kept2[0].post.data == kept[0].post.data);
}

TEST_CASE("deeper_attack raises confidence and respects its own small ball") {
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    AttackConfig cfg;
    Rng rng(11);
    const BorderResult res = border_attack(teacher, image_of(base_pixels()), 1, cfg, rng);
    REQUIRE(res.pair.has_value());

    DeeperConfig deep; // eps = alpha = 1, single step
    const auto [deeper_pre, deeper_post] = deeper_attack(teacher, *res.pair, deep);

    const attack_reference::Logistic ref{spread_weights(), -14.0};
    CHECK(attack_reference::decide(ref, deeper_pre.data).conf >
          attack_reference::decide(ref, res.pair->pre.data).conf);
    CHECK(attack_reference::decide(ref, deeper_post.data).conf >
          attack_reference::decide(ref, res.pair->post.data).conf);
    // classes must not change: the push goes deeper into the same region
    CHECK(attack_reference::decide(ref, deeper_pre.data).pred == res.pair->pre_pred);
    CHECK(attack_reference::decide(ref, deeper_post.data).pred == res.pair->post_pred);
    for (std::size_t i = 0; i < deeper_pre.data.size(); ++i) {
        CHECK(std::abs(deeper_pre.data[i] - res.pair->pre.data[i]) <= 1.0f / 255.0f + 1e-6f);
        CHECK(std::abs(deeper_post.data[i] - res.pair->post.data[i]) <= 1.0f / 255.0f + 1e-6f);
    }
}

TEST_CASE("deeper_attack on a constant-logit teacher is a no-op") {
    Model teacher = logistic_teacher(std::vector<double>(kPixels, 0.0), 0.0);
    BoundaryPair pair;
    pair.pre = image_of(base_pixels());
    pair.post = image_of(base_pixels());
    pair.pre_pred = 0;
    pair.post_pred = 0;
    DeeperConfig deep;
    const auto [dpre, dpost] = deeper_attack(teacher, pair, deep);
    CHECK(dpre.data == pair.pre.data);
    CHECK(dpost.data == pair.post.data);
}

namespace {

// Shared batch for the attack_batch cases: one skip (already the target),
// one success, one immovable failure.
std::vector<Example> mixed_outcome_batch() {
    std::vector<Example> batch(3);
    batch[0].image = image_of(base_pixels());
    batch[0].target = 0; // logit0 is +1.5: already predicted, must be skipped
    batch[1].image = image_of(base_pixels());
    batch[1].target = 1; // crosses in 4 iterations
    std::vector<float> stuck(kPixels, 0.5f);
    stuck[0] = 0.9f;
    stuck[1] = 0.05f;
    stuck[2] = 0.9f;
    stuck[3] = 0.9f;
    batch[2].image = image_of(stuck);
    batch[2].target = 1; // logit0 is +34: unreachable within the budget
    return batch;
}

} // namespace

TEST_CASE("attack_batch accounting and assembly with default flags") {
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    AttackConfig cfg;
    DeeperConfig deep;
    AttackBatchFlags flags;
    Rng rng(12);
    const AttackOutput out = attack_batch(teacher, mixed_outcome_batch(), cfg, deep, flags, rng);

    CHECK(out.stats.attempted == 3);
    CHECK(out.stats.skipped == 1);
    CHECK(out.stats.failed == 1);
    CHECK(out.stats.kept == 1);
    CHECK(out.stats.skipped + out.stats.failed + out.stats.kept == out.stats.attempted);
    REQUIRE(out.kept_pairs.size() == 1);
    CHECK(out.stats.mean_iters == doctest::Approx(out.kept_pairs[0].iterations));
    CHECK(out.stats.mean_alpha_final == doctest::Approx(out.kept_pairs[0].alpha_final));

    // assembly: pre, post, deeper_pre, deeper_post for the single survivor
    REQUIRE(out.images.size() == 4);
    CHECK(out.images[0].data == out.kept_pairs[0].pre.data);
    CHECK(out.images[1].data == out.kept_pairs[0].post.data);
    REQUIRE(out.deeper.size() == 1);
    CHECK(out.images[2].data == out.deeper[0].first.data);
    CHECK(out.images[3].data == out.deeper[0].second.data);
    for (int t : out.targets) CHECK(t == 1);
}

TEST_CASE("attack_batch honors each assembly flag") {
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    AttackConfig cfg;
    DeeperConfig deep;
    const auto batch = mixed_outcome_batch();

    AttackBatchFlags no_pre;
    no_pre.use_pre_success = false;
    Rng r1(13);
    const AttackOutput a = attack_batch(teacher, batch, cfg, deep, no_pre, r1);
    CHECK(a.images.size() == 2); // post and deeper_post only

    AttackBatchFlags no_deeper;
    no_deeper.use_deeper_attack = false;
    Rng r2(13);
    const AttackOutput b = attack_batch(teacher, batch, cfg, deep, no_deeper, r2);
    CHECK(b.images.size() == 2); // pre and post only
    CHECK(b.deeper.empty());

    AttackBatchFlags with_inputs;
    with_inputs.include_inputs = true;
    Rng r3(13);
    const AttackOutput c = attack_batch(teacher, batch, cfg, deep, with_inputs, r3);
    REQUIRE(c.images.size() == 7); // 4 adversarial + the 3 raw inputs
    for (int i = 0; i < 3; ++i) {
        CHECK(c.images[static_cast<std::size_t>(4 + i)].data ==
              batch[static_cast<std::size_t>(i)].image.data);
        CHECK(c.targets[static_cast<std::size_t>(4 + i)] ==
              batch[static_cast<std::size_t>(i)].target);
    }

    AttackBatchFlags no_attack;
    no_attack.use_border_attack = false;
    Rng r4(13);
    const AttackOutput d = attack_batch(teacher, batch, cfg, deep, no_attack, r4);
    REQUIRE(d.images.size() == 3); // passthrough
    CHECK(d.images[0].data == batch[0].image.data);
    CHECK(d.stats.attempted == 0);
    CHECK(d.stats.kept == 0);

    AttackBatchFlags no_filters;
    no_filters.use_filters = false;
    Rng r5(13);
    const AttackOutput e = attack_batch(teacher, batch, cfg, deep, no_filters, r5);
    CHECK(e.stats.kept == 2); // the exhausted attack contributes its final pair
    CHECK(e.stats.failed == 0);
    CHECK(e.images.size() == 8);
}

TEST_CASE("attack_batch is deterministic") {
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    AttackConfig cfg;
    DeeperConfig deep;
    AttackBatchFlags flags;
    Rng r1(14), r2(14);
    const AttackOutput a = attack_batch(teacher, mixed_outcome_batch(), cfg, deep, flags, r1);
    const AttackOutput b = attack_batch(teacher, mixed_outcome_batch(), cfg, deep, flags, r2);
    REQUIRE(a.images.size() == b.images.size());
    for (std::size_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i].data == b.images[i].data);
}

TEST_CASE("attack config invariants are enforced") {
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    Rng rng(15);
    const Tensor x0 = image_of(base_pixels());
    AttackConfig bad;
    bad.alpha0 = 20.0f; // above epsilon
    CHECK_THROWS_AS(border_attack(teacher, x0, 1, bad, rng), ContractError);
    bad = AttackConfig{};
    bad.bold_up = 0.9f;
    CHECK_THROWS_AS(border_attack(teacher, x0, 1, bad, rng), ContractError);
    bad = AttackConfig{};
    bad.softmax_threshold = 0.0f;
    CHECK_THROWS_AS(border_attack(teacher, x0, 1, bad, rng), ContractError);
    bad = AttackConfig{};
    CHECK_THROWS_AS(border_attack(teacher, x0, 5, bad, rng), ContractError);
    teacher.set_mode(Mode::train);
    CHECK_THROWS_AS(border_attack(teacher, x0, 1, AttackConfig{}, rng), ContractError);
}

TEST_CASE("attack stats CSV appends rows under a single header") {
    const auto dir = std::filesystem::temp_directory_path() / "bdkd_boundary_tests";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "attack_stats.csv").string();
    std::filesystem::remove(path);

    AttackStats stats;
    stats.attempted = 8;
    stats.skipped = 1;
    stats.failed = 2;
    stats.kept = 5;
    stats.mean_iters = 6.25;
    stats.mean_alpha_final = 1.75;
    append_attack_stats(path, 0, 0, stats);
    append_attack_stats(path, 0, 1, stats);

    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "epoch,batch,attempted,skipped,failed,kept,mean_iters,mean_alpha_final");
    REQUIRE(std::getline(in, line));
    CHECK(line == "0,0,8,1,2,5,6.2500,1.7500");
    REQUIRE(std::getline(in, line));
    CHECK(line == "0,1,8,1,2,5,6.2500,1.7500");
    CHECK_FALSE(std::getline(in, line));
}

TEST_CASE("dump_pairs writes readable PNGs for every surviving pair") {
    Model teacher = logistic_teacher(spread_weights(), -14.0);
    AttackConfig cfg;
    DeeperConfig deep;
    AttackBatchFlags flags;
    Rng rng(16);
    const AttackOutput out = attack_batch(teacher, mixed_outcome_batch(), cfg, deep, flags, rng);
    REQUIRE(out.kept_pairs.size() == 1);

    const auto dir = std::filesystem::temp_directory_path() / "bdkd_boundary_tests" / "dump";
    std::filesystem::remove_all(dir);
    dump_pairs(dir.string(), "e0_b0", out);
    for (const char* leaf :
         {"e0_b0_pair000_pre.png", "e0_b0_pair000_post.png", "e0_b0_pair000_deeper_pre.png",
          "e0_b0_pair000_deeper_post.png"}) {
        const Tensor img = read_png_rgb((dir / leaf).string());
        CHECK(img.shape == std::vector<int>{3, 2, 2});
    }
}
