#include "bdkd/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <utility>

#include "bdkd/losses.hpp"
#include "bdkd/optim.hpp"

namespace bdkd {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Batched argmax accuracy over a subset of the dataset, in the model's
/// current mode.
double accuracy_on(Model& model, const LabeledDataset& dataset, const std::vector<int>& indices) {
    require(!indices.empty(), "accuracy_on: empty index set");
    const std::size_t kBatch = 64;
    int correct = 0;
    for (std::size_t start = 0; start < indices.size(); start += kBatch) {
        std::size_t stop = std::min(indices.size(), start + kBatch);
        std::vector<Tensor> images;
        images.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i)
            images.push_back(dataset.images[static_cast<std::size_t>(indices[i])]);
        std::vector<int> preds = Model::argmax_rows(model.forward(stack(images)));
        for (std::size_t i = start; i < stop; ++i)
            if (preds[i - start] == dataset.labels[static_cast<std::size_t>(indices[i])]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

} // namespace

Model train_teacher(const LabeledDataset& dataset, const Model& model, const TrainConfig& cfg,
                    Rng& rng, std::vector<MetricsRow>* metrics) {
    require(!dataset.images.empty(), "train_teacher: empty dataset");
    require(dataset.images.size() == dataset.labels.size(),
            "train_teacher: image/label count mismatch");
    require(dataset.num_classes == model.num_classes(),
            "train_teacher: dataset/model class count mismatch");
    require(cfg.epochs >= 0, "train_teacher: negative epoch count");
    require(cfg.batch_size >= 1, "train_teacher: batch_size must be >= 1");
    for (int y : dataset.labels)
        require(y >= 0 && y < dataset.num_classes, "train_teacher: label out of range");

    Model trained = model;
    if (cfg.epochs == 0) {
        trained.set_mode(Mode::eval); // parameters untouched; only the returned mode is pinned
        return trained;
    }

    // 10% per-class holdout, at least one example once a class has two
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(dataset.num_classes));
    for (std::size_t i = 0; i < dataset.labels.size(); ++i)
        buckets[static_cast<std::size_t>(dataset.labels[i])].push_back(static_cast<int>(i));
    std::vector<int> train_idx;
    std::vector<int> val_idx;
    for (auto& bucket : buckets) {
        rng.shuffle(bucket);
        int n = static_cast<int>(bucket.size());
        int n_val = n >= 2 ? std::max(1, n / 10) : 0;
        for (int i = 0; i < n; ++i)
            (i < n_val ? val_idx : train_idx).push_back(bucket[static_cast<std::size_t>(i)]);
    }
    require(!train_idx.empty(), "train_teacher: validation split consumed every example");
    // single-example classes can leave the holdout empty; fall back to train accuracy
    const std::vector<int>& holdout = val_idx.empty() ? train_idx : val_idx;

    const std::vector<int>& in_shape = trained.input_shape();
    int pad = std::min(4, std::min(in_shape[1], in_shape[2]));

    trained.set_mode(Mode::train);
    SgdOptimizer opt(trained, cfg.momentum, cfg.weight_decay);
    LrSchedule sched{cfg.lr0, cfg.epochs};
    Model best = trained;
    double best_acc = -1.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        float lr = lr_at(sched, epoch);
        std::vector<int> order = train_idx;
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::int64_t rows = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Tensor> images;
            std::vector<int> labels;
            images.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                const Tensor& raw = dataset.images[static_cast<std::size_t>(order[i])];
                Tensor img = rand_augment(raw, 2, 14, rng);
                images.push_back(flip_invert_crop(img, 0.5f, 0.0f, pad, rng));
                labels.push_back(dataset.labels[static_cast<std::size_t>(order[i])]);
            }
            Tensor batch = stack(images);
            Trace trace;
            Tensor logits = trained.forward(batch, &trace);
            Loss loss = cross_entropy_on(trained, trace, logits, labels);
            require(std::isfinite(loss.value()), "train_teacher: loss diverged");
            loss.backward();
            opt.step(lr);
            loss_sum += static_cast<double>(loss.value()) * static_cast<double>(labels.size());
            rows += static_cast<std::int64_t>(labels.size());
        }

        trained.set_mode(Mode::eval);
        double acc = accuracy_on(trained, dataset, holdout);
        trained.set_mode(Mode::train);
        if (acc > best_acc) { // strict: ties keep the earliest best epoch
            best_acc = acc;
            best = trained;
        }
        if (metrics)
            metrics->push_back({epoch, loss_sum / static_cast<double>(rows), acc,
                                static_cast<double>(lr), 0.0, seconds_since(t0)});
    }
    best.set_mode(Mode::eval);
    return best;
}

Model distill(Model& teacher, const Model& student, const KdDataset& kd, const TrainConfig& cfg,
              const AugmentConfig& aug, const AttackConfig& atk, const DeeperConfig& deep,
              Rng& rng, const DistillOptions& opts, DistillOutputs* out) {
    require(teacher.mode() == Mode::eval, "distill: teacher must be in eval mode");
    require(!kd.examples.empty(), "distill: empty distillation set");
    require(cfg.epochs >= 0, "distill: negative epoch count");
    require(cfg.batch_size >= 2, "distill: batch_size must be >= 2");
    require(cfg.tau > 0.0f, "distill: tau must be positive");
    require(teacher.input_shape() == student.input_shape(),
            "distill: teacher/student input shapes differ");
    require(teacher.num_classes() == student.num_classes(),
            "distill: teacher/student class counts differ");
    require(kd.num_classes == teacher.num_classes(),
            "distill: dataset/model class count mismatch");

    if (out) *out = {};
    Model s = student;
    if (cfg.epochs == 0) {
        s.set_mode(Mode::eval); // parameters untouched; only the returned mode is pinned
        return s;
    }

    s.set_mode(Mode::train);
    SgdOptimizer opt(s, cfg.momentum, cfg.weight_decay);
    LrSchedule sched{cfg.lr0, cfg.epochs};

    AttackBatchFlags flags;
    flags.use_border_attack = cfg.use_border_attack;
    flags.use_deeper_attack = cfg.use_deeper_attack;
    flags.use_pre_success = cfg.use_pre_success;
    flags.use_filters = cfg.use_filters;
    flags.include_inputs = cfg.loss_on_all_example_kinds;
    // mixed images are attacked; the plain augmented ones only join the loss
    // when every example kind is requested, so they must be appended manually
    // unless they were part of the attack set already
    const bool append_normals =
        cfg.loss_on_all_example_kinds && aug.mixup_enabled && !cfg.attack_on_normal_and_mixup;

    int skipped_batches = 0;
    std::vector<int> order(kd.examples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        float lr = lr_at(sched, epoch);
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::int64_t rows = 0;
        std::int64_t attempted = 0;
        std::int64_t kept = 0;
        int batch_index = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
            std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            if (stop - start < 2) continue; // a lone trailing example cannot be mixed

            std::vector<Example> augmented;
            augmented.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i)
                augmented.push_back(
                    augment_pipeline(kd.examples[static_cast<std::size_t>(order[i])], aug, rng));

            std::vector<Example> attack_inputs;
            if (aug.mixup_enabled) {
                std::vector<MixedExample> mixed = mixup_batch(augmented, rng);
                if (cfg.attack_on_normal_and_mixup) attack_inputs = augmented;
                attack_inputs.reserve(attack_inputs.size() + mixed.size());
                for (MixedExample& m : mixed) {
                    Example ex;
                    ex.image = std::move(m.image);
                    ex.target = m.target;
                    attack_inputs.push_back(std::move(ex));
                }
            } else {
                attack_inputs = std::move(augmented);
            }

            AttackOutput att = attack_batch(teacher, attack_inputs, atk, deep, flags, rng);
            attempted += att.stats.attempted;
            kept += att.stats.kept;
            if (!opts.attack_stats_csv.empty())
                append_attack_stats(opts.attack_stats_csv, epoch, batch_index, att.stats);
            if (!opts.dump_pairs_dir.empty()) {
                char prefix[32];
                std::snprintf(prefix, sizeof(prefix), "e%03d_b%04d", epoch, batch_index);
                dump_pairs(opts.dump_pairs_dir, prefix, att);
            }

            std::vector<Tensor> images = std::move(att.images);
            if (append_normals)
                for (const Example& ex : augmented) images.push_back(ex.image);
            if (images.empty()) {
                ++skipped_batches;
                continue;
            }

            Tensor batch = stack(images);
            Tensor teacher_logits = teacher.forward(batch);
            Trace trace;
            Tensor student_logits = s.forward(batch, &trace);
            Loss loss = kd_loss_on(s, trace, teacher_logits, student_logits, cfg.tau);
            require(std::isfinite(loss.value()), "distill: loss diverged");
            loss.backward();
            opt.step(lr);
            loss_sum += static_cast<double>(loss.value()) * static_cast<double>(images.size());
            rows += static_cast<std::int64_t>(images.size());
        }

        MetricsRow row;
        row.epoch = epoch;
        row.train_loss = rows > 0 ? loss_sum / static_cast<double>(rows) : 0.0;
        row.lr = static_cast<double>(lr);
        row.attack_success_rate =
            attempted > 0 ? static_cast<double>(kept) / static_cast<double>(attempted) : 0.0;
        if (opts.eval_set) {
            s.set_mode(Mode::eval);
            row.eval_accuracy = evaluate(s, *opts.eval_set);
            s.set_mode(Mode::train);
        }
        row.wall_seconds = seconds_since(t0);
        if (out) out->metrics.push_back(row);
    }

    if (out) out->skipped_batches = skipped_batches;
    s.set_mode(Mode::eval);
    return s;
}

double evaluate(Model& model, const LabeledDataset& dataset) {
    require(model.mode() == Mode::eval, "evaluate: model must be in eval mode");
    require(!dataset.images.empty(), "evaluate: empty dataset");
    require(dataset.images.size() == dataset.labels.size(),
            "evaluate: image/label count mismatch");
    std::vector<int> indices(dataset.images.size());
    std::iota(indices.begin(), indices.end(), 0);
    return accuracy_on(model, dataset, indices);
}

TrialStats run_trials(const std::vector<std::uint64_t>& seeds,
                      const std::function<double(std::uint64_t)>& trial) {
    require(!seeds.empty(), "run_trials: need at least one seed");
    require(static_cast<bool>(trial), "run_trials: missing trial function");
    TrialStats stats;
    stats.accuracies.reserve(seeds.size());
    for (std::uint64_t seed : seeds) stats.accuracies.push_back(trial(mix_seed_md5(seed)));
    stats.mean = std::accumulate(stats.accuracies.begin(), stats.accuracies.end(), 0.0) /
                 static_cast<double>(stats.accuracies.size());
    if (stats.accuracies.size() > 1) {
        double ss = 0.0;
        for (double a : stats.accuracies) ss += (a - stats.mean) * (a - stats.mean);
        stats.stddev = std::sqrt(ss / static_cast<double>(stats.accuracies.size() - 1));
    }
    return stats;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    require(f.good(), "write_metrics_csv: cannot open " + path);
    f << "epoch,train_loss,eval_accuracy,lr,attack_success_rate,wall_seconds\n";
    char buf[160];
    for (const MetricsRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.3f\n", r.epoch, r.train_loss,
                      r.eval_accuracy, r.lr, r.attack_success_rate, r.wall_seconds);
        f << buf;
    }
    require(f.good(), "write_metrics_csv: write failed for " + path);
}

} // namespace bdkd
