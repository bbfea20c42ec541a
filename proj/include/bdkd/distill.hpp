#ifndef BDKD_DISTILL_HPP
#define BDKD_DISTILL_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bdkd/augment.hpp"
#include "bdkd/boundary.hpp"
#include "bdkd/curate.hpp"
#include "bdkd/geoshapes.hpp"
#include "bdkd/model.hpp"
#include "bdkd/rng.hpp"

namespace bdkd {

struct TrainConfig {
    int epochs = 60;
    int batch_size = 32;
    float lr0 = 0.1f;
    float momentum = 0.9f;
    float weight_decay = 1e-4f;
    float tau = 20.0f; // KD temperature
    std::uint64_t seed = 1;
    // ablation toggles for the distillation loop
    bool use_border_attack = true;
    bool use_deeper_attack = true;
    bool use_pre_success = true;
    bool use_filters = true;
    bool attack_on_normal_and_mixup = false; // attack unmixed images too
    bool loss_on_all_example_kinds = false;  // train on normal+mixup+adversarial
};

struct MetricsRow {
    int epoch = 0;
    double train_loss = 0.0;
    double eval_accuracy = 0.0;
    double lr = 0.0;
    double attack_success_rate = 0.0; // kept / attempted over the epoch
    double wall_seconds = 0.0;
};

/// Supervised teacher training: 10% per-class validation split, RandAugment
/// (n=2, m=14) + flip + crop, SGD with cosine decay, cross-entropy. Returns
/// the parameters from the epoch with the best validation accuracy, in eval
/// mode; with epochs=0 the input model comes back unchanged.
Model train_teacher(const LabeledDataset& dataset, const Model& model, const TrainConfig& cfg,
                    Rng& rng, std::vector<MetricsRow>* metrics = nullptr);

struct DistillOptions {
    const LabeledDataset* eval_set = nullptr; // fills eval_accuracy per epoch when set
    std::string attack_stats_csv;             // per-batch attack rows appended when non-empty
    std::string dump_pairs_dir;               // boundary-pair PNGs written when non-empty
};

struct DistillOutputs {
    std::vector<MetricsRow> metrics;
    int skipped_batches = 0; // batches with zero attack survivors
};

/// Data-free distillation: per batch, KD examples are augmented, mixed,
/// attacked against the frozen teacher, and the student learns from
/// KL(teacher || student) of tau-tempered softmaxes over whatever images
/// survive. The teacher is read-only throughout; the student returned is the
/// state after the last step of the last epoch (no validation checkpointing),
/// in eval mode.
Model distill(Model& teacher, const Model& student, const KdDataset& kd, const TrainConfig& cfg,
              const AugmentConfig& aug, const AttackConfig& atk, const DeeperConfig& deep,
              Rng& rng, const DistillOptions& opts = {}, DistillOutputs* out = nullptr);

/// Fraction of argmax-correct predictions (ties toward the lowest class).
double evaluate(Model& model, const LabeledDataset& dataset);

struct TrialStats {
    std::vector<double> accuracies;
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation, (n-1) denominator
};

/// Runs the trial callable once per seed, passing the MD5-mixed seed, and
/// aggregates the returned accuracies. A single seed reports stddev 0.
TrialStats run_trials(const std::vector<std::uint64_t>& seeds,
                      const std::function<double(std::uint64_t)>& trial);

/// Rewrites the metrics file with a header and one row per epoch.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

} // namespace bdkd

#endif
