#ifndef BDKD_BOUNDARY_HPP
#define BDKD_BOUNDARY_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bdkd/curate.hpp"
#include "bdkd/model.hpp"
#include "bdkd/rng.hpp"
#include "bdkd/tensor.hpp"

namespace bdkd {

/// Targeted L-inf attack settings. epsilon, alpha0, and alpha_min are in
/// 255-scale units (the 8-bit convention: eps=10 means 10/255 in pixel space).
struct AttackConfig {
    float epsilon = 10.0f;
    float alpha0 = 1.0f;
    int max_iters = 12;
    float softmax_threshold = 0.95f;
    float bold_up = 1.1f;
    float bold_down = 0.5f;
    float alpha_min = 0.1f;
    bool pgd_init = false; // start from a uniform +-epsilon perturbation
};

/// Single-step follow-up attack pushing an image deeper into its own
/// predicted class. 255-scale units.
struct DeeperConfig {
    float epsilon = 1.0f;
    float alpha = 1.0f;
    int iters = 1;
};

/// A boundary-straddling pair: post is the first iterate the teacher assigns
/// the target class (below the confidence ceiling), pre is the iterate just
/// before crossing (still off-target, also below the ceiling).
struct BoundaryPair {
    Tensor pre;
    Tensor post;
    int target = -1;
    int pre_pred = -1;
    int post_pred = -1;
    float pre_conf = 0.0f;
    float post_conf = 0.0f;
    int iterations = 0;      // budget consumed when the pair was produced
    float alpha_final = 0.0f; // step size at termination, 255-scale
};

struct BorderResult {
    std::optional<BoundaryPair> pair;      // present only on success
    std::optional<BoundaryPair> last_pair; // final trajectory state otherwise (absent when skipped)
    bool skipped = false;                  // teacher already predicts the target on x0
    int iterations = 0;
    float alpha_final = 0.0f;
};

/// One targeted BIM step: x' = clip_pixel(clip_ball(x - (alpha/255) * sign(grad_x CE), x0, eps)).
/// sign(0) = 0, so a zero gradient leaves x untouched.
Tensor bim_step(Model& teacher, const Tensor& x, int target, float alpha, const Tensor& x0,
                float epsilon);

/// Iterative boundary search with Bold Driver step control. Per iteration a
/// candidate step is taken and classified: off-target candidates are accepted
/// and alpha grows (capped at epsilon); a too-confident on-target candidate is
/// discarded and alpha shrinks (floored at alpha_min); an acceptable candidate
/// whose predecessor fails the pre-success criteria forces a one-iterate
/// retreat; otherwise the pre/post pair is returned. Every pass, including
/// retreats, consumes one of max_iters. Skips immediately when the teacher
/// already predicts the target. rng is consulted only when pgd_init is set.
BorderResult border_attack(Model& teacher, const Tensor& x0, int target, const AttackConfig& cfg,
                           Rng& rng);

struct PairFilterReport {
    int attempted = 0;
    int failed = 0; // absent results plus pairs failing re-verification
    int kept = 0;
};

/// Drops absent results and re-verifies survivors against the teacher:
/// post_pred == target, pre_pred != target, both confidences at or below the
/// threshold. Survivors keep their input order.
std::vector<BoundaryPair> filter_pairs(Model& teacher,
                                       const std::vector<std::optional<BoundaryPair>>& pairs,
                                       const AttackConfig& cfg, PairFilterReport* report = nullptr);

/// Perturbs both images of a filtered pair one step deeper into their own
/// currently predicted classes, each inside its own epsilon-ball. Returns
/// (deeper_pre, deeper_post).
std::pair<Tensor, Tensor> deeper_attack(Model& teacher, const BoundaryPair& pair,
                                        const DeeperConfig& cfg);

struct AttackBatchFlags {
    bool use_border_attack = true; // off: inputs pass through unattacked
    bool use_deeper_attack = true;
    bool use_pre_success = true;   // off: pre and deeper-pre images are excluded
    bool use_filters = true;       // off: unsuccessful attacks contribute their final iterates
    bool include_inputs = false;   // append the pre-attack images after the adversarial groups
};

struct AttackStats {
    int attempted = 0;
    int skipped = 0;
    int failed = 0;
    int kept = 0;
    double mean_iters = 0.0;       // over kept pairs
    double mean_alpha_final = 0.0; // over kept pairs, 255-scale
};

struct AttackOutput {
    std::vector<Tensor> images;
    std::vector<int> targets;
    AttackStats stats;
    std::vector<BoundaryPair> kept_pairs;            // for inspection dumps
    std::vector<std::pair<Tensor, Tensor>> deeper;   // parallel to kept_pairs when enabled
};

/// Attacks every example, filters, runs the deeper attack on survivors, and
/// assembles the distillation images: per surviving pair [pre, post,
/// deeper_pre, deeper_post] (trimmed by flags) in input order, then the raw
/// inputs when include_inputs is set.
AttackOutput attack_batch(Model& teacher, const std::vector<Example>& batch,
                          const AttackConfig& cfg, const DeeperConfig& deep,
                          const AttackBatchFlags& flags, Rng& rng);

/// Appends one row per batch to a CSV (header written on first use):
/// epoch,batch,attempted,skipped,failed,kept,mean_iters,mean_alpha_final.
void append_attack_stats(const std::string& path, int epoch, int batch, const AttackStats& stats);

/// Writes pre/post (and deeper, when present) images of every kept pair as
/// PNGs named <prefix>_pairNNN_{pre,post,deeper_pre,deeper_post}.png.
void dump_pairs(const std::string& dir, const std::string& prefix, const AttackOutput& output);

} // namespace bdkd

#endif
