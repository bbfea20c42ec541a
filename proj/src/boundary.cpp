#include "bdkd/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bdkd/common.hpp"
#include "bdkd/losses.hpp"
#include "bdkd/png_io.hpp"

namespace bdkd {
namespace {

void check_attack_config(const AttackConfig& cfg) {
    require(cfg.epsilon > 0.0f, "AttackConfig: epsilon must be positive");
    require(cfg.alpha_min > 0.0f && cfg.alpha_min <= cfg.alpha0 && cfg.alpha0 <= cfg.epsilon,
            "AttackConfig: need 0 < alpha_min <= alpha0 <= epsilon");
    require(cfg.max_iters >= 1, "AttackConfig: max_iters must be at least 1");
    require(cfg.softmax_threshold > 0.0f && cfg.softmax_threshold <= 1.0f,
            "AttackConfig: softmax_threshold must lie in (0, 1]");
    require(cfg.bold_up > 1.0f, "AttackConfig: bold_up must exceed 1");
    require(cfg.bold_down > 0.0f && cfg.bold_down < 1.0f,
            "AttackConfig: bold_down must lie in (0, 1)");
}

void check_attack_input(const Model& teacher, const Tensor& x, int target, const char* who) {
    require(teacher.mode() == Mode::eval, std::string(who) + ": teacher must be in eval mode");
    require(x.rank() == 3, std::string(who) + ": expected a [C,H,W] image");
    require(x.shape == teacher.input_shape(),
            std::string(who) + ": image shape does not match the teacher input");
    require(target >= 0 && target < teacher.num_classes(),
            std::string(who) + ": target class out of range");
}

// Teacher view of a single image: argmax, max-softmax, logits, and the
// recorded graph (input-gradient only) for a later backward.
struct TeacherView {
    int pred = -1;
    float conf = 0.0f;
    Tensor logits;
    Trace trace;
};

TeacherView eval_traced(Model& teacher, const Tensor& x) {
    TeacherView view;
    Tensor batch = stack({x});
    batch.ensure_grad();
    view.trace.want_param_grads = false;
    view.logits = teacher.forward(batch, &view.trace);

    const int classes = view.logits.dim(1);
    const float* row = view.logits.data.data();
    view.pred = 0;
    for (int j = 1; j < classes; ++j) {
        if (row[j] > row[view.pred]) view.pred = j;
    }
    double denom = 0.0;
    for (int j = 0; j < classes; ++j) denom += std::exp(static_cast<double>(row[j]) - row[view.pred]);
    view.conf = static_cast<float>(1.0 / denom);
    return view;
}

// Loss-gradient sign field for a targeted cross-entropy descent step.
Tensor grad_sign(Model& teacher, TeacherView& view, int target) {
    Tensor dlogits = cross_entropy_dlogits(view.logits, {target});
    Tensor grad = teacher.backward(dlogits, view.trace); // [1,C,H,W]
    Tensor sign({grad.dim(1), grad.dim(2), grad.dim(3)});
    for (std::size_t i = 0; i < sign.data.size(); ++i) {
        const float g = grad.data[i];
        sign.data[i] = g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f);
    }
    return sign;
}

Tensor apply_step(const Tensor& x, const Tensor& sign, float alpha, const Tensor& x0,
                  float epsilon) {
    const float a = alpha / 255.0f;
    const float e = epsilon / 255.0f;
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        float v = x.data[i] - a * sign.data[i];
        v = std::min(x0.data[i] + e, std::max(x0.data[i] - e, v));
        out.data[i] = std::min(1.0f, std::max(0.0f, v));
    }
    return out;
}

bool valid_pre(const AttackConfig& cfg, int pred, float conf, int target) {
    return pred != target && conf <= cfg.softmax_threshold;
}

} // namespace

Tensor bim_step(Model& teacher, const Tensor& x, int target, float alpha, const Tensor& x0,
                float epsilon) {
    check_attack_input(teacher, x, target, "bim_step");
    require(x.same_shape(x0), "bim_step: x and x0 must share one shape");
    require(alpha > 0.0f && epsilon > 0.0f, "bim_step: alpha and epsilon must be positive");
    TeacherView view = eval_traced(teacher, x);
    return apply_step(x, grad_sign(teacher, view, target), alpha, x0, epsilon);
}

BorderResult border_attack(Model& teacher, const Tensor& x0, int target, const AttackConfig& cfg,
                           Rng& rng) {
    check_attack_config(cfg);
    check_attack_input(teacher, x0, target, "border_attack");

    BorderResult result;
    TeacherView start_view = eval_traced(teacher, x0);
    if (start_view.pred == target) {
        result.skipped = true;
        return result;
    }

    // Current iterate with lazily computed step direction; accepted
    // predecessors live on the history stack for one-iterate retreats.
    struct Iterate {
        Tensor x;
        int pred;
        float conf;
    };
    std::vector<Iterate> history;

    Tensor cur_x = x0;
    TeacherView cur_view = std::move(start_view);
    std::optional<Tensor> cur_sign;
    if (cfg.pgd_init) {
        const float e = cfg.epsilon / 255.0f;
        Tensor init(x0.shape);
        for (std::size_t i = 0; i < init.data.size(); ++i) {
            const float v = x0.data[i] + static_cast<float>(rng.uniform(-e, e));
            init.data[i] = std::min(1.0f, std::max(0.0f, v));
        }
        cur_x = std::move(init);
        cur_view = eval_traced(teacher, cur_x);
    }

    float alpha = cfg.alpha0;
    int used = 0;
    while (used < cfg.max_iters) {
        ++used;
        if (!cur_sign) cur_sign = grad_sign(teacher, cur_view, target);
        Tensor candidate = apply_step(cur_x, *cur_sign, alpha, x0, cfg.epsilon);
        TeacherView cand_view = eval_traced(teacher, candidate);

        if (cand_view.pred != target) {
            // Still outside the target region: accept and speed up.
            history.push_back({std::move(cur_x), cur_view.pred, cur_view.conf});
            cur_x = std::move(candidate);
            cur_view = std::move(cand_view);
            cur_sign.reset();
            alpha = std::min(alpha * cfg.bold_up, cfg.epsilon);
            continue;
        }
        if (cand_view.conf > cfg.softmax_threshold) {
            // Overshot deep into the target class: discard and slow down.
            alpha = std::max(alpha * cfg.bold_down, cfg.alpha_min);
            continue;
        }
        if (valid_pre(cfg, cur_view.pred, cur_view.conf, target)) {
            BoundaryPair pair;
            pair.pre = cur_x;
            pair.post = std::move(candidate);
            pair.target = target;
            pair.pre_pred = cur_view.pred;
            pair.post_pred = cand_view.pred;
            pair.pre_conf = cur_view.conf;
            pair.post_conf = cand_view.conf;
            pair.iterations = used;
            pair.alpha_final = alpha;
            result.pair = std::move(pair);
            result.iterations = used;
            result.alpha_final = alpha;
            return result;
        }
        // Valid crossing but unusable predecessor: retreat one iterate.
        if (!history.empty()) {
            cur_x = std::move(history.back().x);
            cur_view = eval_traced(teacher, cur_x);
            history.pop_back();
            cur_sign.reset();
        }
        alpha = std::max(alpha * cfg.bold_down, cfg.alpha_min);
    }

    // Budget exhausted: expose the final trajectory state so callers running
    // without filters can still use it.
    BoundaryPair last;
    if (!history.empty()) {
        last.pre = history.back().x;
        last.pre_pred = history.back().pred;
        last.pre_conf = history.back().conf;
    } else {
        last.pre = cur_x;
        last.pre_pred = cur_view.pred;
        last.pre_conf = cur_view.conf;
    }
    last.post = cur_x;
    last.post_pred = cur_view.pred;
    last.post_conf = cur_view.conf;
    last.target = target;
    last.iterations = used;
    last.alpha_final = alpha;
    result.last_pair = std::move(last);
    result.iterations = used;
    result.alpha_final = alpha;
    return result;
}

std::vector<BoundaryPair> filter_pairs(Model& teacher,
                                       const std::vector<std::optional<BoundaryPair>>& pairs,
                                       const AttackConfig& cfg, PairFilterReport* report) {
    check_attack_config(cfg);
    PairFilterReport counts;
    counts.attempted = static_cast<int>(pairs.size());
    std::vector<BoundaryPair> kept;
    for (const auto& maybe : pairs) {
        if (!maybe) {
            counts.failed++;
            continue;
        }
        const BoundaryPair& pair = *maybe;
        const TeacherView pre = eval_traced(teacher, pair.pre);
        const TeacherView post = eval_traced(teacher, pair.post);
        const bool ok = post.pred == pair.target && post.conf <= cfg.softmax_threshold &&
                        pre.pred != pair.target && pre.conf <= cfg.softmax_threshold;
        if (ok) {
            counts.kept++;
            kept.push_back(pair);
        } else {
            counts.failed++;
        }
    }
    if (report) *report = counts;
    return kept;
}

std::pair<Tensor, Tensor> deeper_attack(Model& teacher, const BoundaryPair& pair,
                                        const DeeperConfig& cfg) {
    require(cfg.epsilon > 0.0f && cfg.alpha > 0.0f, "DeeperConfig: epsilon and alpha must be positive");
    require(cfg.iters >= 1, "DeeperConfig: iters must be at least 1");
    auto deepen = [&](const Tensor& image, int own_pred) {
        Tensor x = image;
        for (int i = 0; i < cfg.iters; ++i) {
            x = bim_step(teacher, x, own_pred, cfg.alpha, image, cfg.epsilon);
        }
        return x;
    };
    return {deepen(pair.pre, pair.pre_pred), deepen(pair.post, pair.post_pred)};
}

AttackOutput attack_batch(Model& teacher, const std::vector<Example>& batch,
                          const AttackConfig& cfg, const DeeperConfig& deep,
                          const AttackBatchFlags& flags, Rng& rng) {
    AttackOutput out;
    if (!flags.use_border_attack) {
        for (const auto& ex : batch) {
            out.images.push_back(ex.image);
            out.targets.push_back(ex.target);
        }
        return out;
    }

    out.stats.attempted = static_cast<int>(batch.size());
    std::vector<std::optional<BoundaryPair>> raw;
    for (const auto& ex : batch) {
        BorderResult res = border_attack(teacher, ex.image, ex.target, cfg, rng);
        if (res.skipped) {
            out.stats.skipped++;
            continue;
        }
        if (flags.use_filters) {
            raw.push_back(std::move(res.pair));
        } else {
            raw.push_back(res.pair ? std::move(res.pair) : std::move(res.last_pair));
        }
    }

    if (flags.use_filters) {
        PairFilterReport report;
        out.kept_pairs = filter_pairs(teacher, raw, cfg, &report);
        out.stats.failed = report.failed;
        out.stats.kept = report.kept;
    } else {
        for (auto& maybe : raw) {
            if (maybe) out.kept_pairs.push_back(std::move(*maybe));
        }
        out.stats.kept = static_cast<int>(out.kept_pairs.size());
        out.stats.failed = out.stats.attempted - out.stats.skipped - out.stats.kept;
    }

    double iter_sum = 0.0, alpha_sum = 0.0;
    for (const auto& pair : out.kept_pairs) {
        iter_sum += pair.iterations;
        alpha_sum += pair.alpha_final;
        if (flags.use_deeper_attack) out.deeper.push_back(deeper_attack(teacher, pair, deep));
        if (flags.use_pre_success) {
            out.images.push_back(pair.pre);
            out.targets.push_back(pair.target);
        }
        out.images.push_back(pair.post);
        out.targets.push_back(pair.target);
        if (flags.use_deeper_attack) {
            if (flags.use_pre_success) {
                out.images.push_back(out.deeper.back().first);
                out.targets.push_back(pair.target);
            }
            out.images.push_back(out.deeper.back().second);
            out.targets.push_back(pair.target);
        }
    }
    if (out.stats.kept > 0) {
        out.stats.mean_iters = iter_sum / out.stats.kept;
        out.stats.mean_alpha_final = alpha_sum / out.stats.kept;
    }
    if (flags.include_inputs) {
        for (const auto& ex : batch) {
            out.images.push_back(ex.image);
            out.targets.push_back(ex.target);
        }
    }
    return out;
}

void append_attack_stats(const std::string& path, int epoch, int batch, const AttackStats& stats) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, std::ios::binary | std::ios::app);
    require(static_cast<bool>(out), "append_attack_stats: cannot open " + path);
    if (fresh) out << "epoch,batch,attempted,skipped,failed,kept,mean_iters,mean_alpha_final\n";
    char row[160];
    std::snprintf(row, sizeof(row), "%d,%d,%d,%d,%d,%d,%.4f,%.4f", epoch, batch, stats.attempted,
                  stats.skipped, stats.failed, stats.kept, stats.mean_iters, stats.mean_alpha_final);
    out << row << '\n';
    require(static_cast<bool>(out), "append_attack_stats: write failed for " + path);
}

void dump_pairs(const std::string& dir, const std::string& prefix, const AttackOutput& output) {
    std::filesystem::create_directories(dir);
    char name[64];
    for (std::size_t i = 0; i < output.kept_pairs.size(); ++i) {
        const auto& pair = output.kept_pairs[i];
        std::snprintf(name, sizeof(name), "%s_pair%03zu_", prefix.c_str(), i);
        const std::string stem = (std::filesystem::path(dir) / name).string();
        write_png_rgb(stem + "pre.png", pair.pre);
        write_png_rgb(stem + "post.png", pair.post);
        if (i < output.deeper.size()) {
            write_png_rgb(stem + "deeper_pre.png", output.deeper[i].first);
            write_png_rgb(stem + "deeper_post.png", output.deeper[i].second);
        }
    }
}

} // namespace bdkd
