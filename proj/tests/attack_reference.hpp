#ifndef BDKD_TESTS_ATTACK_REFERENCE_HPP
#define BDKD_TESTS_ATTACK_REFERENCE_HPP

// Self-contained scalar re-implementation of the targeted boundary attack for
// a 2-class logistic model: logits(x) = (w.x + b, 0). Written straight from
// the attack contract, independently of the library code, so the two can be
// compared trace-for-trace. Kept deliberately naive: plain loops, doubles for
// decisions, floats only where the library's pixel arithmetic must be
// mirrored bitwise.

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

namespace attack_reference {

struct Logistic {
    std::vector<double> w;
    double bias = 0.0;
};

struct Decision {
    int pred = 0;
    double conf = 0.0;
    double logit = 0.0;
};

inline Decision decide(const Logistic& m, const std::vector<float>& x) {
    Decision d;
    d.logit = m.bias;
    for (std::size_t i = 0; i < m.w.size(); ++i) d.logit += m.w[i] * static_cast<double>(x[i]);
    d.pred = d.logit >= 0.0 ? 0 : 1; // argmax with ties toward class 0
    d.conf = 1.0 / (1.0 + std::exp(-std::fabs(d.logit)));
    return d;
}

// Sign of d/dx CE(logits(x), target). For target 1 the gradient is w * p0
// (p0 > 0 always), for target 0 it is w * (p0 - 1) (negative factor).
inline std::vector<float> step_sign(const Logistic& m, int target) {
    std::vector<float> s(m.w.size());
    const double factor = target == 1 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < m.w.size(); ++i) {
        const double g = factor * m.w[i];
        s[i] = g > 0.0 ? 1.0f : (g < 0.0 ? -1.0f : 0.0f);
    }
    return s;
}

// Pixel update in float arithmetic, mirroring the library order of operations.
inline std::vector<float> apply_step(const std::vector<float>& x, const std::vector<float>& sign,
                                     float alpha, const std::vector<float>& x0, float epsilon) {
    const float a = alpha / 255.0f;
    const float e = epsilon / 255.0f;
    std::vector<float> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        float v = x[i] - a * sign[i];
        v = std::min(x0[i] + e, std::max(x0[i] - e, v));
        out[i] = std::min(1.0f, std::max(0.0f, v));
    }
    return out;
}

struct Config {
    float epsilon = 10.0f;
    float alpha0 = 1.0f;
    int max_iters = 12;
    double softmax_threshold = 0.95;
    float bold_up = 1.1f;
    float bold_down = 0.5f;
    float alpha_min = 0.1f;
};

struct Pair {
    std::vector<float> pre, post;
    int pre_pred = -1, post_pred = -1;
    double pre_conf = 0.0, post_conf = 0.0;
    int iterations = 0;
    float alpha_final = 0.0f;
};

struct Result {
    bool skipped = false;
    std::optional<Pair> pair;
    std::vector<float> alpha_trace; // alpha entering each iteration
    std::vector<char> case_trace;   // 'a' accept, 'b' overshoot, 'c' retreat, 'd' success
};

inline Result run(const Logistic& m, const std::vector<float>& x0, int target, const Config& cfg) {
    Result res;
    if (decide(m, x0).pred == target) {
        res.skipped = true;
        return res;
    }

    struct Iterate {
        std::vector<float> x;
        Decision d;
    };
    std::vector<Iterate> history;
    Iterate cur{x0, decide(m, x0)};

    float alpha = cfg.alpha0;
    for (int used = 1; used <= cfg.max_iters; ++used) {
        res.alpha_trace.push_back(alpha);
        const std::vector<float> cand =
            apply_step(cur.x, step_sign(m, target), alpha, x0, cfg.epsilon);
        const Decision cd = decide(m, cand);
        if (cd.pred != target) {
            res.case_trace.push_back('a');
            history.push_back(cur);
            cur = {cand, cd};
            alpha = std::min(alpha * cfg.bold_up, cfg.epsilon);
            continue;
        }
        if (cd.conf > cfg.softmax_threshold) {
            res.case_trace.push_back('b');
            alpha = std::max(alpha * cfg.bold_down, cfg.alpha_min);
            continue;
        }
        if (cur.d.pred != target && cur.d.conf <= cfg.softmax_threshold) {
            res.case_trace.push_back('d');
            Pair pair;
            pair.pre = cur.x;
            pair.post = cand;
            pair.pre_pred = cur.d.pred;
            pair.post_pred = cd.pred;
            pair.pre_conf = cur.d.conf;
            pair.post_conf = cd.conf;
            pair.iterations = used;
            pair.alpha_final = alpha;
            res.pair = pair;
            return res;
        }
        res.case_trace.push_back('c');
        if (!history.empty()) {
            cur = history.back();
            history.pop_back();
        }
        alpha = std::max(alpha * cfg.bold_down, cfg.alpha_min);
    }
    return res;
}

} // namespace attack_reference

#endif
