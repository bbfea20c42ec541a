#include "bdkd/losses.hpp"

#include <cmath>

namespace bdkd {
namespace {

void check_rows_sum_to_one(const Tensor& p, const char* who) {
    for (int b = 0; b < p.dim(0); ++b) {
        double s = 0.0;
        for (int j = 0; j < p.dim(1); ++j) s += p.at(b, j);
        require(std::abs(s - 1.0) <= 1e-4,
                std::string(who) + ": row " + std::to_string(b) + " sums to " + std::to_string(s) +
                    ", not a distribution");
    }
}

} // namespace

Tensor tempered_softmax(const Tensor& logits, float tau) {
    require(tau > 0.0f, "tempered_softmax: tau must be positive");
    require(logits.rank() == 2, "tempered_softmax: expected [B,R] logits");
    Tensor out(logits.shape);
    const int B = logits.dim(0), R = logits.dim(1);
    for (int b = 0; b < B; ++b) {
        float mx = logits.at(b, 0) / tau;
        for (int j = 1; j < R; ++j) mx = std::max(mx, logits.at(b, j) / tau);
        double denom = 0.0;
        for (int j = 0; j < R; ++j) {
            const float e = std::exp(logits.at(b, j) / tau - mx);
            out.at(b, j) = e;
            denom += e;
        }
        for (int j = 0; j < R; ++j) out.at(b, j) = static_cast<float>(out.at(b, j) / denom);
    }
    return out;
}

float kd_loss(const Tensor& p_t, const Tensor& p_s) {
    require(p_t.rank() == 2 && p_s.rank() == 2 && p_t.same_shape(p_s),
            "kd_loss: distribution shapes differ");
    check_rows_sum_to_one(p_t, "kd_loss(p_t)");
    check_rows_sum_to_one(p_s, "kd_loss(p_s)");
    const int B = p_t.dim(0), R = p_t.dim(1);
    double total = 0.0;
    for (int b = 0; b < B; ++b) {
        for (int j = 0; j < R; ++j) {
            const double t = p_t.at(b, j);
            if (t <= 0.0) continue;
            const double s = std::max(static_cast<double>(p_s.at(b, j)), 1e-12);
            total += t * (std::log(t) - std::log(s));
        }
    }
    return static_cast<float>(total / B);
}

Tensor kd_loss_dlogits(const Tensor& p_t, const Tensor& p_s, float tau) {
    require(tau > 0.0f, "kd_loss_dlogits: tau must be positive");
    require(p_t.same_shape(p_s), "kd_loss_dlogits: distribution shapes differ");
    Tensor d(p_s.shape);
    const float scale = 1.0f / (static_cast<float>(p_s.dim(0)) * tau);
    for (std::size_t i = 0; i < d.data.size(); ++i)
        d.data[i] = (p_s.data[i] - p_t.data[i]) * scale;
    return d;
}

float cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require(logits.rank() == 2, "cross_entropy: expected [B,R] logits");
    const int B = logits.dim(0), R = logits.dim(1);
    require(static_cast<int>(labels.size()) == B, "cross_entropy: label count != batch size");
    double total = 0.0;
    for (int b = 0; b < B; ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        require(y >= 0 && y < R,
                "cross_entropy: label " + std::to_string(y) + " out of range [0," + std::to_string(R) + ")");
        float mx = logits.at(b, 0);
        for (int j = 1; j < R; ++j) mx = std::max(mx, logits.at(b, j));
        double denom = 0.0;
        for (int j = 0; j < R; ++j) denom += std::exp(static_cast<double>(logits.at(b, j)) - mx);
        total += -(static_cast<double>(logits.at(b, y)) - mx - std::log(denom));
    }
    return static_cast<float>(total / B);
}

Tensor cross_entropy_dlogits(const Tensor& logits, const std::vector<int>& labels) {
    const int B = logits.dim(0);
    Tensor d = tempered_softmax(logits, 1.0f);
    const float inv_b = 1.0f / static_cast<float>(B);
    for (int b = 0; b < B; ++b) {
        d.at(b, labels[static_cast<std::size_t>(b)]) -= 1.0f;
        for (int j = 0; j < d.dim(1); ++j) d.at(b, j) *= inv_b;
    }
    return d;
}

void Loss::backward() const {
    require(static_cast<bool>(backprop_), "backward: no recorded graph behind this value");
    backprop_();
}

Loss sum_all(Tensor& t) {
    double s = 0.0;
    for (float v : t.data) s += v;
    Tensor* target = &t;
    return Loss(static_cast<float>(s), [target] {
        target->ensure_grad();
        for (float& g : target->grad) g += 1.0f;
    });
}

Loss kd_loss_on(Model& model, Trace& trace, const Tensor& teacher_logits,
                const Tensor& student_logits, float tau) {
    const Tensor p_t = tempered_softmax(teacher_logits, tau);
    const Tensor p_s = tempered_softmax(student_logits, tau);
    const float value = kd_loss(p_t, p_s);
    Tensor dlogits = kd_loss_dlogits(p_t, p_s, tau);
    return Loss(value, [&model, &trace, dlogits = std::move(dlogits)] {
        model.backward(dlogits, trace);
    });
}

Loss cross_entropy_on(Model& model, Trace& trace, const Tensor& logits,
                      const std::vector<int>& labels) {
    const float value = cross_entropy(logits, labels);
    Tensor dlogits = cross_entropy_dlogits(logits, labels);
    return Loss(value, [&model, &trace, dlogits = std::move(dlogits)] {
        model.backward(dlogits, trace);
    });
}

} // namespace bdkd
