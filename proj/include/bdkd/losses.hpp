#ifndef BDKD_LOSSES_HPP
#define BDKD_LOSSES_HPP

#include <functional>
#include <vector>

#include "bdkd/model.hpp"
#include "bdkd/tensor.hpp"

namespace bdkd {

/// Row-wise softmax of logits/tau (max-subtracted for stability). tau must be
/// positive.
Tensor tempered_softmax(const Tensor& logits, float tau);

/// Mean over the batch of KL(p_t || p_s). Rows must already be probability
/// distributions (sums within 1e-4 of 1); zero teacher mass contributes
/// nothing and log p_s is clamped below at 1e-12.
float kd_loss(const Tensor& p_t, const Tensor& p_s);

/// Gradient of the distillation objective tau^2 * kd_loss with respect to the
/// student logits when p_s = tempered_softmax(z_s, tau): (p_s - p_t) * tau / B,
/// same shape as the logits. Raw KL gradients through a tempered softmax
/// shrink as 1/tau^2, so the objective carries the standard tau^2
/// compensation to keep step sizes comparable across temperatures.
Tensor kd_loss_dlogits(const Tensor& p_t, const Tensor& p_s, float tau);

/// Mean negative log-softmax of the labeled class.
float cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// d(cross_entropy)/d(logits): (softmax - onehot) / B.
Tensor cross_entropy_dlogits(const Tensor& logits, const std::vector<int>& labels);

/// A scalar tied to the backward pass that produced it. Calling backward()
/// replays the stored propagation; repeated calls accumulate into the same
/// gradient buffers. A Loss constructed from a bare value has no graph and
/// backward() on it is a contract error.
class Loss {
public:
    Loss() = default;
    explicit Loss(float value) : value_(value) {}
    Loss(float value, std::function<void()> backprop)
        : value_(value), backprop_(std::move(backprop)) {}

    float value() const { return value_; }
    void backward() const;

private:
    float value_ = 0.0f;
    std::function<void()> backprop_;
};

/// Sum of all elements; backward adds ones into t.grad.
Loss sum_all(Tensor& t);

/// KD loss through a recorded trace: value is kd_loss of the tempered
/// softmaxes, backward pushes the logit gradient through the model.
Loss kd_loss_on(Model& model, Trace& trace, const Tensor& teacher_logits,
                const Tensor& student_logits, float tau);

/// Cross-entropy through a recorded trace.
Loss cross_entropy_on(Model& model, Trace& trace, const Tensor& logits,
                      const std::vector<int>& labels);

} // namespace bdkd

#endif
