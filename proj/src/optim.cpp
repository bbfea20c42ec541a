#include "bdkd/optim.hpp"

#include <cmath>

namespace bdkd {

float lr_at(const LrSchedule& schedule, int epoch) {
    require(schedule.total_epochs >= 1, "lr_at: schedule needs at least one epoch");
    require(epoch >= 0 && epoch <= schedule.total_epochs,
            "lr_at: epoch " + std::to_string(epoch) + " outside [0," +
                std::to_string(schedule.total_epochs) + "]");
    const double phase = M_PI * static_cast<double>(epoch) / schedule.total_epochs;
    return static_cast<float>(schedule.initial_lr * 0.5 * (1.0 + std::cos(phase)));
}

SgdOptimizer::SgdOptimizer(Model& model, float momentum, float weight_decay)
    : model_(&model), momentum_(momentum), weight_decay_(weight_decay) {
    for (const auto& name : model.trainable_names())
        velocity_[name].assign(model.param(name).data.size(), 0.0f);
}

void SgdOptimizer::step(float lr) {
    for (const auto& name : model_->trainable_names()) {
        Tensor& p = model_->param(name);
        require(p.has_grad(), "sgd_step: parameter " + name + " has no gradient");
        std::vector<float>& v = velocity_[name];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const float g = p.grad[i] + weight_decay_ * p.data[i];
            v[i] = momentum_ * v[i] + g;
            p.data[i] -= lr * v[i];
        }
        p.zero_grad();
    }
}

} // namespace bdkd
