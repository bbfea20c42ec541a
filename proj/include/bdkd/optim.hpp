#ifndef BDKD_OPTIM_HPP
#define BDKD_OPTIM_HPP

#include <map>
#include <string>
#include <vector>

#include "bdkd/model.hpp"

namespace bdkd {

/// Half-period cosine decay from initial_lr at epoch 0 to zero at total_epochs.
struct LrSchedule {
    float initial_lr = 0.1f;
    int total_epochs = 1;
};

float lr_at(const LrSchedule& schedule, int epoch);

/// SGD with momentum and decoupled-from-nothing weight decay folded into the
/// gradient (the classic formulation): v <- mu*v + (g + wd*theta),
/// theta <- theta - lr*v. Gradients are zeroed after each step.
class SgdOptimizer {
public:
    SgdOptimizer(Model& model, float momentum = 0.9f, float weight_decay = 1e-4f);

    void step(float lr);

    float momentum() const { return momentum_; }
    float weight_decay() const { return weight_decay_; }

private:
    Model* model_;
    float momentum_;
    float weight_decay_;
    std::map<std::string, std::vector<float>> velocity_;
};

} // namespace bdkd

#endif
