#ifndef BDKD_MODEL_HPP
#define BDKD_MODEL_HPP

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "bdkd/rng.hpp"
#include "bdkd/tensor.hpp"

namespace bdkd {

enum class Mode { train, eval };

struct Conv2dSpec {
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 0;
};
struct BatchNorm2dSpec {
    int channels = 0;
};
struct ReluSpec {};
struct MaxPool2dSpec {
    int kernel = 2;
    int stride = 2;
};
struct GlobalAvgPoolSpec {};
struct FlattenSpec {};
struct DenseSpec {
    int out_features = 0;
};

using LayerSpec = std::variant<Conv2dSpec, BatchNorm2dSpec, ReluSpec, MaxPool2dSpec,
                               GlobalAvgPoolSpec, FlattenSpec, DenseSpec>;

/// Per-forward bookkeeping needed by backward. Allocating `input.grad` on the
/// batch you pass to forward (or setting want_input_grad) requests the input
/// gradient; want_param_grads controls accumulation into parameter grads.
struct Trace {
    bool want_input_grad = false;
    bool want_param_grads = true;
    bool recorded = false;
    Mode mode = Mode::train; // mode the forward pass ran in

    Tensor input;                            // copy of the forwarded batch
    std::vector<Tensor> acts;                // output of each layer
    struct BnExtra {
        Tensor xhat;                         // normalized activations
        std::vector<float> inv_std;          // per channel
    };
    std::vector<BnExtra> bn;                 // indexed by layer (empty slots otherwise)
    std::vector<std::vector<int>> pool_argmax; // flat input index per pooled output
};

/// Sequential classifier. Holds layer specs and named parameters; usable as a
/// frozen teacher (eval mode) or a trainable student (train mode, batchnorm
/// running statistics updated on forward).
class Model {
public:
    /// Validates layer compatibility for the declared per-sample input shape
    /// (C,H,W) and initializes parameters: He-uniform fan-in weights, zero
    /// biases, identity batchnorm.
    Model(std::vector<int> input_shape, std::vector<LayerSpec> layers, Rng& rng);

    /// Reconstruction without initialization (checkpoint loading).
    Model(std::vector<int> input_shape, std::vector<LayerSpec> layers);

    Tensor forward(const Tensor& batch, Trace* trace = nullptr);

    /// Propagates d(loss)/d(logits) back through a recorded trace.
    /// Accumulates into parameter grads when the trace wants them; returns the
    /// input gradient when requested (empty tensor otherwise).
    Tensor backward(const Tensor& dlogits, Trace& trace);

    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

    const std::vector<int>& input_shape() const { return input_shape_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    const std::vector<std::vector<int>>& output_shapes() const { return out_shapes_; }
    int num_classes() const;

    std::map<std::string, Tensor>& params() { return params_; }
    const std::map<std::string, Tensor>& params() const { return params_; }
    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;

    /// Names of optimizable parameters (excludes batchnorm running stats), in
    /// layer order.
    const std::vector<std::string>& trainable_names() const { return trainable_; }

    void zero_grads();

    /// Argmax per row, ties toward the lowest class index.
    static std::vector<int> argmax_rows(const Tensor& logits);

private:
    void build_shapes_and_params(Rng* rng);

    std::vector<int> input_shape_; // C,H,W
    std::vector<LayerSpec> layers_;
    std::vector<std::vector<int>> out_shapes_; // per-sample shape after each layer
    std::map<std::string, Tensor> params_;
    std::vector<std::string> trainable_;
    Mode mode_ = Mode::train;
};

} // namespace bdkd

#endif
