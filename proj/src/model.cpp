#include "bdkd/model.hpp"

#include <cblas.h>
#include <cmath>
#include <cstring>

namespace bdkd {
namespace {

constexpr float kBnMomentum = 0.1f;
constexpr float kBnEps = 1e-5f;

struct ConvDims {
    int cin, h, w;
    int cout, k, s, p;
    int hout, wout;
    int patch() const { return cin * k * k; }
    int outpix() const { return hout * wout; }
};

void im2col(const float* x, const ConvDims& d, float* col) {
    // col is [cin*k*k][hout*wout] row-major
    const int n = d.outpix();
    for (int ci = 0; ci < d.cin; ++ci) {
        const float* plane = x + static_cast<std::ptrdiff_t>(ci) * d.h * d.w;
        for (int ki = 0; ki < d.k; ++ki) {
            for (int kj = 0; kj < d.k; ++kj) {
                float* row = col + static_cast<std::ptrdiff_t>((ci * d.k + ki) * d.k + kj) * n;
                for (int oy = 0; oy < d.hout; ++oy) {
                    const int iy = oy * d.s - d.p + ki;
                    if (iy < 0 || iy >= d.h) {
                        std::memset(row + oy * d.wout, 0, sizeof(float) * static_cast<std::size_t>(d.wout));
                        continue;
                    }
                    for (int ox = 0; ox < d.wout; ++ox) {
                        const int ix = ox * d.s - d.p + kj;
                        row[oy * d.wout + ox] = (ix >= 0 && ix < d.w) ? plane[iy * d.w + ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const float* col, const ConvDims& d, float* dx) {
    const int n = d.outpix();
    for (int ci = 0; ci < d.cin; ++ci) {
        float* plane = dx + static_cast<std::ptrdiff_t>(ci) * d.h * d.w;
        for (int ki = 0; ki < d.k; ++ki) {
            for (int kj = 0; kj < d.k; ++kj) {
                const float* row = col + static_cast<std::ptrdiff_t>((ci * d.k + ki) * d.k + kj) * n;
                for (int oy = 0; oy < d.hout; ++oy) {
                    const int iy = oy * d.s - d.p + ki;
                    if (iy < 0 || iy >= d.h) continue;
                    for (int ox = 0; ox < d.wout; ++ox) {
                        const int ix = ox * d.s - d.p + kj;
                        if (ix >= 0 && ix < d.w) plane[iy * d.w + ix] += row[oy * d.wout + ox];
                    }
                }
            }
        }
    }
}

ConvDims conv_dims(const std::vector<int>& in_shape, const Conv2dSpec& sp) {
    ConvDims d;
    d.cin = in_shape[0];
    d.h = in_shape[1];
    d.w = in_shape[2];
    d.cout = sp.out_channels;
    d.k = sp.kernel;
    d.s = sp.stride;
    d.p = sp.pad;
    d.hout = (d.h + 2 * d.p - d.k) / d.s + 1;
    d.wout = (d.w + 2 * d.p - d.k) / d.s + 1;
    return d;
}

} // namespace

Model::Model(std::vector<int> input_shape, std::vector<LayerSpec> layers, Rng& rng)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    build_shapes_and_params(&rng);
}

Model::Model(std::vector<int> input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    build_shapes_and_params(nullptr);
}

void Model::build_shapes_and_params(Rng* rng) {
    require(input_shape_.size() == 3, "Model: input shape must be C,H,W");
    std::vector<int> cur = input_shape_;
    auto fail = [](std::size_t i, const std::string& what) {
        throw ContractError("Model: layer " + std::to_string(i) + ": " + what);
    };
    auto he_uniform = [&](Tensor& t, int fan_in) {
        if (!rng) return;
        const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
        for (float& v : t.data) v = static_cast<float>(rng->uniform(-bound, bound));
    };

    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string base = "layer" + std::to_string(i) + ".";
        if (auto* c = std::get_if<Conv2dSpec>(&layers_[i])) {
            if (cur.size() != 3) fail(i, "conv2d requires C,H,W input, got " + std::to_string(cur.size()) + "-d");
            if (c->out_channels < 1 || c->kernel < 1 || c->stride < 1 || c->pad < 0)
                fail(i, "invalid conv2d spec");
            ConvDims d = conv_dims(cur, *c);
            if (d.hout < 1 || d.wout < 1) fail(i, "conv2d output collapses to zero size");
            Tensor w({c->out_channels, cur[0], c->kernel, c->kernel});
            he_uniform(w, cur[0] * c->kernel * c->kernel);
            params_[base + "weight"] = std::move(w);
            params_[base + "bias"] = Tensor({c->out_channels});
            trainable_.push_back(base + "weight");
            trainable_.push_back(base + "bias");
            cur = {d.cout, d.hout, d.wout};
        } else if (auto* b = std::get_if<BatchNorm2dSpec>(&layers_[i])) {
            if (cur.size() != 3) fail(i, "batchnorm2d requires C,H,W input");
            if (b->channels != cur[0])
                fail(i, "batchnorm2d channels " + std::to_string(b->channels) + " != incoming " + std::to_string(cur[0]));
            Tensor gamma({b->channels});
            std::fill(gamma.data.begin(), gamma.data.end(), 1.0f);
            params_[base + "gamma"] = std::move(gamma);
            params_[base + "beta"] = Tensor({b->channels});
            params_[base + "running_mean"] = Tensor({b->channels});
            Tensor rv({b->channels});
            std::fill(rv.data.begin(), rv.data.end(), 1.0f);
            params_[base + "running_var"] = std::move(rv);
            trainable_.push_back(base + "gamma");
            trainable_.push_back(base + "beta");
        } else if (std::holds_alternative<ReluSpec>(layers_[i])) {
            // shape preserved
        } else if (auto* m = std::get_if<MaxPool2dSpec>(&layers_[i])) {
            if (cur.size() != 3) fail(i, "maxpool2d requires C,H,W input");
            if (m->kernel < 1 || m->stride < 1) fail(i, "invalid maxpool2d spec");
            int hout = (cur[1] - m->kernel) / m->stride + 1;
            int wout = (cur[2] - m->kernel) / m->stride + 1;
            if (hout < 1 || wout < 1) fail(i, "maxpool2d output collapses to zero size");
            cur = {cur[0], hout, wout};
        } else if (std::holds_alternative<GlobalAvgPoolSpec>(layers_[i])) {
            if (cur.size() != 3) fail(i, "global average pool requires C,H,W input");
            cur = {cur[0], 1, 1};
        } else if (std::holds_alternative<FlattenSpec>(layers_[i])) {
            int f = 1;
            for (int dd : cur) f *= dd;
            cur = {f};
        } else if (auto* de = std::get_if<DenseSpec>(&layers_[i])) {
            if (cur.size() != 1) fail(i, "dense requires flattened input");
            if (de->out_features < 1) fail(i, "invalid dense spec");
            Tensor w({de->out_features, cur[0]});
            he_uniform(w, cur[0]);
            params_[base + "weight"] = std::move(w);
            params_[base + "bias"] = Tensor({de->out_features});
            trainable_.push_back(base + "weight");
            trainable_.push_back(base + "bias");
            cur = {de->out_features};
        }
        out_shapes_.push_back(cur);
    }
    require(!out_shapes_.empty() && out_shapes_.back().size() == 1,
            "Model: final layer must produce a flat logit vector");
}

int Model::num_classes() const { return out_shapes_.back()[0]; }

Tensor& Model::param(const std::string& name) {
    auto it = params_.find(name);
    require(it != params_.end(), "Model: unknown parameter " + name);
    return it->second;
}

const Tensor& Model::param(const std::string& name) const {
    auto it = params_.find(name);
    require(it != params_.end(), "Model: unknown parameter " + name);
    return it->second;
}

void Model::zero_grads() {
    for (auto& [name, p] : params_) p.zero_grad();
}

std::vector<int> Model::argmax_rows(const Tensor& logits) {
    require(logits.rank() == 2, "argmax_rows: expected [B,R] logits");
    const int b = logits.dim(0), r = logits.dim(1);
    std::vector<int> out(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        int best = 0;
        float bv = logits.at(i, 0);
        for (int j = 1; j < r; ++j) {
            if (logits.at(i, j) > bv) {
                bv = logits.at(i, j);
                best = j;
            }
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

Tensor Model::forward(const Tensor& batch, Trace* trace) {
    require(batch.rank() == 4, "forward: expected [B,C,H,W] batch, got " + batch.shape_str());
    require(batch.dim(0) >= 1, "forward: batch must be non-empty");
    require(batch.dim(1) == input_shape_[0] && batch.dim(2) == input_shape_[1] &&
                batch.dim(3) == input_shape_[2],
            "forward: batch shape " + batch.shape_str() + " does not match declared input");

    const int B = batch.dim(0);
    if (trace) {
        trace->recorded = true;
        trace->mode = mode_;
        trace->input = batch;
        if (batch.has_grad()) trace->want_input_grad = true;
        trace->acts.assign(layers_.size(), Tensor());
        trace->bn.assign(layers_.size(), Trace::BnExtra{});
        trace->pool_argmax.assign(layers_.size(), {});
    }

    Tensor cur = batch;
    std::vector<float> col; // im2col scratch, reused across layers
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string base = "layer" + std::to_string(i) + ".";
        const std::vector<int>& in_shape = (i == 0) ? input_shape_ : out_shapes_[i - 1];
        Tensor out;
        if (auto* c = std::get_if<Conv2dSpec>(&layers_[i])) {
            ConvDims d = conv_dims(in_shape, *c);
            const Tensor& w = param(base + "weight");
            const Tensor& bias = param(base + "bias");
            out = Tensor({B, d.cout, d.hout, d.wout});
            col.resize(static_cast<std::size_t>(d.patch()) * d.outpix());
            const int n = d.outpix();
            for (int b = 0; b < B; ++b) {
                const float* x = cur.data.data() + static_cast<std::ptrdiff_t>(b) * d.cin * d.h * d.w;
                float* y = out.data.data() + static_cast<std::ptrdiff_t>(b) * d.cout * n;
                im2col(x, d, col.data());
                cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, d.cout, n, d.patch(), 1.0f,
                            w.data.data(), d.patch(), col.data(), n, 0.0f, y, n);
                for (int co = 0; co < d.cout; ++co) {
                    const float bv = bias.data[static_cast<std::size_t>(co)];
                    float* row = y + static_cast<std::ptrdiff_t>(co) * n;
                    for (int j = 0; j < n; ++j) row[j] += bv;
                }
            }
        } else if (std::holds_alternative<BatchNorm2dSpec>(layers_[i])) {
            const int C = in_shape[0], hw = in_shape[1] * in_shape[2];
            const std::int64_t cnt = static_cast<std::int64_t>(B) * hw;
            const Tensor& gamma = param(base + "gamma");
            const Tensor& beta = param(base + "beta");
            out = Tensor(cur.shape);
            const bool train = (mode_ == Mode::train);
            const bool cache_xhat = trace && (train || trace->want_param_grads);
            Trace::BnExtra extra;
            if (trace) extra.inv_std.assign(static_cast<std::size_t>(C), 0.0f);
            if (cache_xhat) extra.xhat = Tensor(cur.shape);
            for (int ch = 0; ch < C; ++ch) {
                float mean, var;
                if (train) {
                    double s = 0.0;
                    for (int b = 0; b < B; ++b) {
                        const float* x = &cur.at(b, ch, 0, 0);
                        for (int j = 0; j < hw; ++j) s += x[j];
                    }
                    mean = static_cast<float>(s / static_cast<double>(cnt));
                    double v = 0.0;
                    for (int b = 0; b < B; ++b) {
                        const float* x = &cur.at(b, ch, 0, 0);
                        for (int j = 0; j < hw; ++j) {
                            const double dif = x[j] - mean;
                            v += dif * dif;
                        }
                    }
                    var = static_cast<float>(v / static_cast<double>(cnt));
                    float& rm = param(base + "running_mean").data[static_cast<std::size_t>(ch)];
                    float& rv = param(base + "running_var").data[static_cast<std::size_t>(ch)];
                    const float unbiased =
                        cnt > 1 ? var * static_cast<float>(cnt) / static_cast<float>(cnt - 1) : var;
                    rm = (1.0f - kBnMomentum) * rm + kBnMomentum * mean;
                    rv = (1.0f - kBnMomentum) * rv + kBnMomentum * unbiased;
                } else {
                    mean = param(base + "running_mean").data[static_cast<std::size_t>(ch)];
                    var = param(base + "running_var").data[static_cast<std::size_t>(ch)];
                }
                const float inv_std = 1.0f / std::sqrt(var + kBnEps);
                const float g = gamma.data[static_cast<std::size_t>(ch)];
                const float be = beta.data[static_cast<std::size_t>(ch)];
                if (trace) extra.inv_std[static_cast<std::size_t>(ch)] = inv_std;
                for (int b = 0; b < B; ++b) {
                    const float* x = &cur.at(b, ch, 0, 0);
                    float* y = &out.at(b, ch, 0, 0);
                    float* xh = cache_xhat ? &extra.xhat.at(b, ch, 0, 0) : nullptr;
                    for (int j = 0; j < hw; ++j) {
                        const float nx = (x[j] - mean) * inv_std;
                        if (xh) xh[j] = nx;
                        y[j] = g * nx + be;
                    }
                }
            }
            if (trace) trace->bn[i] = std::move(extra);
        } else if (std::holds_alternative<ReluSpec>(layers_[i])) {
            out = Tensor(cur.shape);
            for (std::size_t j = 0; j < cur.data.size(); ++j)
                out.data[j] = cur.data[j] > 0.0f ? cur.data[j] : 0.0f;
        } else if (auto* m = std::get_if<MaxPool2dSpec>(&layers_[i])) {
            const int C = in_shape[0], H = in_shape[1], W = in_shape[2];
            const int hout = (H - m->kernel) / m->stride + 1;
            const int wout = (W - m->kernel) / m->stride + 1;
            out = Tensor({B, C, hout, wout});
            std::vector<int> argmax;
            if (trace) argmax.assign(static_cast<std::size_t>(B) * C * hout * wout, 0);
            std::size_t oi = 0;
            for (int b = 0; b < B; ++b) {
                for (int ch = 0; ch < C; ++ch) {
                    const float* x = &cur.at(b, ch, 0, 0);
                    for (int oy = 0; oy < hout; ++oy) {
                        for (int ox = 0; ox < wout; ++ox, ++oi) {
                            float best = -std::numeric_limits<float>::infinity();
                            int besti = 0;
                            for (int ki = 0; ki < m->kernel; ++ki) {
                                const int iy = oy * m->stride + ki;
                                for (int kj = 0; kj < m->kernel; ++kj) {
                                    const int ix = ox * m->stride + kj;
                                    const float v = x[iy * W + ix];
                                    if (v > best) {
                                        best = v;
                                        besti = iy * W + ix;
                                    }
                                }
                            }
                            out.at(b, ch, oy, ox) = best;
                            if (trace) argmax[oi] = besti;
                        }
                    }
                }
            }
            if (trace) trace->pool_argmax[i] = std::move(argmax);
        } else if (std::holds_alternative<GlobalAvgPoolSpec>(layers_[i])) {
            const int C = in_shape[0], hw = in_shape[1] * in_shape[2];
            out = Tensor({B, C, 1, 1});
            for (int b = 0; b < B; ++b) {
                for (int ch = 0; ch < C; ++ch) {
                    const float* x = &cur.at(b, ch, 0, 0);
                    double s = 0.0;
                    for (int j = 0; j < hw; ++j) s += x[j];
                    out.at(b, ch, 0, 0) = static_cast<float>(s / hw);
                }
            }
        } else if (std::holds_alternative<FlattenSpec>(layers_[i])) {
            out = Tensor({B, out_shapes_[i][0]}, cur.data);
        } else if (auto* de = std::get_if<DenseSpec>(&layers_[i])) {
            const int in_f = in_shape[0], out_f = de->out_features;
            const Tensor& w = param(base + "weight");
            const Tensor& bias = param(base + "bias");
            out = Tensor({B, out_f});
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, B, out_f, in_f, 1.0f,
                        cur.data.data(), in_f, w.data.data(), in_f, 0.0f, out.data.data(), out_f);
            for (int b = 0; b < B; ++b)
                for (int j = 0; j < out_f; ++j) out.at(b, j) += bias.data[static_cast<std::size_t>(j)];
        }
        if (trace) trace->acts[i] = out;
        cur = std::move(out);
    }
    return cur;
}

Tensor Model::backward(const Tensor& dlogits, Trace& trace) {
    require(trace.recorded, "backward: no recorded graph (forward was run without a trace)");
    const int B = trace.input.dim(0);
    require(dlogits.rank() == 2 && dlogits.dim(0) == B && dlogits.dim(1) == num_classes(),
            "backward: dlogits shape mismatch");

    if (trace.want_param_grads)
        for (const auto& name : trainable_) param(name).ensure_grad();

    Tensor dcur = dlogits;
    std::vector<float> col, dcol;
    for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
        const std::size_t i = static_cast<std::size_t>(li);
        const std::string base = "layer" + std::to_string(i) + ".";
        const std::vector<int>& in_shape = (li == 0) ? input_shape_ : out_shapes_[i - 1];
        const Tensor& x_in = (li == 0) ? trace.input : trace.acts[i - 1];
        const bool need_dx = trace.want_input_grad || li > 0;
        Tensor dx;

        if (auto* c = std::get_if<Conv2dSpec>(&layers_[i])) {
            ConvDims d = conv_dims(in_shape, *c);
            const int n = d.outpix();
            const Tensor& w = param(base + "weight");
            col.resize(static_cast<std::size_t>(d.patch()) * n);
            if (need_dx) {
                dx = Tensor({B, d.cin, d.h, d.w});
                dcol.resize(static_cast<std::size_t>(d.patch()) * n);
            }
            Tensor* dw = trace.want_param_grads ? &param(base + "weight") : nullptr;
            Tensor* db = trace.want_param_grads ? &param(base + "bias") : nullptr;
            for (int b = 0; b < B; ++b) {
                const float* dy = dcur.data.data() + static_cast<std::ptrdiff_t>(b) * d.cout * n;
                if (dw) {
                    const float* x = x_in.data.data() + static_cast<std::ptrdiff_t>(b) * d.cin * d.h * d.w;
                    im2col(x, d, col.data());
                    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, d.cout, d.patch(), n, 1.0f,
                                dy, n, col.data(), n, 1.0f, dw->grad.data(), d.patch());
                    for (int co = 0; co < d.cout; ++co) {
                        double s = 0.0;
                        const float* row = dy + static_cast<std::ptrdiff_t>(co) * n;
                        for (int j = 0; j < n; ++j) s += row[j];
                        db->grad[static_cast<std::size_t>(co)] += static_cast<float>(s);
                    }
                }
                if (need_dx) {
                    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, d.patch(), n, d.cout, 1.0f,
                                w.data.data(), d.patch(), dy, n, 0.0f, dcol.data(), n);
                    col2im_add(dcol.data(), d,
                               dx.data.data() + static_cast<std::ptrdiff_t>(b) * d.cin * d.h * d.w);
                }
            }
        } else if (std::holds_alternative<BatchNorm2dSpec>(layers_[i])) {
            const int C = in_shape[0], hw = in_shape[1] * in_shape[2];
            const std::int64_t cnt = static_cast<std::int64_t>(B) * hw;
            const Trace::BnExtra& extra = trace.bn[i];
            const Tensor& gamma = param(base + "gamma");
            if (need_dx) dx = Tensor(x_in.shape);
            const bool train = (trace.mode == Mode::train);
            for (int ch = 0; ch < C; ++ch) {
                const float g = gamma.data[static_cast<std::size_t>(ch)];
                const float inv_std = extra.inv_std[static_cast<std::size_t>(ch)];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                const bool have_xhat = extra.xhat.numel() > 0;
                for (int b = 0; b < B; ++b) {
                    const float* dy = &dcur.at(b, ch, 0, 0);
                    const float* xh = have_xhat
                                          ? extra.xhat.data.data() + (static_cast<std::ptrdiff_t>(b) * C + ch) * hw
                                          : nullptr;
                    for (int j = 0; j < hw; ++j) {
                        sum_dy += dy[j];
                        if (xh) sum_dy_xhat += static_cast<double>(dy[j]) * xh[j];
                    }
                }
                if (trace.want_param_grads) {
                    param(base + "gamma").grad[static_cast<std::size_t>(ch)] += static_cast<float>(sum_dy_xhat);
                    param(base + "beta").grad[static_cast<std::size_t>(ch)] += static_cast<float>(sum_dy);
                }
                if (!need_dx) continue;
                if (train) {
                    const float k1 = g * inv_std / static_cast<float>(cnt);
                    const float mdy = static_cast<float>(sum_dy);
                    const float mdyx = static_cast<float>(sum_dy_xhat);
                    for (int b = 0; b < B; ++b) {
                        const float* dy = &dcur.at(b, ch, 0, 0);
                        const float* xh =
                            extra.xhat.data.data() + (static_cast<std::ptrdiff_t>(b) * C + ch) * hw;
                        float* dxp = &dx.at(b, ch, 0, 0);
                        for (int j = 0; j < hw; ++j)
                            dxp[j] = k1 * (static_cast<float>(cnt) * dy[j] - mdy - xh[j] * mdyx);
                    }
                } else {
                    const float k = g * inv_std;
                    for (int b = 0; b < B; ++b) {
                        const float* dy = &dcur.at(b, ch, 0, 0);
                        float* dxp = &dx.at(b, ch, 0, 0);
                        for (int j = 0; j < hw; ++j) dxp[j] = k * dy[j];
                    }
                }
            }
        } else if (std::holds_alternative<ReluSpec>(layers_[i])) {
            if (need_dx) {
                dx = Tensor(x_in.shape);
                for (std::size_t j = 0; j < x_in.data.size(); ++j)
                    dx.data[j] = x_in.data[j] > 0.0f ? dcur.data[j] : 0.0f;
            }
        } else if (std::holds_alternative<MaxPool2dSpec>(layers_[i])) {
            if (need_dx) {
                dx = Tensor(x_in.shape);
                const int C = in_shape[0];
                const int hw_in = in_shape[1] * in_shape[2];
                const int hw_out = out_shapes_[i][1] * out_shapes_[i][2];
                const std::vector<int>& argmax = trace.pool_argmax[i];
                std::size_t oi = 0;
                for (int b = 0; b < B; ++b) {
                    for (int ch = 0; ch < C; ++ch) {
                        float* dxp = dx.data.data() + (static_cast<std::ptrdiff_t>(b) * C + ch) * hw_in;
                        const float* dy = dcur.data.data() + (static_cast<std::ptrdiff_t>(b) * C + ch) * hw_out;
                        for (int j = 0; j < hw_out; ++j, ++oi) dxp[argmax[oi]] += dy[j];
                    }
                }
            }
        } else if (std::holds_alternative<GlobalAvgPoolSpec>(layers_[i])) {
            if (need_dx) {
                dx = Tensor(x_in.shape);
                const int C = in_shape[0], hw = in_shape[1] * in_shape[2];
                const float scale = 1.0f / static_cast<float>(hw);
                for (int b = 0; b < B; ++b) {
                    for (int ch = 0; ch < C; ++ch) {
                        const float dv = dcur.at(b, ch, 0, 0) * scale;
                        float* dxp = &dx.at(b, ch, 0, 0);
                        for (int j = 0; j < hw; ++j) dxp[j] = dv;
                    }
                }
            }
        } else if (std::holds_alternative<FlattenSpec>(layers_[i])) {
            if (need_dx) dx = Tensor(std::vector<int>{B, in_shape[0], in_shape[1], in_shape[2]}, dcur.data);
        } else if (std::holds_alternative<DenseSpec>(layers_[i])) {
            const int in_f = in_shape[0];
            const int out_f = std::get<DenseSpec>(layers_[i]).out_features;
            const Tensor& w = param(base + "weight");
            if (trace.want_param_grads) {
                Tensor& dw = param(base + "weight");
                Tensor& db = param(base + "bias");
                cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, out_f, in_f, B, 1.0f,
                            dcur.data.data(), out_f, x_in.data.data(), in_f, 1.0f, dw.grad.data(), in_f);
                for (int j = 0; j < out_f; ++j) {
                    double s = 0.0;
                    for (int b = 0; b < B; ++b) s += dcur.at(b, j);
                    db.grad[static_cast<std::size_t>(j)] += static_cast<float>(s);
                }
            }
            if (need_dx) {
                dx = Tensor({B, in_f});
                cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, B, in_f, out_f, 1.0f,
                            dcur.data.data(), out_f, w.data.data(), in_f, 0.0f, dx.data.data(), in_f);
            }
        }
        dcur = std::move(dx);
    }

    if (trace.want_input_grad) return dcur;
    return Tensor();
}

} // namespace bdkd
