#include "bdkd/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "bdkd/common.hpp"

namespace bdkd {
namespace {

constexpr double kPi = 3.14159265358979323846;

float clamp01(float x) { return std::min(1.0f, std::max(0.0f, x)); }

void check_image(const Tensor& image, const char* who) {
    require(image.rank() == 3 && image.dim(0) == 3, std::string(who) + ": expected a [3,H,W] image");
    require(image.dim(1) >= 2 && image.dim(2) >= 2, std::string(who) + ": image too small");
}

float sample_replicate(const Tensor& image, int c, float y, float x) {
    const int h = image.dim(1), w = image.dim(2);
    x = std::min(static_cast<float>(w - 1), std::max(0.0f, x));
    y = std::min(static_cast<float>(h - 1), std::max(0.0f, y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const float fx = x - static_cast<float>(x0);
    const float fy = y - static_cast<float>(y0);
    const float top = image.at(c, y0, x0) * (1.0f - fx) + image.at(c, y0, x1) * fx;
    const float bot = image.at(c, y1, x0) * (1.0f - fx) + image.at(c, y1, x1) * fx;
    return top * (1.0f - fy) + bot * fy;
}

// Inverse-maps every output pixel through src = A*(out-center)+center+shift.
Tensor warp_affine(const Tensor& image, float a00, float a01, float a10, float a11, float shift_x,
                   float shift_y) {
    const int h = image.dim(1), w = image.dim(2);
    const float cx = 0.5f * static_cast<float>(w - 1);
    const float cy = 0.5f * static_cast<float>(h - 1);
    Tensor out(image.shape);
    for (int c = 0; c < 3; ++c) {
        for (int oy = 0; oy < h; ++oy) {
            for (int ox = 0; ox < w; ++ox) {
                const float dx = static_cast<float>(ox) - cx;
                const float dy = static_cast<float>(oy) - cy;
                const float sx = a00 * dx + a01 * dy + cx + shift_x;
                const float sy = a10 * dx + a11 * dy + cy + shift_y;
                out.at(c, oy, ox) = sample_replicate(image, c, sy, sx);
            }
        }
    }
    return out;
}

Tensor op_auto_contrast(const Tensor& image, float f) {
    Tensor out = image;
    const int hw = image.dim(1) * image.dim(2);
    for (int c = 0; c < 3; ++c) {
        const float* px = image.data.data() + static_cast<std::ptrdiff_t>(c) * hw;
        const auto [lo_it, hi_it] = std::minmax_element(px, px + hw);
        const float lo = *lo_it, hi = *hi_it;
        if (hi - lo < 1e-8f) continue;
        const float scale = 1.0f / (hi - lo);
        float* po = out.data.data() + static_cast<std::ptrdiff_t>(c) * hw;
        for (int i = 0; i < hw; ++i) {
            const float stretched = (px[i] - lo) * scale;
            po[i] = clamp01(px[i] + f * (stretched - px[i]));
        }
    }
    return out;
}

Tensor op_equalize(const Tensor& image, float f) {
    Tensor out = image;
    const int hw = image.dim(1) * image.dim(2);
    for (int c = 0; c < 3; ++c) {
        const float* px = image.data.data() + static_cast<std::ptrdiff_t>(c) * hw;
        std::array<int, 256> hist{};
        for (int i = 0; i < hw; ++i) {
            hist[static_cast<std::size_t>(std::lround(clamp01(px[i]) * 255.0f))]++;
        }
        std::array<int, 256> cdf{};
        int running = 0, cdf_min = -1;
        for (int v = 0; v < 256; ++v) {
            running += hist[static_cast<std::size_t>(v)];
            cdf[static_cast<std::size_t>(v)] = running;
            if (cdf_min < 0 && hist[static_cast<std::size_t>(v)] > 0) cdf_min = running;
        }
        if (cdf_min < 0 || hw == cdf_min) continue; // constant channel
        const float denom = static_cast<float>(hw - cdf_min);
        float* po = out.data.data() + static_cast<std::ptrdiff_t>(c) * hw;
        for (int i = 0; i < hw; ++i) {
            const int v = static_cast<int>(std::lround(clamp01(px[i]) * 255.0f));
            const float eq = static_cast<float>(cdf[static_cast<std::size_t>(v)] - cdf_min) / denom;
            po[i] = clamp01(px[i] + f * (eq - px[i]));
        }
    }
    return out;
}

Tensor op_posterize(const Tensor& image, float f) {
    const int bits = static_cast<int>(std::lround(8.0f - 4.0f * f));
    if (bits >= 8) return image;
    const int mask = 0xFF << (8 - bits);
    Tensor out = image;
    for (float& x : out.data) {
        const int v = static_cast<int>(std::lround(clamp01(x) * 255.0f)) & mask;
        x = static_cast<float>(v) / 255.0f;
    }
    return out;
}

Tensor op_solarize(const Tensor& image, float f) {
    const float threshold = 1.0f - f;
    Tensor out = image;
    for (float& x : out.data) {
        if (x > threshold) x = 1.0f - x;
    }
    return out;
}

float luminance(const Tensor& image, int hw, int i) {
    return 0.299f * image.data[static_cast<std::size_t>(i)] +
           0.587f * image.data[static_cast<std::size_t>(hw + i)] +
           0.114f * image.data[static_cast<std::size_t>(2 * hw + i)];
}

Tensor op_color_jitter(const Tensor& image, float f, Rng& rng) {
    const int variant = rng.uniform_int(3);
    const float sign = rng.bernoulli(0.5) ? 1.0f : -1.0f;
    const float factor = 1.0f + sign * 0.9f * f;
    const int hw = image.dim(1) * image.dim(2);
    Tensor out = image;
    if (variant == 0) { // brightness
        for (float& x : out.data) x = clamp01(x * factor);
    } else if (variant == 1) { // contrast about the mean luminance
        double mean = 0.0;
        for (int i = 0; i < hw; ++i) mean += luminance(image, hw, i);
        const float pivot = static_cast<float>(mean / hw);
        for (float& x : out.data) x = clamp01(pivot + (x - pivot) * factor);
    } else { // saturation toward per-pixel gray
        for (int i = 0; i < hw; ++i) {
            const float gray = luminance(image, hw, i);
            for (int c = 0; c < 3; ++c) {
                float& x = out.data[static_cast<std::size_t>(c * hw + i)];
                x = clamp01(gray + (x - gray) * factor);
            }
        }
    }
    return out;
}

Tensor op_sharpness(const Tensor& image, float f, Rng& rng) {
    const float sign = rng.bernoulli(0.5) ? 1.0f : -1.0f;
    const float factor = 1.0f + sign * 0.9f * f;
    const int h = image.dim(1), w = image.dim(2);
    Tensor out = image;
    // 3x3 smoothing kernel (center-weighted); border pixels keep their value.
    for (int c = 0; c < 3; ++c) {
        for (int y = 1; y < h - 1; ++y) {
            for (int x = 1; x < w - 1; ++x) {
                float acc = 0.0f;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const float wgt = (dy == 0 && dx == 0) ? 5.0f : 1.0f;
                        acc += wgt * image.at(c, y + dy, x + dx);
                    }
                }
                const float smooth = acc / 13.0f;
                out.at(c, y, x) = clamp01(smooth + (image.at(c, y, x) - smooth) * factor);
            }
        }
    }
    return out;
}

Tensor op_rotate(const Tensor& image, float f, Rng& rng) {
    const float sign = rng.bernoulli(0.5) ? 1.0f : -1.0f;
    const float theta = sign * f * static_cast<float>(30.0 * kPi / 180.0);
    const float ct = std::cos(theta), st = std::sin(theta);
    return warp_affine(image, ct, -st, st, ct, 0.0f, 0.0f);
}

Tensor op_shear(const Tensor& image, float f, bool horizontal, Rng& rng) {
    const float sign = rng.bernoulli(0.5) ? 1.0f : -1.0f;
    const float k = sign * f * 0.3f;
    if (horizontal) return warp_affine(image, 1.0f, k, 0.0f, 1.0f, 0.0f, 0.0f);
    return warp_affine(image, 1.0f, 0.0f, k, 1.0f, 0.0f, 0.0f);
}

Tensor op_translate(const Tensor& image, float f, bool horizontal, Rng& rng) {
    const float sign = rng.bernoulli(0.5) ? 1.0f : -1.0f;
    const float extent = static_cast<float>(horizontal ? image.dim(2) : image.dim(1));
    const float shift = sign * f * 0.3f * extent;
    if (horizontal) return warp_affine(image, 1.0f, 0.0f, 0.0f, 1.0f, shift, 0.0f);
    return warp_affine(image, 1.0f, 0.0f, 0.0f, 1.0f, 0.0f, shift);
}

// Separable gaussian blur over a [H,W] field with border replication.
void gaussian_blur(std::vector<float>& field, int h, int w, float sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0f * sigma)));
    std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (static_cast<double>(i) * i) / (static_cast<double>(sigma) * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
        total += v;
    }
    for (float& k : kernel) k = static_cast<float>(k / total);

    std::vector<float> tmp(field.size());
    auto clampi = [](int v, int n) { return std::min(n - 1, std::max(0, v)); };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       field[static_cast<std::size_t>(y * w + clampi(x + i, w))];
            }
            tmp[static_cast<std::size_t>(y * w + x)] = acc;
        }
    }
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       tmp[static_cast<std::size_t>(clampi(y + i, h) * w + x)];
            }
            field[static_cast<std::size_t>(y * w + x)] = acc;
        }
    }
}

} // namespace

AugmentLevel parse_augment_level(const std::string& name) {
    if (name == "none") return AugmentLevel::none;
    if (name == "minimal") return AugmentLevel::minimal;
    if (name == "standard") return AugmentLevel::standard;
    throw ContractError("unknown augmentation level '" + name + "' (expected none, minimal, or standard)");
}

std::string augment_level_name(AugmentLevel level) {
    switch (level) {
        case AugmentLevel::none: return "none";
        case AugmentLevel::minimal: return "minimal";
        case AugmentLevel::standard: return "standard";
    }
    throw ContractError("augment_level_name: invalid level");
}

Tensor rand_augment(const Tensor& image, int n, int m, Rng& rng) {
    check_image(image, "rand_augment");
    require(n >= 0, "rand_augment: n must be non-negative");
    require(m >= 0 && m <= 30, "rand_augment: magnitude must lie in [0, 30]");
    const float f = static_cast<float>(m) / 30.0f;
    Tensor out = image;
    out.drop_grad();
    for (int step = 0; step < n; ++step) {
        switch (rng.uniform_int(12)) {
            case 0: break; // identity
            case 1: out = op_auto_contrast(out, f); break;
            case 2: out = op_equalize(out, f); break;
            case 3: out = op_posterize(out, f); break;
            case 4: out = op_solarize(out, f); break;
            case 5: out = op_color_jitter(out, f, rng); break;
            case 6: out = op_sharpness(out, f, rng); break;
            case 7: out = op_rotate(out, f, rng); break;
            case 8: out = op_shear(out, f, true, rng); break;
            case 9: out = op_shear(out, f, false, rng); break;
            case 10: out = op_translate(out, f, true, rng); break;
            case 11: out = op_translate(out, f, false, rng); break;
        }
    }
    return out;
}

Tensor elastic(const Tensor& image, float alpha, float sigma, Rng& rng) {
    check_image(image, "elastic");
    require(alpha >= 0.0f, "elastic: alpha must be non-negative");
    require(sigma > 0.0f, "elastic: sigma must be positive");
    const int h = image.dim(1), w = image.dim(2);
    std::vector<float> dx(static_cast<std::size_t>(h) * w), dy(dx.size());
    for (float& v : dx) v = rng.uniform(-1.0f, 1.0f);
    for (float& v : dy) v = rng.uniform(-1.0f, 1.0f);
    gaussian_blur(dx, h, w, sigma);
    gaussian_blur(dy, h, w, sigma);

    Tensor out(image.shape);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                out.at(c, y, x) = sample_replicate(image, c, static_cast<float>(y) + alpha * dy[i],
                                                   static_cast<float>(x) + alpha * dx[i]);
            }
        }
    }
    return out;
}

Tensor flip_invert_crop(const Tensor& image, float p_flip, float p_invert, int crop_pad, Rng& rng) {
    check_image(image, "flip_invert_crop");
    require(p_flip >= 0.0f && p_flip <= 1.0f, "flip_invert_crop: p_flip must lie in [0, 1]");
    require(p_invert >= 0.0f && p_invert <= 1.0f, "flip_invert_crop: p_invert must lie in [0, 1]");
    const int h = image.dim(1), w = image.dim(2);
    require(crop_pad >= 0 && crop_pad <= std::min(h, w),
            "flip_invert_crop: crop_pad must lie in [0, min(H, W)]");

    Tensor out = image;
    out.drop_grad();
    if (rng.bernoulli(p_flip)) {
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w / 2; ++x) std::swap(out.at(c, y, x), out.at(c, y, w - 1 - x));
            }
        }
    }
    if (rng.bernoulli(p_invert)) {
        for (float& x : out.data) x = 1.0f - x;
    }
    if (crop_pad > 0) {
        const int oy = rng.uniform_int(2 * crop_pad + 1);
        const int ox = rng.uniform_int(2 * crop_pad + 1);
        auto reflect = [](int i, int n) {
            if (i < 0) return -i - 1;
            if (i >= n) return 2 * n - 1 - i;
            return i;
        };
        Tensor cropped(image.shape);
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < h; ++y) {
                const int sy = reflect(y + oy - crop_pad, h);
                for (int x = 0; x < w; ++x) {
                    cropped.at(c, y, x) = out.at(c, sy, reflect(x + ox - crop_pad, w));
                }
            }
        }
        out = std::move(cropped);
    }
    return out;
}

Tensor mix_images(const Tensor& a, const Tensor& b, float lambda) {
    require(a.same_shape(b), "mix_images: images must share one shape");
    require(lambda >= 0.0f && lambda <= 1.0f, "mix_images: lambda must lie in [0, 1]");
    Tensor out(a.shape);
    for (std::size_t k = 0; k < a.data.size(); ++k) {
        out.data[k] = lambda * a.data[k] + (1.0f - lambda) * b.data[k];
    }
    return out;
}

int mixup_target(float lambda, int target_i, int target_j) {
    return lambda >= 0.5f ? target_i : target_j;
}

std::vector<MixedExample> mixup_batch(const std::vector<Example>& batch, Rng& rng) {
    require(batch.size() >= 2, "mixup_batch: need at least two examples to pair");
    const int n = static_cast<int>(batch.size());
    std::vector<MixedExample> out;
    out.reserve(batch.size());
    for (int i = 0; i < n; ++i) {
        const float lambda = static_cast<float>(rng.uniform());
        int j = rng.uniform_int(n - 1);
        if (j >= i) ++j;
        MixedExample mixed;
        mixed.image = mix_images(batch[static_cast<std::size_t>(i)].image,
                                 batch[static_cast<std::size_t>(j)].image, lambda);
        mixed.target = mixup_target(lambda, batch[static_cast<std::size_t>(i)].target,
                                    batch[static_cast<std::size_t>(j)].target);
        mixed.lambda = lambda;
        mixed.partner = j;
        out.push_back(std::move(mixed));
    }
    return out;
}

Example augment_pipeline(const Example& example, const AugmentConfig& config, Rng& rng) {
    Example out = example;
    out.image.drop_grad();
    switch (config.level) {
        case AugmentLevel::none:
            break;
        case AugmentLevel::minimal:
            out.image = flip_invert_crop(out.image, config.p_flip, 0.0f, config.pad, rng);
            break;
        case AugmentLevel::standard:
            out.image = rand_augment(out.image, config.rand_n, config.rand_m, rng);
            out.image = elastic(out.image, config.elastic_alpha, config.elastic_sigma, rng);
            out.image = flip_invert_crop(out.image, config.p_flip, config.p_invert, config.pad, rng);
            break;
    }
    return out;
}

} // namespace bdkd
