#ifndef BDKD_AUGMENT_HPP
#define BDKD_AUGMENT_HPP

#include <string>
#include <vector>

#include "bdkd/curate.hpp"
#include "bdkd/rng.hpp"
#include "bdkd/tensor.hpp"

namespace bdkd {

enum class AugmentLevel { none, minimal, standard };

AugmentLevel parse_augment_level(const std::string& name);
std::string augment_level_name(AugmentLevel level);

struct AugmentConfig {
    AugmentLevel level = AugmentLevel::standard;
    int rand_n = 4;        // ops applied per image
    int rand_m = 14;       // magnitude on the 0..30 scale
    int pad = 4;           // reflection-pad border before the random crop
    float p_flip = 0.5f;
    float p_invert = 0.5f;
    float elastic_alpha = 8.0f;
    float elastic_sigma = 3.0f;
    bool mixup_enabled = true;
};

/// Applies n ops drawn uniformly from a 12-op pool (identity, auto-contrast,
/// equalize, posterize, solarize, color-jitter, sharpness, rotate, shear-x/y,
/// translate-x/y). Magnitude m scales every op's strength as m/30; m=0 leaves
/// the image unchanged to within 1e-6.
Tensor rand_augment(const Tensor& image, int n, int m, Rng& rng);

/// Elastic warp: a per-pixel uniform(-1,1) displacement field is gaussian-
/// smoothed with std sigma and scaled by alpha (pixels), then the image is
/// resampled bilinearly with border replication. alpha=0 is the identity.
Tensor elastic(const Tensor& image, float alpha, float sigma, Rng& rng);

/// Coin-flip horizontal mirror (p_flip), coin-flip value inversion x -> 1-x
/// (p_invert), then reflection-pad by crop_pad and take a uniform random crop
/// back to the original size. crop_pad=0 keeps the full frame.
Tensor flip_invert_crop(const Tensor& image, float p_flip, float p_invert, int crop_pad, Rng& rng);

struct MixedExample {
    Tensor image;
    int target = -1;
    float lambda = 0.0f;
    int partner = -1; // index of the secondary example within the batch
};

/// lambda*a + (1-lambda)*b, elementwise.
Tensor mix_images(const Tensor& a, const Tensor& b, float lambda);

/// Dominant-component target: lambda >= 0.5 keeps target_i (ties toward i).
int mixup_target(float lambda, int target_i, int target_j);

/// Pairs each example with a random partner (never itself) and blends
/// lambda*x_i + (1-lambda)*x_j with lambda ~ U(0,1). The target follows the
/// dominant component.
std::vector<MixedExample> mixup_batch(const std::vector<Example>& batch, Rng& rng);

/// Leveled composition. none: passthrough. minimal: flip -> crop.
/// standard: rand_augment -> elastic -> invert -> flip -> crop.
Example augment_pipeline(const Example& example, const AugmentConfig& config, Rng& rng);

} // namespace bdkd

#endif
