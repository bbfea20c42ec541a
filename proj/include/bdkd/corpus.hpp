#ifndef BDKD_CORPUS_HPP
#define BDKD_CORPUS_HPP

#include <array>
#include <string>
#include <vector>

#include "bdkd/rng.hpp"
#include "bdkd/shader.hpp"
#include "bdkd/tensor.hpp"

namespace bdkd {

/// Outcome of the degenerate-image filter.
struct FilterReport {
    enum class Reason { none, constant, two_color, sparse };
    Reason reason = Reason::none;
    bool keep() const { return reason == Reason::none; }
    int unique_colors = 0;       // after 32-level per-channel quantization
    double foreground_frac = 0.0; // fraction of pixels not in the dominant color
};

/// Quantizes each channel to 32 levels and rejects images that are constant
/// (1 color), two-color (<= 2), or sparse (dominant color > 95% of pixels).
FilterReport filter_image(const Tensor& image);

struct CorpusImage {
    Tensor image; // [3,H,W] in [0,1]
    std::string source;
    std::array<float, 4> seed_params{};
};

struct CorpusBuildStats {
    int attempts = 0;
    int kept = 0;
    int discarded_constant = 0;
    int discarded_two_color = 0;
    int discarded_sparse = 0;
};

/// Samples random programs, renders, filters, and keeps going until `count`
/// images survive. Aborts if fewer than 1% of a 10,000-attempt window pass the
/// filter (a sign the generator has degenerated).
std::vector<CorpusImage> build_corpus(Rng& rng, int count, int H, int W, int max_depth,
                                      CorpusBuildStats* stats = nullptr);

/// Archive layout: DIR/manifest.tsv with columns index, source, s0..s3, plus
/// img_NNNNN.png per image and (optionally) a lossless img_NNNNN.f32 sidecar.
void save_corpus(const std::string& dir, const std::vector<CorpusImage>& corpus, bool raw_sidecar);

/// Loads an archive; pixel data comes from the f32 sidecar when present,
/// otherwise from the 8-bit PNG.
std::vector<CorpusImage> load_corpus(const std::string& dir);

} // namespace bdkd

#endif
