#ifndef BDKD_GEOSHAPES_HPP
#define BDKD_GEOSHAPES_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bdkd/rng.hpp"
#include "bdkd/tensor.hpp"

namespace bdkd {

/// In-memory labeled image set.
struct LabeledDataset {
    std::vector<Tensor> images; // each [3,H,W] in [0,1]
    std::vector<int> labels;
    int num_classes = 0;

    int size() const { return static_cast<int>(images.size()); }
};

/// Built-in benchmark task: 32x32 RGB, 10 classes = {disk, square, triangle,
/// cross, ring} x {solid, striped}, randomized position/scale/rotation/colors.
/// Class id = shape*2 + striped.
constexpr int kGeoshapesClasses = 10;
constexpr int kGeoshapesSize = 32;

std::string geoshapes_class_name(int class_id);

/// One image of the given class; consumes a deterministic number of rng draws
/// per call pattern (resampling low-contrast colors draws more).
Tensor render_geoshape(int class_id, Rng& rng);

struct GeoshapesSplits {
    LabeledDataset train, val, test;
};

/// Deterministic from the seed; examples are generated split-major then
/// class-major, so any (seed, counts) pair names one exact dataset.
GeoshapesSplits generate_geoshapes(std::uint64_t seed, int train_per_class = 500,
                                   int val_per_class = 100, int test_per_class = 200);

/// DIR/{train,val,test}/: labels.tsv (index, label) plus img_NNNNN.png files.
void save_labeled_dataset(const std::string& dir, const LabeledDataset& ds);
LabeledDataset load_labeled_dataset(const std::string& dir);

} // namespace bdkd

#endif
