#ifndef BDKD_CURATE_HPP
#define BDKD_CURATE_HPP

#include <string>
#include <vector>

#include "bdkd/model.hpp"
#include "bdkd/rng.hpp"
#include "bdkd/tensor.hpp"

namespace bdkd {

/// One distillation example: an image assigned a target class the teacher
/// does NOT predict for it (checked at construction).
struct Example {
    Tensor image; // [3,H,W] in [0,1]
    int target = -1;
    int provenance = -1;   // corpus index
    int teacher_pred = -1; // teacher argmax when the dataset was built
};

struct KdDataset {
    std::vector<Example> examples;
    std::vector<int> per_class_count;
    int num_classes = 0;
};

/// Teacher argmax over clean images, evaluated in batches. Predictions are
/// independent of the batch partitioning (eval mode).
std::vector<int> predict_all(Model& teacher, const std::vector<Tensor>& images, int batch_size);

/// Complement-class curation: examples assigned target c_i are drawn from the
/// classes the teacher predicts as something other than c_i. Per class, each
/// complement class contributes floor(N_i/(R-1)) examples without replacement;
/// the remainder comes from the not-yet-chosen complement union. A complement
/// class smaller than its quota is an error unless allow_fallback, in which
/// case its full membership is taken and the deficit rolls into the remainder
/// (with-replacement sampling plus a warning only if even the union runs dry).
/// Repeats across different target classes are permitted.
KdDataset build_kd_dataset(const std::vector<Tensor>& corpus_images, const std::vector<int>& preds,
                           int num_classes, const std::vector<int>& per_class, Rng& rng,
                           bool allow_fallback, std::vector<std::string>* warnings = nullptr);

struct VerifyReport {
    bool pass = false;
    std::vector<int> violations;      // example indices where teacher pred == target
    std::vector<int> per_class_found; // recounted histogram
    std::vector<int> mismatched_classes;
};

/// Recomputes predictions over the dataset and checks the construction
/// invariants: no example is classified as its own target, and per-class
/// counts match the declared N_i.
VerifyReport verify_dataset(Model& teacher, const KdDataset& ds);

/// kd_manifest.tsv columns: example_id, corpus_index, target,
/// teacher_pred_at_build. Pixels stay in the corpus archive.
void save_kd_manifest(const std::string& path, const KdDataset& ds);
KdDataset load_kd_dataset(const std::string& path, const std::vector<Tensor>& corpus_images);

} // namespace bdkd

#endif
