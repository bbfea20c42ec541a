#include "bdkd/curate.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "bdkd/common.hpp"

namespace bdkd {

std::vector<int> predict_all(Model& teacher, const std::vector<Tensor>& images, int batch_size) {
    require(batch_size >= 1, "predict_all: batch_size must be positive");
    require(teacher.mode() == Mode::eval, "predict_all: teacher must be in eval mode");
    std::vector<int> preds;
    preds.reserve(images.size());
    const int n = static_cast<int>(images.size());
    for (int start = 0; start < n; start += batch_size) {
        const int count = std::min(batch_size, n - start);
        std::vector<Tensor> chunk(images.begin() + start, images.begin() + start + count);
        Tensor batch = stack(chunk);
        Tensor logits = teacher.forward(batch);
        for (int row : Model::argmax_rows(logits)) preds.push_back(row);
    }
    return preds;
}

namespace {

// Draws k distinct elements from pool (uniformly, in rng draw order).
std::vector<int> draw_from(const std::vector<int>& pool, int k, Rng& rng) {
    std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(pool.size()), k);
    std::vector<int> out;
    out.reserve(picks.size());
    for (int p : picks) out.push_back(pool[static_cast<std::size_t>(p)]);
    return out;
}

} // namespace

KdDataset build_kd_dataset(const std::vector<Tensor>& corpus_images, const std::vector<int>& preds,
                           int num_classes, const std::vector<int>& per_class, Rng& rng,
                           bool allow_fallback, std::vector<std::string>* warnings) {
    require(num_classes >= 2, "build_kd_dataset: need at least two classes");
    require(preds.size() == corpus_images.size(),
            "build_kd_dataset: one prediction per corpus image required");
    require(per_class.size() == static_cast<std::size_t>(num_classes),
            "build_kd_dataset: per_class must have one count per class");
    for (int c : per_class) require(c >= 1, "build_kd_dataset: per-class counts must be positive");

    // Bucket corpus indices by teacher prediction, ascending within each bucket.
    std::vector<std::vector<int>> by_pred(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i];
        require(p >= 0 && p < num_classes, "build_kd_dataset: prediction out of label range");
        by_pred[static_cast<std::size_t>(p)].push_back(static_cast<int>(i));
    }

    KdDataset ds;
    ds.num_classes = num_classes;
    ds.per_class_count = per_class;

    for (int target = 0; target < num_classes; ++target) {
        const int want = per_class[static_cast<std::size_t>(target)];
        const int quota = want / (num_classes - 1);
        std::vector<int> chosen;
        chosen.reserve(static_cast<std::size_t>(want));
        std::vector<char> taken(corpus_images.size(), 0);

        for (int source = 0; source < num_classes; ++source) {
            if (source == target) continue;
            const auto& bucket = by_pred[static_cast<std::size_t>(source)];
            if (static_cast<int>(bucket.size()) < quota) {
                if (!allow_fallback) {
                    std::ostringstream msg;
                    msg << "build_kd_dataset: class " << source << " has only " << bucket.size()
                        << " corpus images but the quota for target " << target << " is " << quota;
                    throw ContractError(msg.str());
                }
                for (int idx : bucket) {
                    chosen.push_back(idx);
                    taken[static_cast<std::size_t>(idx)] = 1;
                }
                continue; // deficit rolls into the remainder draw below
            }
            for (int idx : draw_from(bucket, quota, rng)) {
                chosen.push_back(idx);
                taken[static_cast<std::size_t>(idx)] = 1;
            }
        }

        // Remainder: draw from complement examples not already chosen for this class.
        int need = want - static_cast<int>(chosen.size());
        if (need > 0) {
            std::vector<int> leftover;
            for (std::size_t i = 0; i < corpus_images.size(); ++i) {
                if (preds[i] != target && !taken[i]) leftover.push_back(static_cast<int>(i));
            }
            const int take = std::min(need, static_cast<int>(leftover.size()));
            for (int idx : draw_from(leftover, take, rng)) chosen.push_back(idx);
            need -= take;
        }
        if (need > 0) {
            // Complement union exhausted: only the fallback path can get here,
            // because quotas always fit when fallback is off.
            std::vector<int> complement;
            for (std::size_t i = 0; i < corpus_images.size(); ++i) {
                if (preds[i] != target) complement.push_back(static_cast<int>(i));
            }
            require(!complement.empty(), "build_kd_dataset: no complement examples exist for "
                                         "target class " +
                                             std::to_string(target));
            if (warnings) {
                std::ostringstream msg;
                msg << "target class " << target << ": complement pool exhausted, sampling " << need
                    << " examples with replacement";
                warnings->push_back(msg.str());
            }
            for (int k = 0; k < need; ++k) {
                chosen.push_back(complement[static_cast<std::size_t>(
                    rng.uniform_int(static_cast<int>(complement.size())))]);
            }
        }

        for (int idx : chosen) {
            Example ex;
            ex.image = corpus_images[static_cast<std::size_t>(idx)];
            ex.image.drop_grad();
            ex.target = target;
            ex.provenance = idx;
            ex.teacher_pred = preds[static_cast<std::size_t>(idx)];
            ds.examples.push_back(std::move(ex));
        }
    }
    return ds;
}

VerifyReport verify_dataset(Model& teacher, const KdDataset& ds) {
    require(teacher.mode() == Mode::eval, "verify_dataset: teacher must be in eval mode");
    VerifyReport report;
    report.per_class_found.assign(static_cast<std::size_t>(ds.num_classes), 0);

    std::vector<Tensor> images;
    images.reserve(ds.examples.size());
    for (const auto& ex : ds.examples) images.push_back(ex.image);
    const std::vector<int> preds = predict_all(teacher, images, 64);

    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        const int t = ds.examples[i].target;
        require(t >= 0 && t < ds.num_classes, "verify_dataset: target out of range");
        report.per_class_found[static_cast<std::size_t>(t)]++;
        if (preds[i] == t) report.violations.push_back(static_cast<int>(i));
    }
    for (int c = 0; c < ds.num_classes; ++c) {
        if (report.per_class_found[static_cast<std::size_t>(c)] !=
            ds.per_class_count[static_cast<std::size_t>(c)]) {
            report.mismatched_classes.push_back(c);
        }
    }
    report.pass = report.violations.empty() && report.mismatched_classes.empty();
    return report;
}

void save_kd_manifest(const std::string& path, const KdDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "save_kd_manifest: cannot open " + path);
    out << "example_id\tcorpus_index\ttarget\tteacher_pred_at_build\n";
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        const auto& ex = ds.examples[i];
        out << i << '\t' << ex.provenance << '\t' << ex.target << '\t' << ex.teacher_pred << '\n';
    }
    require(static_cast<bool>(out), "save_kd_manifest: write failed for " + path);
}

KdDataset load_kd_dataset(const std::string& path, const std::vector<Tensor>& corpus_images) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "load_kd_dataset: cannot open " + path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "load_kd_dataset: empty manifest " + path);

    KdDataset ds;
    int max_target = -1;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        long long id = 0, corpus_index = 0, target = 0, pred = 0;
        fields >> id >> corpus_index >> target >> pred;
        require(!fields.fail(), "load_kd_dataset: malformed row in " + path);
        require(id == static_cast<long long>(row), "load_kd_dataset: example ids must be contiguous");
        require(corpus_index >= 0 && corpus_index < static_cast<long long>(corpus_images.size()),
                "load_kd_dataset: corpus index out of range in " + path);
        require(target >= 0, "load_kd_dataset: negative target in " + path);
        Example ex;
        ex.image = corpus_images[static_cast<std::size_t>(corpus_index)];
        ex.image.drop_grad();
        ex.target = static_cast<int>(target);
        ex.provenance = static_cast<int>(corpus_index);
        ex.teacher_pred = static_cast<int>(pred);
        max_target = std::max(max_target, ex.target);
        ds.examples.push_back(std::move(ex));
        ++row;
    }
    require(!ds.examples.empty(), "load_kd_dataset: no examples in " + path);
    ds.num_classes = max_target + 1;
    ds.per_class_count.assign(static_cast<std::size_t>(ds.num_classes), 0);
    for (const auto& ex : ds.examples) ds.per_class_count[static_cast<std::size_t>(ex.target)]++;
    return ds;
}

} // namespace bdkd
