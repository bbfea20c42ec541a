#include "bdkd/geoshapes.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bdkd/png_io.hpp"

namespace bdkd {
namespace {

namespace fs = std::filesystem;

const char* kShapeNames[5] = {"disk", "square", "triangle", "cross", "ring"};

struct Vec3 {
    float r, g, b;
};

float color_dist(const Vec3& a, const Vec3& b) {
    const float dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
    return std::sqrt(dr * dr + dg * dg + db * db);
}

// signed distances in shape-local coordinates (shape fits in the unit disk)
float sdf_disk(float x, float y) { return std::sqrt(x * x + y * y) - 1.0f; }

float sdf_square(float x, float y) { return std::max(std::abs(x), std::abs(y)) - 0.82f; }

float sdf_triangle(float x, float y) {
    // intersection of three half-planes; circumradius 1, vertex up (-y)
    float d = -1e9f;
    for (int i = 0; i < 3; ++i) {
        const float ang = static_cast<float>(M_PI) * (0.5f + 2.0f * static_cast<float>(i) / 3.0f);
        d = std::max(d, x * std::cos(ang) + y * std::sin(ang) - 0.5f);
    }
    return d;
}

float sdf_cross(float x, float y) {
    const float ax = std::abs(x), ay = std::abs(y);
    const float bar = 0.34f;
    const float horiz = std::max(ax - 1.0f, ay - bar);
    const float vert = std::max(ax - bar, ay - 1.0f);
    return std::min(horiz, vert);
}

float sdf_ring(float x, float y) {
    return std::abs(std::sqrt(x * x + y * y) - 0.72f) - 0.28f;
}

float shape_sdf(int shape, float x, float y) {
    switch (shape) {
        case 0: return sdf_disk(x, y);
        case 1: return sdf_square(x, y);
        case 2: return sdf_triangle(x, y);
        case 3: return sdf_cross(x, y);
        default: return sdf_ring(x, y);
    }
}

} // namespace

std::string geoshapes_class_name(int class_id) {
    require(class_id >= 0 && class_id < kGeoshapesClasses, "geoshapes: class id out of range");
    return std::string(kShapeNames[class_id / 2]) + (class_id % 2 ? "-striped" : "-solid");
}

Tensor render_geoshape(int class_id, Rng& rng) {
    require(class_id >= 0 && class_id < kGeoshapesClasses, "geoshapes: class id out of range");
    const int shape = class_id / 2;
    const bool striped = class_id % 2;
    const int S = kGeoshapesSize;

    const float cx = static_cast<float>(rng.uniform(0.38, 0.62));
    const float cy = static_cast<float>(rng.uniform(0.38, 0.62));
    const float radius = static_cast<float>(rng.uniform(0.20, 0.32));
    const float theta = static_cast<float>(rng.uniform(0.0, 2.0 * M_PI));

    Vec3 bg{static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
            static_cast<float>(rng.uniform())};
    Vec3 fg;
    do {
        fg = Vec3{static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                  static_cast<float>(rng.uniform())};
    } while (color_dist(fg, bg) < 0.55f);

    // stripe bands in local x, wide enough to survive 32x32 rasterization
    const float stripe_freq = striped ? static_cast<float>(rng.uniform_int(2) + 2) : 0.0f;
    const float stripe_phase = striped ? static_cast<float>(rng.uniform()) : 0.0f;

    const float ct = std::cos(theta), st = std::sin(theta);
    Tensor img({3, S, S});
    const float sub[2] = {0.25f, 0.75f};
    for (int py = 0; py < S; ++py) {
        for (int px = 0; px < S; ++px) {
            float acc_r = 0.0f, acc_g = 0.0f, acc_b = 0.0f;
            for (int sy = 0; sy < 2; ++sy) {
                for (int sx = 0; sx < 2; ++sx) {
                    const float ix = (static_cast<float>(px) + sub[sx]) / S - cx;
                    const float iy = (static_cast<float>(py) + sub[sy]) / S - cy;
                    // rotate into the shape frame and normalize by the radius
                    const float lx = (ct * ix + st * iy) / radius;
                    const float ly = (-st * ix + ct * iy) / radius;
                    const Vec3* color = &bg;
                    if (shape_sdf(shape, lx, ly) < 0.0f) {
                        bool on = true;
                        if (striped) {
                            const float band = std::floor((lx + 8.0f) * stripe_freq + stripe_phase);
                            on = static_cast<std::int64_t>(band) % 2 == 0;
                        }
                        if (on) color = &fg;
                    }
                    acc_r += color->r;
                    acc_g += color->g;
                    acc_b += color->b;
                }
            }
            img.at(0, py, px) = acc_r * 0.25f;
            img.at(1, py, px) = acc_g * 0.25f;
            img.at(2, py, px) = acc_b * 0.25f;
        }
    }
    return img;
}

GeoshapesSplits generate_geoshapes(std::uint64_t seed, int train_per_class, int val_per_class,
                                   int test_per_class) {
    require(train_per_class >= 1 && val_per_class >= 0 && test_per_class >= 0,
            "generate_geoshapes: bad per-class counts");
    Rng rng(seed);
    GeoshapesSplits out;
    auto fill = [&rng](LabeledDataset& ds, int per_class) {
        ds.num_classes = kGeoshapesClasses;
        for (int c = 0; c < kGeoshapesClasses; ++c) {
            for (int i = 0; i < per_class; ++i) {
                ds.images.push_back(render_geoshape(c, rng));
                ds.labels.push_back(c);
            }
        }
    };
    fill(out.train, train_per_class);
    fill(out.val, val_per_class);
    fill(out.test, test_per_class);
    return out;
}

void save_labeled_dataset(const std::string& dir, const LabeledDataset& ds) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "labels.tsv", std::ios::trunc);
    require(manifest.good(), "save_labeled_dataset: cannot write labels.tsv in " + dir);
    manifest << "index\tlabel\n";
    for (int i = 0; i < ds.size(); ++i) {
        manifest << i << '\t' << ds.labels[static_cast<std::size_t>(i)] << '\n';
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", i);
        write_png_rgb((fs::path(dir) / name).string(), ds.images[static_cast<std::size_t>(i)]);
    }
    require(manifest.good(), "save_labeled_dataset: labels.tsv write failed in " + dir);
}

LabeledDataset load_labeled_dataset(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "labels.tsv");
    require(manifest.good(), "load_labeled_dataset: no labels.tsv in " + dir);
    std::string line;
    require(static_cast<bool>(std::getline(manifest, line)),
            "load_labeled_dataset: empty labels.tsv in " + dir);
    LabeledDataset ds;
    int expect = 0;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        int idx = -1, label = -1;
        ss >> idx >> label;
        require(idx == expect && label >= 0, "load_labeled_dataset: malformed row " + line);
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", expect);
        ds.images.push_back(read_png_rgb((fs::path(dir) / name).string()));
        ds.labels.push_back(label);
        ds.num_classes = std::max(ds.num_classes, label + 1);
        ++expect;
    }
    require(ds.size() > 0, "load_labeled_dataset: no rows in " + dir);
    return ds;
}

} // namespace bdkd
