#include "bdkd/corpus.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bdkd/png_io.hpp"

namespace bdkd {
namespace {

namespace fs = std::filesystem;

std::string image_name(int index, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%05d.%s", index, ext);
    return buf;
}

std::string format_float(float v) {
    char buf[48];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

float parse_float(const std::string& s, const char* what) {
    float v = 0.0f;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && end == s.data() + s.size(),
            std::string("load_corpus: bad ") + what + " value '" + s + "'");
    return v;
}

} // namespace

FilterReport filter_image(const Tensor& image) {
    require(image.rank() == 3 && image.dim(0) == 3, "filter_image: expected [3,H,W] image");
    const int hw = image.dim(1) * image.dim(2);

    // 32 levels per channel -> 15-bit color keys
    std::vector<int> counts(32 * 32 * 32, 0);
    for (int j = 0; j < hw; ++j) {
        int key = 0;
        for (int ch = 0; ch < 3; ++ch) {
            const float x = image.data[static_cast<std::size_t>(ch) * hw + j];
            require(x >= 0.0f && x <= 1.0f, "filter_image: pixel outside [0,1]");
            const int q = std::min(31, static_cast<int>(x * 32.0f));
            key = (key << 5) | q;
        }
        ++counts[static_cast<std::size_t>(key)];
    }

    int unique = 0, top = 0;
    for (int c : counts) {
        if (c > 0) ++unique;
        top = std::max(top, c);
    }

    FilterReport rep;
    rep.unique_colors = unique;
    rep.foreground_frac = 1.0 - static_cast<double>(top) / hw;
    if (unique <= 1)
        rep.reason = FilterReport::Reason::constant;
    else if (unique <= 2)
        rep.reason = FilterReport::Reason::two_color;
    else if (static_cast<double>(top) > 0.95 * hw)
        rep.reason = FilterReport::Reason::sparse;
    return rep;
}

std::vector<CorpusImage> build_corpus(Rng& rng, int count, int H, int W, int max_depth,
                                      CorpusBuildStats* stats) {
    require(count >= 1, "build_corpus: count must be >= 1");
    std::vector<CorpusImage> kept;
    kept.reserve(static_cast<std::size_t>(count));

    CorpusBuildStats local;
    constexpr int kWindow = 10000;
    int window_attempts = 0, window_kept = 0;
    while (static_cast<int>(kept.size()) < count) {
        ShaderProgram prog = random_program(rng, max_depth);
        Tensor img = render_shader(prog, H, W);
        ++window_attempts;
        ++local.attempts;
        const FilterReport rep = filter_image(img);
        switch (rep.reason) {
        case FilterReport::Reason::none:
            ++window_kept;
            ++local.kept;
            kept.push_back(CorpusImage{std::move(img), print_shader(prog), prog.seed_params});
            break;
        case FilterReport::Reason::constant: ++local.discarded_constant; break;
        case FilterReport::Reason::two_color: ++local.discarded_two_color; break;
        case FilterReport::Reason::sparse: ++local.discarded_sparse; break;
        }
        if (window_attempts == kWindow) {
            require(window_kept >= kWindow / 100,
                    "build_corpus: survival rate collapsed (" + std::to_string(window_kept) + "/" +
                        std::to_string(kWindow) + " kept); generator weights look degenerate");
            window_attempts = window_kept = 0;
        }
    }
    if (stats) *stats = local;
    return kept;
}

void save_corpus(const std::string& dir, const std::vector<CorpusImage>& corpus, bool raw_sidecar) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.tsv", std::ios::trunc);
    require(manifest.good(), "save_corpus: cannot write manifest in " + dir);
    manifest << "index\tsource\ts0\ts1\ts2\ts3\n";
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const CorpusImage& ci = corpus[i];
        manifest << i << '\t' << ci.source;
        for (float sp : ci.seed_params) manifest << '\t' << format_float(sp);
        manifest << '\n';
        const fs::path png = fs::path(dir) / image_name(static_cast<int>(i), "png");
        write_png_rgb(png.string(), ci.image);
        if (raw_sidecar) {
            const fs::path f32 = fs::path(dir) / image_name(static_cast<int>(i), "f32");
            write_f32_image(f32.string(), ci.image);
        }
    }
    require(manifest.good(), "save_corpus: manifest write failed in " + dir);
}

std::vector<CorpusImage> load_corpus(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "manifest.tsv");
    require(manifest.good(), "load_corpus: no manifest.tsv in " + dir);
    std::string line;
    require(static_cast<bool>(std::getline(manifest, line)), "load_corpus: empty manifest in " + dir);

    std::vector<CorpusImage> corpus;
    int expect = 0;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        require(cols.size() == 6, "load_corpus: manifest row with " + std::to_string(cols.size()) +
                                      " columns (want 6)");
        require(std::stoi(cols[0]) == expect,
                "load_corpus: manifest indices not contiguous at row " + std::to_string(expect));

        CorpusImage ci;
        ci.source = cols[1];
        for (int k = 0; k < 4; ++k)
            ci.seed_params[static_cast<std::size_t>(k)] =
                parse_float(cols[static_cast<std::size_t>(2 + k)], "seed param");

        const fs::path f32 = fs::path(dir) / image_name(expect, "f32");
        if (fs::exists(f32)) {
            ci.image = read_f32_image(f32.string());
        } else {
            ci.image = read_png_rgb((fs::path(dir) / image_name(expect, "png")).string());
        }
        corpus.push_back(std::move(ci));
        ++expect;
    }
    require(!corpus.empty(), "load_corpus: manifest lists no images in " + dir);
    return corpus;
}

} // namespace bdkd
