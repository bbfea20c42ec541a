#include "bdkd/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace bdkd {
namespace {

constexpr char kMagic[4] = {'B', 'D', 'K', 'D'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

struct Reader {
    std::string bytes;
    std::size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }
    void need(std::size_t n, const char* what) {
        require(pos + n <= bytes.size(), std::string("checkpoint: truncated while reading ") + what);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(bytes[pos++]);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint8_t>(bytes[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<std::uint8_t>(bytes[pos + static_cast<std::size_t>(i)]);
        pos += 4;
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string layer_line(const LayerSpec& spec) {
    std::ostringstream os;
    if (auto* c = std::get_if<Conv2dSpec>(&spec)) {
        os << "conv2d out=" << c->out_channels << " k=" << c->kernel << " s=" << c->stride
           << " p=" << c->pad;
    } else if (auto* b = std::get_if<BatchNorm2dSpec>(&spec)) {
        os << "batchnorm2d c=" << b->channels;
    } else if (std::holds_alternative<ReluSpec>(spec)) {
        os << "relu";
    } else if (auto* m = std::get_if<MaxPool2dSpec>(&spec)) {
        os << "maxpool2d k=" << m->kernel << " s=" << m->stride;
    } else if (std::holds_alternative<GlobalAvgPoolSpec>(spec)) {
        os << "avgpool-global";
    } else if (std::holds_alternative<FlattenSpec>(spec)) {
        os << "flatten";
    } else if (auto* d = std::get_if<DenseSpec>(&spec)) {
        os << "dense out=" << d->out_features;
    }
    return os.str();
}

int parse_kv(std::istringstream& is, const std::string& key, const std::string& line) {
    std::string tok;
    require(static_cast<bool>(is >> tok), "checkpoint: manifest line '" + line + "' missing " + key + "=");
    require(tok.rfind(key + "=", 0) == 0,
            "checkpoint: manifest line '" + line + "' expected " + key + "=, got '" + tok + "'");
    try {
        return std::stoi(tok.substr(key.size() + 1));
    } catch (const std::exception&) {
        throw ContractError("checkpoint: bad integer in manifest line '" + line + "'");
    }
}

LayerSpec parse_layer_line(const std::string& line) {
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "conv2d") {
        Conv2dSpec c;
        c.out_channels = parse_kv(is, "out", line);
        c.kernel = parse_kv(is, "k", line);
        c.stride = parse_kv(is, "s", line);
        c.pad = parse_kv(is, "p", line);
        return c;
    }
    if (kind == "batchnorm2d") {
        BatchNorm2dSpec b;
        b.channels = parse_kv(is, "c", line);
        return b;
    }
    if (kind == "relu") return ReluSpec{};
    if (kind == "maxpool2d") {
        MaxPool2dSpec m;
        m.kernel = parse_kv(is, "k", line);
        m.stride = parse_kv(is, "s", line);
        return m;
    }
    if (kind == "avgpool-global") return GlobalAvgPoolSpec{};
    if (kind == "flatten") return FlattenSpec{};
    if (kind == "dense") {
        DenseSpec d;
        d.out_features = parse_kv(is, "out", line);
        return d;
    }
    throw ContractError("checkpoint: unknown layer kind '" + kind + "' in manifest");
}

} // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    std::string manifest;
    {
        std::ostringstream os;
        os << "input";
        for (int d : model.input_shape()) os << ' ' << d;
        os << '\n';
        for (const LayerSpec& spec : model.layers()) os << layer_line(spec) << '\n';
        manifest = os.str();
    }

    std::string out;
    out.append(kMagic, 4);
    put_u16(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(manifest.size()));
    out += manifest;
    for (const auto& [name, p] : model.params()) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        out.push_back(static_cast<char>(p.rank()));
        for (int d : p.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (float f : p.data) put_f32(out, f);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "checkpoint: cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    require(f.good(), "checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    Reader r;
    {
        std::ifstream f(path, std::ios::binary);
        require(f.good(), "checkpoint: cannot open " + path);
        std::ostringstream buf;
        buf << f.rdbuf();
        r.bytes = buf.str();
    }

    const std::string magic = r.str(4, "magic");
    require(magic == std::string(kMagic, 4), "checkpoint: bad magic in " + path + " (not a BDKD checkpoint)");
    const std::uint16_t version = r.u16("version");
    require(version == kVersion,
            "checkpoint: unsupported BDKD version " + std::to_string(version) + " in " + path);

    const std::uint32_t mlen = r.u32("manifest length");
    std::istringstream manifest(r.str(mlen, "manifest"));

    std::vector<int> input_shape;
    std::vector<LayerSpec> layers;
    std::string line;
    bool first = true;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        if (first) {
            std::istringstream is(line);
            std::string tag;
            is >> tag;
            require(tag == "input", "checkpoint: manifest must start with the input shape");
            int d;
            while (is >> d) input_shape.push_back(d);
            first = false;
        } else {
            layers.push_back(parse_layer_line(line));
        }
    }
    require(!first, "checkpoint: empty manifest");

    Model model(std::move(input_shape), std::move(layers));

    std::size_t filled = 0;
    while (!r.eof()) {
        const std::uint32_t nlen = r.u32("parameter name length");
        const std::string name = r.str(nlen, "parameter name");
        const int rank = r.u8("parameter rank");
        std::vector<int> dims;
        for (int i = 0; i < rank; ++i) dims.push_back(static_cast<int>(r.u32("parameter dim")));
        Tensor& p = model.param(name); // throws on unknown name
        require(p.shape == dims, "checkpoint: shape mismatch for " + name);
        for (float& v : p.data) v = r.f32("parameter data");
        ++filled;
    }
    require(filled == model.params().size(),
            "checkpoint: " + path + " holds " + std::to_string(filled) + " parameters, model needs " +
                std::to_string(model.params().size()));

    model.set_mode(Mode::eval);
    return model;
}

} // namespace bdkd
