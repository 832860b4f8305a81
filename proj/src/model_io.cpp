#include "covdet/model_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace covdet {

namespace {

constexpr char kMagic[4] = {'C', 'V', 'D', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("truncated model file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

// 32-bit LE float serialization; assumes IEEE-754 floats on the host.
void put_f32(std::ostream& out, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(out, u);
}

float get_f32(std::istream& in) {
    const std::uint32_t u = get_u32(in);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool2: return "maxpool2";
        case LayerKind::Lrn: return "lrn";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& s) {
    if (s == "conv") return LayerKind::Conv;
    if (s == "relu") return LayerKind::Relu;
    if (s == "maxpool2") return LayerKind::MaxPool2;
    if (s == "lrn") return LayerKind::Lrn;
    throw std::runtime_error("unknown layer kind: " + s);
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
    nlohmann::json arch;
    arch["input_side"] = model.spec.input_side;
    arch["in_channels"] = model.spec.in_channels;
    arch["out_dim"] = model.spec.out_dim;
    arch["layers"] = nlohmann::json::array();
    for (const auto& l : model.spec.layers) {
        nlohmann::json jl;
        jl["kind"] = layer_kind_name(l.kind);
        if (l.kind == LayerKind::Conv) {
            jl["kh"] = l.kh;
            jl["kw"] = l.kw;
            jl["out_channels"] = l.out_channels;
            jl["stride"] = l.stride;
        }
        arch["layers"].push_back(jl);
    }
    nlohmann::json header;
    header["arch"] = arch;
    header["head"] = head_name(model.head);
    header["normalize_input"] = model.normalize_input;
    header["training"] = nlohmann::json::parse(model.meta_json, nullptr, false).is_discarded()
                             ? nlohmann::json::object()
                             : nlohmann::json::parse(model.meta_json);
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(kMagic, 4);
    put_u32(f, kVersion);
    put_u32(f, static_cast<std::uint32_t>(hs.size()));
    f.write(hs.data(), hs.size());
    for (const auto& c : model.params.conv) {
        for (double v : c.w) put_f32(f, static_cast<float>(v));
        for (double v : c.b) put_f32(f, static_cast<float>(v));
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a model file: " + path);
    const std::uint32_t version = get_u32(f);
    if (version != kVersion) throw std::runtime_error("unsupported model version");
    const std::uint32_t hlen = get_u32(f);
    std::string hs(hlen, '\0');
    f.read(hs.data(), hlen);
    if (!f) throw std::runtime_error("truncated model file");
    const nlohmann::json header = nlohmann::json::parse(hs);

    Model m;
    const auto& arch = header.at("arch");
    m.spec.input_side = arch.at("input_side").get<int>();
    m.spec.in_channels = arch.at("in_channels").get<int>();
    m.spec.out_dim = arch.at("out_dim").get<int>();
    for (const auto& jl : arch.at("layers")) {
        LayerSpec l;
        l.kind = layer_kind_from_name(jl.at("kind").get<std::string>());
        if (l.kind == LayerKind::Conv) {
            l.kh = jl.at("kh").get<int>();
            l.kw = jl.at("kw").get<int>();
            l.out_channels = jl.at("out_channels").get<int>();
            l.stride = jl.value("stride", 1);
        } else if (l.kind == LayerKind::MaxPool2) {
            l.stride = 2;
        }
        m.spec.layers.push_back(l);
    }
    check_spec(m.spec);
    m.head = head_from_name(header.at("head").get<std::string>());
    m.normalize_input = header.at("normalize_input").get<bool>();
    m.meta_json = header.value("training", nlohmann::json::object()).dump();

    // Parameter shapes follow from the architecture.
    m.params = init_params(m.spec, 0);
    for (auto& c : m.params.conv) {
        for (double& v : c.w) v = get_f32(f);
        for (double& v : c.b) v = get_f32(f);
    }
    if (!f) throw std::runtime_error("truncated model file");
    return m;
}

}  // namespace covdet
