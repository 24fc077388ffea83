#include "csiid/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace csiid {

std::uint32_t crc32(const unsigned char* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int j = 0; j < 8; ++j)
                c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i)
        crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kMagic[4] = {'C', 'S', 'I', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xFF));
    buf.push_back(static_cast<char>((v >> 8) & 0xFF));
    buf.push_back(static_cast<char>((v >> 16) & 0xFF));
    buf.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    const unsigned char* p;
    const unsigned char* end;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n)
            throw IntegrityError("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = static_cast<std::uint32_t>(p[0]) |
                          (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) |
                          (static_cast<std::uint32_t>(p[3]) << 24);
        p += 4;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        return s;
    }
};

std::string config_block(const std::string& model_type, const TransformerConfig& c) {
    std::ostringstream os;
    os << "model=" << model_type << "\n"
       << "d_model=" << c.d_model << "\n"
       << "heads=" << c.heads << "\n"
       << "d_ff=" << c.d_ff << "\n"
       << "dropout=" << c.dropout << "\n"
       << "window_len=" << c.window_len << "\n"
       << "subcarriers=" << c.subcarriers << "\n"
       << "classes=" << c.classes << "\n"
       << "encoder_layers=" << c.encoder_layers << "\n"
       << "ln_eps=" << c.ln_eps << "\n"
       << "scale_full_dmodel=" << (c.scale_full_dmodel ? 1 : 0) << "\n"
       << "positional_encoding=" << (c.positional_encoding ? 1 : 0) << "\n"
       << "dropout_after_input=" << (c.dropout_after_input ? 1 : 0) << "\n";
    return os.str();
}

void parse_config_block(const std::string& text, std::string& model_type,
                        TransformerConfig& c) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto req = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end())
            throw IntegrityError(std::string("checkpoint config missing key: ") + key);
        return it->second;
    };
    model_type = req("model");
    c.d_model = std::stoul(req("d_model"));
    c.heads = std::stoul(req("heads"));
    c.d_ff = std::stoul(req("d_ff"));
    c.dropout = std::stod(req("dropout"));
    c.window_len = std::stoul(req("window_len"));
    c.subcarriers = std::stoul(req("subcarriers"));
    c.classes = std::stoul(req("classes"));
    c.encoder_layers = std::stoul(req("encoder_layers"));
    c.ln_eps = std::stod(req("ln_eps"));
    c.scale_full_dmodel = req("scale_full_dmodel") == "1";
    c.positional_encoding = req("positional_encoding") == "1";
    c.dropout_after_input = req("dropout_after_input") == "1";
}

}  // namespace

void save_checkpoint(const std::string& path, Classifier& model) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    const std::string cfg = config_block(model.model_type(), model.config());
    put_u32(buf, static_cast<std::uint32_t>(cfg.size()));
    buf += cfg;

    auto& params = model.parameters();
    put_u32(buf, static_cast<std::uint32_t>(params.size()));
    for (auto& p : params) {
        put_u32(buf, static_cast<std::uint32_t>(p.name.size()));
        buf += p.name;
        put_u32(buf, static_cast<std::uint32_t>(p.tensor.ndim()));
        for (std::size_t d : p.tensor.shape())
            put_u32(buf, static_cast<std::uint32_t>(d));
        for (double v : p.tensor.values()) put_f32(buf, static_cast<float>(v));
    }
    put_u32(buf, crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw InputError("checkpoint write failed: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    if (buf.size() < 12) throw IntegrityError("checkpoint too short: " + path);
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw IntegrityError("checkpoint has wrong magic: " + path);

    const std::size_t body = buf.size() - 4;
    Reader crc_reader{reinterpret_cast<const unsigned char*>(buf.data()) + body,
                      reinterpret_cast<const unsigned char*>(buf.data()) + buf.size()};
    const std::uint32_t stored = crc_reader.u32();
    const std::uint32_t computed =
        crc32(reinterpret_cast<const unsigned char*>(buf.data()), body);
    if (stored != computed)
        throw IntegrityError("checkpoint integrity: checksum mismatch in " + path);

    Reader r{reinterpret_cast<const unsigned char*>(buf.data()) + 4,
             reinterpret_cast<const unsigned char*>(buf.data()) + body};
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw IntegrityError("unsupported checkpoint version " +
                             std::to_string(version));

    CheckpointData data;
    const std::uint32_t cfg_len = r.u32();
    parse_config_block(r.str(cfg_len), data.model_type, data.config);

    const std::uint32_t count = r.u32();
    data.params.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointData::Param p;
        p.name = r.str(r.u32());
        const std::uint32_t ndims = r.u32();
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < ndims; ++d) {
            p.shape.push_back(r.u32());
            numel *= p.shape.back();
        }
        p.values.resize(numel);
        for (double& v : p.values) v = r.f32();
        data.params.push_back(std::move(p));
    }
    return data;
}

std::unique_ptr<Classifier> restore_model(const CheckpointData& data) {
    auto model = make_model(data.model_type, data.config, 0);
    if (model->parameters().size() != data.params.size())
        throw IntegrityError("checkpoint parameter count mismatch: file has " +
                             std::to_string(data.params.size()) + ", model has " +
                             std::to_string(model->parameters().size()));
    for (const auto& p : data.params) model->load_parameter(p.name, p.values);
    return model;
}

}  // namespace csiid
