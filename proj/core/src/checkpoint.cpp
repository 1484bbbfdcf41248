#include "sculpt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "sculpt/errors.hpp"

namespace sculpt {
namespace {

constexpr char kMagic[8] = {'S', 'C', 'L', 'P', 'C', 'K', 'P', 'T'};

enum SectionType : std::uint8_t { kF64Array = 1, kBitMask = 2, kU64 = 3, kString = 4 };

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::size_t size() const { return buf_.size(); }
    std::vector<std::uint8_t>& buf() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw FormatError("checkpoint truncated");
    }
    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_++]} << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_++]} << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }

private:
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

void f64_section(Writer& w, const std::string& name, const std::vector<double>& v) {
    w.str(name);
    w.u8(kF64Array);
    w.u64(8 + 8 * v.size());
    w.u64(v.size());
    for (double x : v) w.f64(x);
}

void u64_section(Writer& w, const std::string& name, std::uint64_t v) {
    w.str(name);
    w.u8(kU64);
    w.u64(8);
    w.u64(v);
}

void string_section(Writer& w, const std::string& name, const std::string& s) {
    w.str(name);
    w.u8(kString);
    w.u64(4 + s.size());
    w.str(s);
}

// Per segment: u64 size, u64 nonzero, ceil(size/8) bytes, bit i of the segment at
// byte i/8, bit position i%8 (LSB first).
void mask_section(Writer& w, const Mask& m) {
    Writer body;
    const auto& layout = m.layout();
    body.u32(static_cast<std::uint32_t>(layout.segment_count()));
    for (std::size_t s = 0; s < layout.segment_count(); ++s) {
        const auto& seg = layout.segment(s);
        body.u64(seg.size);
        body.u64(m.segment_nonzero(s));
        std::vector<std::uint8_t> packed((seg.size + 7) / 8, 0);
        for (std::size_t i = 0; i < seg.size; ++i) {
            if (m.kept(seg.offset + i)) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        }
        body.bytes(packed.data(), packed.size());
    }
    w.str("mask");
    w.u8(kBitMask);
    w.u64(body.size());
    w.bytes(body.buf().data(), body.size());
}

std::vector<double> read_f64_array(Reader& r) {
    const std::uint64_t n = r.u64();
    r.need(n * 8);
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    return v;
}

Mask read_mask(Reader& r, const ParamLayout& layout) {
    const std::uint32_t nseg = r.u32();
    if (nseg != layout.segment_count()) throw FormatError("checkpoint mask segment count does not match layout");
    std::vector<std::uint8_t> bits(layout.total(), 0);
    for (std::size_t s = 0; s < nseg; ++s) {
        const auto& seg = layout.segment(s);
        const std::uint64_t size = r.u64();
        const std::uint64_t nonzero = r.u64();
        if (size != seg.size) throw FormatError("checkpoint mask segment '" + seg.name + "' has wrong size");
        std::size_t count = 0;
        const std::size_t nbytes = (seg.size + 7) / 8;
        r.need(nbytes);
        std::vector<std::uint8_t> packed(nbytes);
        for (auto& b : packed) b = r.u8();
        for (std::size_t i = 0; i < seg.size; ++i) {
            const bool on = (packed[i / 8] >> (i % 8)) & 1u;
            bits[seg.offset + i] = on;
            count += on;
        }
        if (count != nonzero) throw FormatError("checkpoint mask count check failed for '" + seg.name + "'");
    }
    try {
        return Mask::from_bits(layout, std::move(bits));
    } catch (const ContractError& e) {
        throw FormatError(std::string("checkpoint mask invalid: ") + e.what());
    }
}

}  // namespace

std::string model_spec_to_json(const ModelSpec& spec) {
    nlohmann::json j;
    j["kind"] = model_kind_name(spec.kind);
    j["widths"] = spec.widths;
    j["bias"] = spec.bias;
    if (spec.kind == ModelKind::cnn) {
        j["in_channels"] = spec.in_channels;
        j["in_height"] = spec.in_height;
        j["in_width"] = spec.in_width;
        j["conv_channels"] = spec.conv_channels;
        j["kernel"] = spec.kernel;
        j["padding"] = spec.padding;
        j["pool"] = spec.pool;
    }
    return j.dump();
}

ModelSpec model_spec_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ModelSpec s;
        s.kind = parse_model_kind(j.at("kind").get<std::string>());
        s.widths = j.at("widths").get<std::vector<std::size_t>>();
        s.bias = j.at("bias").get<bool>();
        if (s.kind == ModelKind::cnn) {
            s.in_channels = j.at("in_channels");
            s.in_height = j.at("in_height");
            s.in_width = j.at("in_width");
            s.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
            s.kernel = j.at("kernel");
            s.padding = j.at("padding");
            s.pool = j.at("pool");
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid model spec header: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid model spec header: ") + e.what());
    }
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    require_same_layout(ckpt.params.layout, ckpt.mask.layout(), "encode_checkpoint");
    if (!ckpt.velocity.empty() && ckpt.velocity.size() != ckpt.params.size()) {
        throw ContractError("encode_checkpoint: velocity does not match parameters");
    }
    nlohmann::json header;
    header["format_version"] = kCheckpointVersion;
    header["model"] = nlohmann::json::parse(model_spec_to_json(ckpt.spec));
    header["seed"] = ckpt.seed;

    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.str(header.dump());
    w.u32(7);
    f64_section(w, "params", ckpt.params.values);
    mask_section(w, ckpt.mask);
    f64_section(w, "velocity", ckpt.velocity);
    u64_section(w, "epoch", ckpt.epoch);
    u64_section(w, "cycle", ckpt.cycle);
    string_section(w, "schedule", ckpt.schedule);
    string_section(w, "criterion", ckpt.criterion);
    return std::move(w.buf());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw FormatError("not a checkpoint (bad magic)");
    }
    Reader r(bytes);
    r.skip(sizeof kMagic);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint c;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.str());
        c.seed = header.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid checkpoint header: ") + e.what());
    }
    c.spec = model_spec_from_json(header.at("model").dump());
    const ParamLayout layout = build_model(c.spec).layout;

    bool have_params = false, have_mask = false;
    const std::uint32_t sections = r.u32();
    for (std::uint32_t s = 0; s < sections; ++s) {
        const std::string name = r.str();
        const std::uint8_t type = r.u8();
        const std::uint64_t len = r.u64();
        const std::size_t start = r.pos();
        r.need(len);
        if (name == "params" && type == kF64Array) {
            auto values = read_f64_array(r);
            if (values.size() != layout.total()) throw FormatError("checkpoint params do not match the model layout");
            c.params = ParamVector(layout, std::move(values));
            have_params = true;
        } else if (name == "mask" && type == kBitMask) {
            c.mask = read_mask(r, layout);
            have_mask = true;
        } else if (name == "velocity" && type == kF64Array) {
            c.velocity = read_f64_array(r);
        } else if (name == "epoch" && type == kU64) {
            c.epoch = r.u64();
        } else if (name == "cycle" && type == kU64) {
            c.cycle = r.u64();
        } else if (name == "schedule" && type == kString) {
            c.schedule = r.str();
        } else if (name == "criterion" && type == kString) {
            c.criterion = r.str();
        } else {
            r.skip(len);  // unknown sections are ignored
        }
        if (r.pos() != start + len) throw FormatError("checkpoint section '" + name + "' has inconsistent length");
    }
    if (!have_params || !have_mask) throw FormatError("checkpoint lacks params or mask section");
    if (!c.velocity.empty() && c.velocity.size() != c.params.size()) {
        throw FormatError("checkpoint velocity does not match parameters");
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace sculpt
