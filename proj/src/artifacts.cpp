#include "a2fm/artifacts.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

namespace a2fm {

namespace {

constexpr std::uint16_t kFormatVersion = 1;
constexpr char kTensorMagic[4] = {'A', '2', 'F', 'M'};
constexpr char kModelMagic[8] = {'A', '2', 'F', 'M', 'C', 'K', 'P', 'T'};

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, double v) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void put_string(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

// Cursor over a fully loaded file; every read checks the remaining length.
struct Reader {
    const std::string bytes;
    std::size_t pos = 0;
    const std::string what;

    void need(std::size_t n, const char* part) {
        if (pos + n > bytes.size()) {
            throw TruncationError(what + ": truncated while reading " + part);
        }
    }
    std::uint16_t u16(const char* part) {
        need(2, part);
        std::uint16_t v = static_cast<std::uint8_t>(bytes[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* part) {
        need(4, part);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::uint8_t u8(const char* part) {
        need(1, part);
        return static_cast<std::uint8_t>(bytes[pos++]);
    }
    double f32(const char* part) {
        return static_cast<double>(std::bit_cast<float>(u32(part)));
    }
    std::string str(const char* part) {
        std::uint32_t n = u32(part);
        need(n, part);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
    void magic(const char* expect, std::size_t n) {
        need(n, "magic");
        if (bytes.compare(pos, n, expect, n) != 0) {
            throw BadMagicError(what + ": bad magic, not a recognized artifact");
        }
        pos += n;
    }
    void version() {
        std::uint16_t v = u16("version");
        if (v != kFormatVersion) {
            throw VersionError(what + ": format version " + std::to_string(v) + ", expected " +
                               std::to_string(kFormatVersion));
        }
    }
    void done() {
        if (pos != bytes.size()) {
            throw TruncationError(what + ": " + std::to_string(bytes.size() - pos) +
                                  " trailing bytes");
        }
    }
};

Reader open_file(const std::string& path) {
    if (!std::filesystem::exists(path)) {
        throw MissingFileError(path + ": no such file");
    }
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) {
        throw MissingFileError(path + ": cannot open for reading");
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Reader{std::move(bytes), 0, path};
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.good()) {
        throw ArtifactError(path + ": cannot open for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out.good()) {
        throw ArtifactError(path + ": write failed");
    }
}

void encode_tensor(std::string& out, const Tensor& t) {
    out.append(kTensorMagic, sizeof kTensorMagic);
    put_u16(out, kFormatVersion);
    const Shape& shape = t.shape();
    if (shape.size() > 255) throw ArtifactError("tensor rank exceeds the format limit");
    out.push_back(static_cast<char>(shape.size()));
    for (int e : shape) {
        if (e < 0) throw ArtifactError("negative extent cannot be stored");
        put_u32(out, static_cast<std::uint32_t>(e));
    }
    for (std::size_t i = 0; i < t.size(); ++i) put_f32(out, t[i]);
}

Tensor decode_tensor(Reader& r) {
    r.magic(kTensorMagic, sizeof kTensorMagic);
    r.version();
    int rank = r.u8("rank");
    Shape shape(rank);
    for (int i = 0; i < rank; ++i) {
        std::uint32_t e = r.u32("extent");
        if (e > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
            throw ArtifactError(r.what + ": extent overflows int");
        }
        shape[i] = static_cast<int>(e);
    }
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f32("payload");
    return t;
}

}  // namespace

void save_tensor(const std::string& path, const Tensor& tensor) {
    std::string out;
    encode_tensor(out, tensor);
    write_file(path, out);
}

Tensor load_tensor(const std::string& path) {
    Reader r = open_file(path);
    // the tensor magic is a prefix of the checkpoint magic
    if (r.bytes.compare(0, sizeof kModelMagic, kModelMagic, sizeof kModelMagic) == 0) {
        throw BadMagicError(path + ": this is a model checkpoint, not a tensor");
    }
    Tensor t = decode_tensor(r);
    r.done();
    return t;
}

void save_model(const std::string& path, const Model& m) {
    std::string out;
    out.append(kModelMagic, sizeof kModelMagic);
    put_u16(out, kFormatVersion);
    put_string(out, model_kind_name(m.kind));
    const int extents[8] = {m.input_len, m.width,    m.height,   m.channels,
                            m.class_count, m.hyper.c1, m.hyper.c2, m.hyper.hidden};
    out.push_back(static_cast<char>(8));
    for (int e : extents) put_u32(out, static_cast<std::uint32_t>(e));
    put_u32(out, static_cast<std::uint32_t>(m.params.size()));
    for (const auto& [name, tensor] : m.params) {
        put_string(out, name);
        encode_tensor(out, tensor);
    }
    write_file(path, out);
}

Model load_model(const std::string& path) {
    Reader r = open_file(path);
    r.magic(kModelMagic, sizeof kModelMagic);
    r.version();
    std::string kind_name = r.str("model kind");
    ModelKind kind;
    try {
        kind = model_kind_from_name(kind_name);
    } catch (const std::invalid_argument&) {
        throw ArtifactError(path + ": unknown model kind '" + kind_name + "'");
    }
    int extent_count = r.u8("extent count");
    if (extent_count != 8) {
        throw ArtifactError(path + ": expected 8 architecture extents, got " +
                            std::to_string(extent_count));
    }
    int e[8];
    for (int i = 0; i < 8; ++i) e[i] = static_cast<int>(r.u32("architecture extent"));
    ModelHyper hyper;
    hyper.c1 = e[5];
    hyper.c2 = e[6];
    hyper.hidden = e[7];

    Model m;
    try {
        m = build_model(kind, e[0], e[1], e[2], e[3], e[4], hyper, 0);
    } catch (const std::exception& ex) {
        throw ArtifactError(path + ": invalid architecture extents: " + ex.what());
    }
    std::uint32_t blocks = r.u32("block count");
    if (blocks != m.params.size()) {
        throw ArtifactError(path + ": checkpoint has " + std::to_string(blocks) +
                            " parameter blocks, architecture needs " +
                            std::to_string(m.params.size()));
    }
    for (auto& [name, tensor] : m.params) {
        std::string stored = r.str("block name");
        if (stored != name) {
            throw ArtifactError(path + ": parameter block '" + stored + "' where '" + name +
                                "' was declared");
        }
        Tensor value = decode_tensor(r);
        if (value.shape() != tensor.shape()) {
            throw ArtifactError(path + ": block '" + name + "' has the wrong shape");
        }
        tensor = std::move(value);
    }
    r.done();
    return m;
}

}  // namespace a2fm
