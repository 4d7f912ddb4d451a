#include "sceneflow/scene_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "sceneflow/error.hpp"

namespace sceneflow {
namespace {

// Byte-level little-endian packing, independent of host order.
void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u32(out, bits);
}

struct Reader {
    std::string bytes;
    size_t pos = 0;
    std::string path;

    void need(size_t n, const char* what) const {
        if (pos + n > bytes.size())
            throw FormatError(path + ": truncated while reading " + what + " at byte offset " +
                              std::to_string(pos));
    }
    uint32_t u32(const char* what) {
        need(4, what);
        const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
        pos += 4;
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    float f32(const char* what) {
        const uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<uint8_t>(bytes[pos++]);
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open for reading");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void dump(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(path + ": write failed");
}

std::vector<Vec3> read_points(Reader& r, uint32_t n, const char* what) {
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        Vec3 p;
        p.x = r.f32(what);
        p.y = r.f32(what);
        p.z = r.f32(what);
        pts.push_back(p);
    }
    return pts;
}

}  // namespace

void write_scene(const std::string& path, const ScenePair& pair) {
    if (pair.frame_p.points.empty() || pair.frame_q.points.empty())
        throw SizeError("write_scene: empty frame");
    if (!pair.gt_flow.empty() && pair.gt_flow.size() != pair.frame_p.points.size())
        throw DimensionError("write_scene: ground-truth size mismatch");
    if (!pair.frame_p.occluded.empty() &&
        pair.frame_p.occluded.size() != pair.frame_p.points.size())
        throw DimensionError("write_scene: visibility mask size mismatch");

    std::string out;
    out += "SFPC";
    put_u32(out, 1u);
    put_u32(out, static_cast<uint32_t>(pair.frame_p.points.size()));
    put_u32(out, static_cast<uint32_t>(pair.frame_q.points.size()));
    uint32_t flags = 0;
    if (!pair.gt_flow.empty()) flags |= 1u;
    if (!pair.frame_p.occluded.empty()) flags |= 2u;
    put_u32(out, flags);
    for (const Vec3& p : pair.frame_p.points) {
        put_f32(out, p.x);
        put_f32(out, p.y);
        put_f32(out, p.z);
    }
    for (const Vec3& q : pair.frame_q.points) {
        put_f32(out, q.x);
        put_f32(out, q.y);
        put_f32(out, q.z);
    }
    for (const Vec3& s : pair.gt_flow) {
        put_f32(out, s.x);
        put_f32(out, s.y);
        put_f32(out, s.z);
    }
    for (uint8_t o : pair.frame_p.occluded) out.push_back(static_cast<char>(o));
    dump(path, out);
}

ScenePair read_scene(const std::string& path) {
    Reader r{slurp(path), 0, path};
    r.need(4, "magic");
    if (r.bytes.compare(0, 4, "SFPC") != 0)
        throw FormatError(path + ": bad magic at byte offset 0");
    r.pos = 4;
    const uint32_t version = r.u32("version");
    if (version != 1u)
        throw FormatError(path + ": unsupported version " + std::to_string(version) +
                          " at byte offset 4");
    const uint32_t n = r.u32("point count N");
    const uint32_t m = r.u32("point count M");
    const uint32_t flags = r.u32("flags");
    if (n == 0 || m == 0) throw FormatError(path + ": empty frame in header");
    if ((flags & ~3u) != 0)
        throw FormatError(path + ": unknown flag bits at byte offset 16");

    ScenePair pair;
    pair.frame_p.points = read_points(r, n, "first frame");
    pair.frame_q.points = read_points(r, m, "second frame");
    if (flags & 1u) pair.gt_flow = read_points(r, n, "ground-truth flow");
    if (flags & 2u) {
        pair.frame_p.occluded.reserve(n);
        for (uint32_t i = 0; i < n; ++i)
            pair.frame_p.occluded.push_back(r.u8("visibility mask"));
    }
    if (r.pos != r.bytes.size())
        throw FormatError(path + ": trailing bytes at byte offset " + std::to_string(r.pos));
    pair.frame_p.validate();
    pair.frame_q.validate();
    return pair;
}

void write_flow(const std::string& path, const std::vector<Vec3>& flow) {
    if (flow.empty()) throw SizeError("write_flow: empty flow");
    std::string out;
    out += "SFLW";
    put_u32(out, 1u);
    put_u32(out, static_cast<uint32_t>(flow.size()));
    for (const Vec3& s : flow) {
        put_f32(out, s.x);
        put_f32(out, s.y);
        put_f32(out, s.z);
    }
    dump(path, out);
}

std::vector<Vec3> read_flow(const std::string& path) {
    Reader r{slurp(path), 0, path};
    r.need(4, "magic");
    if (r.bytes.compare(0, 4, "SFLW") != 0)
        throw FormatError(path + ": bad magic at byte offset 0");
    r.pos = 4;
    const uint32_t version = r.u32("version");
    if (version != 1u)
        throw FormatError(path + ": unsupported version " + std::to_string(version) +
                          " at byte offset 4");
    const uint32_t n = r.u32("row count");
    if (n == 0) throw FormatError(path + ": empty flow in header");
    std::vector<Vec3> flow = read_points(r, n, "flow rows");
    if (r.pos != r.bytes.size())
        throw FormatError(path + ": trailing bytes at byte offset " + std::to_string(r.pos));
    return flow;
}

}  // namespace sceneflow
