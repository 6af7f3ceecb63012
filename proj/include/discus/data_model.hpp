#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <variant>

#include <json.hpp>

#include "discus/core.hpp"

namespace discus {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

// ---------------------------------------------------------------------------
// Domain types. Arrays are dense, row-major, complex<double> in memory.
// On disk complex data is c64le (interleaved float32), see save_container.
// ---------------------------------------------------------------------------

// T complex frames of size H x W; the reconstruction target {x_t}.
struct ImageSeries {
    int frames = 0, height = 0, width = 0;
    std::vector<cd> data;  // (t, y, x) row-major

    ImageSeries() = default;
    ImageSeries(int t, int h, int w)
        : frames(t), height(h), width(w),
          data(static_cast<std::size_t>(t) * h * w) {}

    std::size_t frame_size() const {
        return static_cast<std::size_t>(height) * width;
    }
    std::span<cd> frame(int t) {
        return {data.data() + static_cast<std::size_t>(t) * frame_size(), frame_size()};
    }
    std::span<const cd> frame(int t) const {
        return {data.data() + static_cast<std::size_t>(t) * frame_size(), frame_size()};
    }
    cd& at(int t, int y, int x) {
        return data[(static_cast<std::size_t>(t) * height + y) * width + x];
    }
    const cd& at(int t, int y, int x) const {
        return data[(static_cast<std::size_t>(t) * height + y) * width + x];
    }

    void validate() const {
        if (frames < 1) throw ConfigError("ImageSeries: frame count must be >= 1");
        if (height < 8 || width < 8)
            throw ConfigError("ImageSeries: spatial dimensions must be >= 8");
        if (data.size() != frames * frame_size())
            throw ConfigError("ImageSeries: data size inconsistent with shape");
        if (!all_finite(std::span<const cd>(data)))
            throw ConfigError("ImageSeries: non-finite entries");
    }
};

// Per-frame binary Cartesian phase-encode patterns. A set line means the
// whole readout row is sampled. n_pe equals the image height.
struct MaskSeries {
    int frames = 0, n_pe = 0;
    double acceleration = 1.0;
    std::vector<std::uint8_t> data;  // (t, pe)

    MaskSeries() = default;
    MaskSeries(int t, int npe, double r)
        : frames(t), n_pe(npe), acceleration(r),
          data(static_cast<std::size_t>(t) * npe, 0) {}

    std::uint8_t& at(int t, int pe) {
        return data[static_cast<std::size_t>(t) * n_pe + pe];
    }
    std::uint8_t at(int t, int pe) const {
        return data[static_cast<std::size_t>(t) * n_pe + pe];
    }
    std::span<const std::uint8_t> frame(int t) const {
        return {data.data() + static_cast<std::size_t>(t) * n_pe,
                static_cast<std::size_t>(n_pe)};
    }
    int lines_on(int t) const {
        int n = 0;
        for (int pe = 0; pe < n_pe; ++pe) n += at(t, pe) ? 1 : 0;
        return n;
    }

    void validate() const {
        if (frames < 1 || n_pe < 8) throw ConfigError("MaskSeries: bad shape");
        if (acceleration <= 0) throw ConfigError("MaskSeries: acceleration must be > 0");
        if (data.size() != static_cast<std::size_t>(frames) * n_pe)
            throw ConfigError("MaskSeries: data size inconsistent with shape");
        const int target = static_cast<int>(std::lround(n_pe / acceleration));
        for (int t = 0; t < frames; ++t) {
            for (int pe = 0; pe < n_pe; ++pe)
                if (at(t, pe) > 1) throw ConfigError("MaskSeries: entries must be 0/1");
            const int on = lines_on(t);
            if (on < 1) throw ConfigError("MaskSeries: frame with no sampled lines");
            if (std::abs(on - target) > 1)
                throw ConfigError("MaskSeries: per-frame line count off target by > 1");
        }
    }
};

// Complex coil sensitivities, C x H x W, pixel-wise normalized on support.
struct SensMaps {
    int coils = 0, height = 0, width = 0;
    std::vector<cd> data;  // (c, y, x)

    SensMaps() = default;
    SensMaps(int c, int h, int w)
        : coils(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w) {}

    std::size_t map_size() const {
        return static_cast<std::size_t>(height) * width;
    }
    std::span<cd> map(int c) {
        return {data.data() + static_cast<std::size_t>(c) * map_size(), map_size()};
    }
    std::span<const cd> map(int c) const {
        return {data.data() + static_cast<std::size_t>(c) * map_size(), map_size()};
    }
    cd& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    const cd& at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    // Every pixel carries either zero signal (outside the coil support) or a
    // unit sum of squared magnitudes.
    void validate(double tol = 1e-6) const {
        if (coils < 1 || height < 1 || width < 1) throw ConfigError("SensMaps: bad shape");
        if (data.size() != coils * map_size())
            throw ConfigError("SensMaps: data size inconsistent with shape");
        for (std::size_t p = 0; p < map_size(); ++p) {
            double s = 0.0;
            for (int c = 0; c < coils; ++c)
                s += std::norm(data[static_cast<std::size_t>(c) * map_size() + p]);
            if (!(s <= tol || std::abs(s - 1.0) <= tol))
                throw ConfigError("SensMaps: sum of |S_c|^2 is neither 0 nor 1 at a pixel");
        }
    }
};

// Per-frame multicoil sampled measurements plus mask, coil maps, provenance.
// Unsampled positions hold exact zeros.
struct KSpaceDataset {
    int frames = 0, coils = 0, height = 0, width = 0;
    std::vector<cd> samples;  // (t, c, y, x)
    MaskSeries mask;
    SensMaps sens;
    std::optional<double> snr_db;
    std::optional<std::int64_t> seed;

    KSpaceDataset() = default;
    KSpaceDataset(int t, int c, int h, int w, MaskSeries m, SensMaps s)
        : frames(t), coils(c), height(h), width(w),
          samples(static_cast<std::size_t>(t) * c * h * w),
          mask(std::move(m)), sens(std::move(s)) {}

    std::size_t frame_size() const {
        return static_cast<std::size_t>(coils) * height * width;
    }
    std::span<cd> frame(int t) {
        return {samples.data() + static_cast<std::size_t>(t) * frame_size(), frame_size()};
    }
    std::span<const cd> frame(int t) const {
        return {samples.data() + static_cast<std::size_t>(t) * frame_size(), frame_size()};
    }
    cd& at(int t, int c, int y, int x) {
        return samples[((static_cast<std::size_t>(t) * coils + c) * height + y) * width + x];
    }
    const cd& at(int t, int c, int y, int x) const {
        return samples[((static_cast<std::size_t>(t) * coils + c) * height + y) * width + x];
    }

    void validate() const {
        mask.validate();
        sens.validate();
        if (frames != mask.frames) throw ConfigError("KSpaceDataset: frame count mismatch");
        if (height != mask.n_pe) throw ConfigError("KSpaceDataset: mask n_pe != height");
        if (coils != sens.coils || height != sens.height || width != sens.width)
            throw ConfigError("KSpaceDataset: sens map dimensions mismatch");
        if (samples.size() != static_cast<std::size_t>(frames) * frame_size())
            throw ConfigError("KSpaceDataset: data size inconsistent with shape");
        if (!all_finite(std::span<const cd>(samples)))
            throw ConfigError("KSpaceDataset: non-finite entries");
        for (int t = 0; t < frames; ++t)
            for (int y = 0; y < height; ++y) {
                if (mask.at(t, y)) continue;
                for (int c = 0; c < coils; ++c)
                    for (int x = 0; x < width; ++x)
                        if (at(t, c, y, x) != cd(0.0, 0.0))
                            throw ConfigError("KSpaceDataset: nonzero sample off mask");
            }
    }
};

using Dataset = std::variant<ImageSeries, MaskSeries, SensMaps, KSpaceDataset>;

// ---------------------------------------------------------------------------
// Container I/O.
//
// A container is a directory with meta.json plus one raw binary per array:
//   { "version": 1, "kind": "kspace|image|mask|sens|checkpoint",
//     "arrays": { name: {"dtype": "c64le"|"f32le"|"u8",
//                        "shape": [...], "file": "<name>.bin"} },
//     "attrs": {...} }
// Binaries are little-endian, row-major, no header. Complex values are
// interleaved (re, im) float32; saving quantizes doubles to float32, so a
// save -> load roundtrip is bit-exact exactly when entries are
// float32-representable (always true for data that came from a container).
// ---------------------------------------------------------------------------

namespace io {

struct RawArray {
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;
};

struct RawContainer {
    std::string kind;
    // Name-keyed; std::map keeps meta.json key order deterministic.
    std::map<std::string, RawArray> arrays;
    nlohmann::json attrs = nlohmann::json::object();
};

inline std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "c64le") return 8;
    if (dtype == "f32le") return 4;
    if (dtype == "u8") return 1;
    throw IoError("unknown dtype tag: " + dtype);
}

inline std::size_t shape_elems(const std::vector<std::int64_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        if (d <= 0) throw IoError("non-positive dimension in shape");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::vector<std::uint8_t> encode_c64(std::span<const cd> v) {
    std::vector<std::uint8_t> out(v.size() * 8);
    auto* p = reinterpret_cast<float*>(out.data());
    for (std::size_t i = 0; i < v.size(); ++i) {
        p[2 * i] = static_cast<float>(v[i].real());
        p[2 * i + 1] = static_cast<float>(v[i].imag());
    }
    return out;
}

inline std::vector<cd> decode_c64(const std::vector<std::uint8_t>& bytes) {
    std::vector<cd> out(bytes.size() / 8);
    const auto* p = reinterpret_cast<const float*>(bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = cd(p[2 * i], p[2 * i + 1]);
    return out;
}

inline std::vector<std::uint8_t> encode_f32(std::span<const double> v) {
    std::vector<std::uint8_t> out(v.size() * 4);
    auto* p = reinterpret_cast<float*>(out.data());
    for (std::size_t i = 0; i < v.size(); ++i) p[i] = static_cast<float>(v[i]);
    return out;
}

inline std::vector<double> decode_f32(const std::vector<std::uint8_t>& bytes) {
    std::vector<double> out(bytes.size() / 4);
    const auto* p = reinterpret_cast<const float*>(bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i];
    return out;
}

inline void write_raw(const RawContainer& c, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    nlohmann::json meta;
    meta["version"] = 1;
    meta["kind"] = c.kind;
    meta["arrays"] = nlohmann::json::object();
    for (const auto& [name, arr] : c.arrays) {
        if (arr.bytes.size() != shape_elems(arr.shape) * dtype_size(arr.dtype))
            throw IoError("array byte length inconsistent with shape: " + name);
        meta["arrays"][name] = {{"dtype", arr.dtype},
                                {"shape", arr.shape},
                                {"file", name + ".bin"}};
    }
    meta["attrs"] = c.attrs;

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string());

    for (const auto& [name, arr] : c.arrays) {
        std::ofstream f(dir / (name + ".bin"), std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + (dir / (name + ".bin")).string());
        f.write(reinterpret_cast<const char*>(arr.bytes.data()),
                static_cast<std::streamsize>(arr.bytes.size()));
        if (!f) throw IoError("short write to " + (dir / (name + ".bin")).string());
    }
    std::ofstream f(dir / "meta.json", std::ios::trunc);
    if (!f) throw IoError("cannot open " + (dir / "meta.json").string());
    f << meta.dump(2) << "\n";
}

inline RawContainer read_raw(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(dir / "meta.json");
    if (!mf) throw IoError("missing meta.json in " + dir.string());
    nlohmann::json meta;
    try {
        mf >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("invalid meta.json in " + dir.string() + ": " + e.what());
    }
    if (!meta.contains("version") || meta["version"].get<int>() != 1)
        throw IoError("unsupported container version in " + dir.string());

    RawContainer c;
    c.kind = meta.at("kind").get<std::string>();
    c.attrs = meta.value("attrs", nlohmann::json::object());
    for (const auto& [name, desc] : meta.at("arrays").items()) {
        RawArray arr;
        arr.dtype = desc.at("dtype").get<std::string>();
        arr.shape = desc.at("shape").get<std::vector<std::int64_t>>();
        const fs::path file = dir / desc.at("file").get<std::string>();
        std::ifstream f(file, std::ios::binary);
        if (!f) throw IoError("missing array file " + file.string());
        arr.bytes.assign(std::istreambuf_iterator<char>(f), {});
        const std::size_t expect = shape_elems(arr.shape) * dtype_size(arr.dtype);
        if (arr.bytes.size() != expect)
            throw IoError("byte length mismatch for " + file.string() + ": expected " +
                          std::to_string(expect) + ", got " + std::to_string(arr.bytes.size()));
        c.arrays.emplace(name, std::move(arr));
    }
    return c;
}

inline const RawArray& need(const RawContainer& c, const std::string& name,
                            const std::string& dtype, std::size_t ndim) {
    auto it = c.arrays.find(name);
    if (it == c.arrays.end()) throw IoError("container missing array: " + name);
    if (it->second.dtype != dtype)
        throw IoError("array " + name + " has dtype " + it->second.dtype + ", expected " + dtype);
    if (it->second.shape.size() != ndim)
        throw IoError("array " + name + " has wrong rank");
    return it->second;
}

}  // namespace io

inline void save_container(const ImageSeries& s, const std::filesystem::path& dir) {
    s.validate();
    io::RawContainer c;
    c.kind = "image";
    c.arrays["frames"] = {"c64le",
                          {s.frames, s.height, s.width},
                          io::encode_c64(s.data)};
    io::write_raw(c, dir);
}

inline void save_container(const MaskSeries& m, const std::filesystem::path& dir) {
    m.validate();
    io::RawContainer c;
    c.kind = "mask";
    c.arrays["mask"] = {"u8", {m.frames, m.n_pe}, m.data};
    c.attrs["acceleration"] = m.acceleration;
    io::write_raw(c, dir);
}

inline void save_container(const SensMaps& s, const std::filesystem::path& dir) {
    s.validate();
    if (!all_finite(std::span<const cd>(s.data)))
        throw ConfigError("SensMaps: non-finite entries");
    io::RawContainer c;
    c.kind = "sens";
    c.arrays["maps"] = {"c64le", {s.coils, s.height, s.width}, io::encode_c64(s.data)};
    io::write_raw(c, dir);
}

inline void save_container(const KSpaceDataset& k, const std::filesystem::path& dir) {
    k.validate();
    io::RawContainer c;
    c.kind = "kspace";
    c.arrays["samples"] = {"c64le",
                           {k.frames, k.coils, k.height, k.width},
                           io::encode_c64(k.samples)};
    c.arrays["mask"] = {"u8", {k.mask.frames, k.mask.n_pe}, k.mask.data};
    c.arrays["maps"] = {"c64le",
                        {k.sens.coils, k.sens.height, k.sens.width},
                        io::encode_c64(k.sens.data)};
    c.attrs["acceleration"] = k.mask.acceleration;
    if (k.snr_db) c.attrs["snr_db"] = *k.snr_db;
    if (k.seed) c.attrs["seed"] = *k.seed;
    io::write_raw(c, dir);
}

inline ImageSeries load_image_series(const std::filesystem::path& dir) {
    const auto c = io::read_raw(dir);
    if (c.kind != "image") throw IoError("container kind is not image: " + c.kind);
    const auto& arr = io::need(c, "frames", "c64le", 3);
    ImageSeries s(static_cast<int>(arr.shape[0]), static_cast<int>(arr.shape[1]),
                  static_cast<int>(arr.shape[2]));
    s.data = io::decode_c64(arr.bytes);
    s.validate();
    return s;
}

inline MaskSeries load_mask_series(const std::filesystem::path& dir) {
    const auto c = io::read_raw(dir);
    if (c.kind != "mask") throw IoError("container kind is not mask: " + c.kind);
    const auto& arr = io::need(c, "mask", "u8", 2);
    MaskSeries m(static_cast<int>(arr.shape[0]), static_cast<int>(arr.shape[1]),
                 c.attrs.value("acceleration", 1.0));
    m.data = arr.bytes;
    m.validate();
    return m;
}

inline SensMaps load_sens_maps(const std::filesystem::path& dir) {
    const auto c = io::read_raw(dir);
    if (c.kind != "sens") throw IoError("container kind is not sens: " + c.kind);
    const auto& arr = io::need(c, "maps", "c64le", 3);
    SensMaps s(static_cast<int>(arr.shape[0]), static_cast<int>(arr.shape[1]),
               static_cast<int>(arr.shape[2]));
    s.data = io::decode_c64(arr.bytes);
    s.validate();
    return s;
}

inline KSpaceDataset load_kspace(const std::filesystem::path& dir) {
    const auto c = io::read_raw(dir);
    if (c.kind != "kspace") throw IoError("container kind is not kspace: " + c.kind);
    const auto& samples = io::need(c, "samples", "c64le", 4);
    const auto& mask = io::need(c, "mask", "u8", 2);
    const auto& maps = io::need(c, "maps", "c64le", 3);

    MaskSeries m(static_cast<int>(mask.shape[0]), static_cast<int>(mask.shape[1]),
                 c.attrs.value("acceleration", 1.0));
    m.data = mask.bytes;
    SensMaps s(static_cast<int>(maps.shape[0]), static_cast<int>(maps.shape[1]),
               static_cast<int>(maps.shape[2]));
    s.data = io::decode_c64(maps.bytes);

    KSpaceDataset k(static_cast<int>(samples.shape[0]), static_cast<int>(samples.shape[1]),
                    static_cast<int>(samples.shape[2]), static_cast<int>(samples.shape[3]),
                    std::move(m), std::move(s));
    k.samples = io::decode_c64(samples.bytes);
    if (c.attrs.contains("snr_db")) k.snr_db = c.attrs["snr_db"].get<double>();
    if (c.attrs.contains("seed")) k.seed = c.attrs["seed"].get<std::int64_t>();
    k.validate();
    return k;
}

inline std::string container_kind(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "meta.json");
    if (!mf) throw IoError("missing meta.json in " + dir.string());
    nlohmann::json meta;
    try {
        mf >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("invalid meta.json in " + dir.string() + ": " + e.what());
    }
    return meta.at("kind").get<std::string>();
}

// Generic loader dispatching on the container kind.
inline Dataset load_container(const std::filesystem::path& dir) {
    const auto kind = container_kind(dir);
    if (kind == "image") return load_image_series(dir);
    if (kind == "mask") return load_mask_series(dir);
    if (kind == "sens") return load_sens_maps(dir);
    if (kind == "kspace") return load_kspace(dir);
    throw IoError("unsupported container kind: " + kind);
}

}  // namespace discus
