#include "hiertax/volprep.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hiertax/error.hpp"
#include "hiertax/rng.hpp"

namespace hiertax {

namespace {

std::size_t product(const Dims& d) { return d[0] * d[1] * d[2]; }

/// Linear interpolation weights along one axis for continuous index u.
struct Lerp {
    std::size_t i0, i1;
    double t;
};

Lerp lerp_axis(double u, std::size_t n) {
    const double hi = static_cast<double>(n - 1);
    u = std::clamp(u, 0.0, hi);
    const auto i0 = static_cast<std::size_t>(std::floor(u));
    const auto i1 = std::min(i0 + 1, n - 1);
    return {i0, i1, u - static_cast<double>(i0)};
}

double parse_double(std::string_view s, const char* what) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw ValidationError(std::string("bad ") + what + " '" + std::string(s) + "'");
    }
    return v;
}

template <typename T, std::size_t N>
std::array<T, N> parse_triple(std::string_view s, const char* what) {
    std::array<T, N> out{};
    std::size_t start = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const auto pos = s.find(',', start);
        const auto end = i + 1 == N ? s.size() : pos;
        if (end == std::string_view::npos) {
            throw ValidationError(std::string("bad ") + what + " '" + std::string(s) + "'");
        }
        const auto part = s.substr(start, end - start);
        if constexpr (std::is_floating_point_v<T>) {
            out[i] = parse_double(part, what);
        } else {
            T v{};
            const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
            if (ec != std::errc() || p != part.data() + part.size()) {
                throw ValidationError(std::string("bad ") + what + " '" + std::string(s) + "'");
            }
            out[i] = v;
        }
        start = end + 1;
    }
    return out;
}

} // namespace

Volume::Volume(Dims d, Vec3 s, float fill, bool norm)
    : dims(d), spacing(s), voxels(product(d), fill), normalized(norm) {}

void Volume::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) {
            throw ValidationError("volume dimension must be >= 1");
        }
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw ValidationError("volume spacing must be positive");
        }
    }
    if (voxels.size() != product(dims)) {
        throw ValidationError("volume voxel count does not match its dimensions");
    }
}

Volume resample_trilinear(const Volume& v, Vec3 target) {
    v.validate();
    for (double t : target) {
        if (!(t > 0.0) || !std::isfinite(t)) {
            throw ValidationError("target spacing must be positive");
        }
    }
    Dims out_dims{};
    for (int a = 0; a < 3; ++a) {
        const double extent = static_cast<double>(v.dims[a]) * v.spacing[a] / target[a];
        out_dims[a] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(extent)));
    }
    Volume out(out_dims, target, 0.0f, v.normalized);
    std::array<std::vector<Lerp>, 3> axes;
    for (int a = 0; a < 3; ++a) {
        axes[a].reserve(out_dims[a]);
        for (std::size_t i = 0; i < out_dims[a]; ++i) {
            const double mm = (static_cast<double>(i) + 0.5) * target[a];
            axes[a].push_back(lerp_axis(mm / v.spacing[a] - 0.5, v.dims[a]));
        }
    }
    for (std::size_t z = 0; z < out_dims[2]; ++z) {
        const auto& lz = axes[2][z];
        for (std::size_t y = 0; y < out_dims[1]; ++y) {
            const auto& ly = axes[1][y];
            for (std::size_t x = 0; x < out_dims[0]; ++x) {
                const auto& lx = axes[0][x];
                auto plane = [&](std::size_t zz) {
                    const double c0 = (1.0 - lx.t) * v.at(lx.i0, ly.i0, zz) + lx.t * v.at(lx.i1, ly.i0, zz);
                    const double c1 = (1.0 - lx.t) * v.at(lx.i0, ly.i1, zz) + lx.t * v.at(lx.i1, ly.i1, zz);
                    return (1.0 - ly.t) * c0 + ly.t * c1;
                };
                const double value = (1.0 - lz.t) * plane(lz.i0) + lz.t * plane(lz.i1);
                out.at(x, y, z) = static_cast<float>(value);
            }
        }
    }
    return out;
}

double normalize_hu_value(double hu, HuWindow w) {
    if (!(w.hi > w.lo)) {
        throw ValidationError("HU window needs hi > lo");
    }
    return std::clamp(2.0 * (hu - w.lo) / (w.hi - w.lo) - 1.0, -1.0, 1.0);
}

Volume normalize_hu(const Volume& v, HuWindow window) {
    v.validate();
    if (v.normalized) {
        throw ValidationError("volume is already normalized");
    }
    if (!(window.hi > window.lo)) {
        throw ValidationError("HU window needs hi > lo");
    }
    Volume out = v;
    for (auto& h : out.voxels) {
        h = static_cast<float>(normalize_hu_value(h, window));
    }
    out.normalized = true;
    return out;
}

Volume crop_centered(const Volume& v, const Centroid& c, std::size_t size) {
    v.validate();
    if (size == 0) {
        throw ValidationError("crop size must be positive");
    }
    std::array<std::int64_t, 3> lo{};
    for (int a = 0; a < 3; ++a) {
        if (!std::isfinite(c.position[a])) {
            throw ValidationError("centroid is not finite");
        }
        const auto center = std::llround(c.position[a] / v.spacing[a]);
        lo[a] = center - static_cast<std::int64_t>((size - 1) / 2);
    }
    Volume out({size, size, size}, v.spacing, kPadValue, v.normalized);
    auto inside = [&](std::int64_t i, int a) {
        return i >= 0 && i < static_cast<std::int64_t>(v.dims[a]);
    };
    for (std::size_t z = 0; z < size; ++z) {
        const auto sz = lo[2] + static_cast<std::int64_t>(z);
        if (!inside(sz, 2)) {
            continue;
        }
        for (std::size_t y = 0; y < size; ++y) {
            const auto sy = lo[1] + static_cast<std::int64_t>(y);
            if (!inside(sy, 1)) {
                continue;
            }
            for (std::size_t x = 0; x < size; ++x) {
                const auto sx = lo[0] + static_cast<std::int64_t>(x);
                if (inside(sx, 0)) {
                    out.at(x, y, z) = v.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy),
                                           static_cast<std::size_t>(sz));
                }
            }
        }
    }
    return out;
}

AugmentParams draw_augment(std::uint64_t seed) {
    auto rng = SplitMix64::stream(seed, "augment");
    AugmentParams p;
    p.axis = static_cast<int>(rng.between(0, 2));
    p.quarter_turns = static_cast<int>(rng.between(0, 3));
    for (auto& f : p.flip) {
        f = rng.uniform() < 0.5;
    }
    for (auto& s : p.shift) {
        s = static_cast<int>(rng.between(-kMaxShift, kMaxShift));
    }
    return p;
}

Volume apply_augment(const Volume& v, const AugmentParams& p) {
    v.validate();
    const auto n = v.dims[0];
    if (v.dims[1] != n || v.dims[2] != n) {
        throw ValidationError("augmentation needs a cubic volume");
    }
    if (p.axis < 0 || p.axis > 2) {
        throw ValidationError("rotation axis must be 0, 1 or 2");
    }
    // Plane axes (first, second) for a right-handed turn about p.axis.
    const int pa = (p.axis + 1) % 3;
    const int qa = (p.axis + 2) % 3;

    Volume cur = v;
    const int turns = ((p.quarter_turns % 4) + 4) % 4;
    for (int t = 0; t < turns; ++t) {
        Volume next = cur;
        for (std::size_t z = 0; z < n; ++z) {
            for (std::size_t y = 0; y < n; ++y) {
                for (std::size_t x = 0; x < n; ++x) {
                    std::array<std::size_t, 3> dst{x, y, z};
                    std::array<std::size_t, 3> src = dst;
                    src[pa] = n - 1 - dst[qa];
                    src[qa] = dst[pa];
                    next.at(x, y, z) = cur.at(src[0], src[1], src[2]);
                }
            }
        }
        cur = std::move(next);
    }

    Volume out(cur.dims, cur.spacing, kPadValue, cur.normalized);
    const auto sn = static_cast<std::int64_t>(n);
    for (std::size_t z = 0; z < n; ++z) {
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
                std::array<std::int64_t, 3> src{static_cast<std::int64_t>(x), static_cast<std::int64_t>(y),
                                                static_cast<std::int64_t>(z)};
                bool ok = true;
                for (int a = 0; a < 3; ++a) {
                    src[a] -= p.shift[a];
                    ok = ok && src[a] >= 0 && src[a] < sn;
                    if (ok && p.flip[a]) {
                        src[a] = sn - 1 - src[a];
                    }
                }
                if (ok) {
                    out.at(x, y, z) = cur.at(static_cast<std::size_t>(src[0]), static_cast<std::size_t>(src[1]),
                                             static_cast<std::size_t>(src[2]));
                }
            }
        }
    }
    return out;
}

Volume augment(const Volume& v, std::uint64_t seed) {
    return apply_augment(v, draw_augment(seed));
}

std::vector<double> featurize_pool(const Volume& v, std::size_t block) {
    v.validate();
    if (block == 0) {
        throw ValidationError("pooling block must be positive");
    }
    for (auto d : v.dims) {
        if (d % block != 0) {
            throw ValidationError("volume size " + std::to_string(d) + " is not divisible by block " +
                                  std::to_string(block));
        }
    }
    const Dims cells{v.dims[0] / block, v.dims[1] / block, v.dims[2] / block};
    std::vector<double> out(product(cells), 0.0);
    for (std::size_t z = 0; z < v.dims[2]; ++z) {
        for (std::size_t y = 0; y < v.dims[1]; ++y) {
            for (std::size_t x = 0; x < v.dims[0]; ++x) {
                const auto cell = x / block + cells[0] * (y / block + cells[1] * (z / block));
                out[cell] += v.at(x, y, z);
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(block * block * block);
    for (auto& o : out) {
        o *= inv;
    }
    return out;
}

std::string encode_volume(const Volume& v) {
    v.validate();
    std::ostringstream header;
    header.precision(17);
    header << "dims=" << v.dims[0] << ',' << v.dims[1] << ',' << v.dims[2] << " spacing=" << v.spacing[0]
           << ',' << v.spacing[1] << ',' << v.spacing[2] << " normalized=" << (v.normalized ? 1 : 0) << '\n';
    std::string out = header.str();
    out.reserve(out.size() + 4 * v.voxels.size());
    for (float f : v.voxels) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        for (int b = 0; b < 4; ++b) {
            out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
        }
    }
    return out;
}

Volume decode_volume(std::string_view bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string_view::npos) {
        throw ValidationError("volume file has no header line");
    }
    const auto header = bytes.substr(0, nl);
    Volume v;
    bool have_dims = false, have_spacing = false, have_norm = false;
    std::size_t start = 0;
    while (start < header.size()) {
        auto end = header.find(' ', start);
        if (end == std::string_view::npos) {
            end = header.size();
        }
        const auto field = header.substr(start, end - start);
        start = end + 1;
        if (field.empty()) {
            continue;
        }
        if (field.starts_with("dims=")) {
            v.dims = parse_triple<std::size_t, 3>(field.substr(5), "dims");
            have_dims = true;
        } else if (field.starts_with("spacing=")) {
            v.spacing = parse_triple<double, 3>(field.substr(8), "spacing");
            have_spacing = true;
        } else if (field == "normalized=0" || field == "normalized=1") {
            v.normalized = field.back() == '1';
            have_norm = true;
        } else {
            throw ValidationError("unknown volume header field '" + std::string(field) + "'");
        }
    }
    if (!have_dims || !have_spacing || !have_norm) {
        throw ValidationError("volume header must give dims, spacing and normalized");
    }
    const auto body = bytes.substr(nl + 1);
    const auto count = product(v.dims);
    if (body.size() != 4 * count) {
        throw ValidationError("volume body has " + std::to_string(body.size()) + " bytes, expected " +
                              std::to_string(4 * count));
    }
    v.voxels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(body[4 * i + b])) << (8 * b);
        }
        v.voxels[i] = std::bit_cast<float>(bits);
    }
    v.validate();
    return v;
}

Volume read_volume(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open volume '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return decode_volume(ss.str());
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

void write_volume(const std::string& path, const Volume& v) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write volume '" + path + "'");
    }
    const auto bytes = encode_volume(v);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::map<std::string, CentroidRecord> load_centroids(std::string_view csv) {
    std::map<std::string, CentroidRecord> out;
    std::size_t start = 0;
    std::size_t line_no = 0;
    bool with_leaf = false;
    while (start < csv.size()) {
        auto end = csv.find('\n', start);
        if (end == std::string_view::npos) {
            end = csv.size();
        }
        auto line = csv.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string_view> cells;
        std::size_t s = 0;
        while (true) {
            const auto pos = line.find(',', s);
            cells.push_back(line.substr(s, pos == std::string_view::npos ? std::string_view::npos : pos - s));
            if (pos == std::string_view::npos) {
                break;
            }
            s = pos + 1;
        }
        const auto where = "centroids line " + std::to_string(line_no) + ": ";
        if (line_no == 1) {
            if (cells.size() < 4 || cells[0] != "id" || cells[1] != "x_mm" || cells[2] != "y_mm" ||
                cells[3] != "z_mm" || (cells.size() == 5 && cells[4] != "leaf") || cells.size() > 5) {
                throw ValidationError(where + "header must be id,x_mm,y_mm,z_mm[,leaf]");
            }
            with_leaf = cells.size() == 5;
            continue;
        }
        if (cells.size() != (with_leaf ? 5u : 4u)) {
            throw ValidationError(where + "ragged row");
        }
        CentroidRecord r;
        for (int a = 0; a < 3; ++a) {
            r.centroid.position[a] = parse_double(cells[1 + a], "coordinate");
            if (!std::isfinite(r.centroid.position[a])) {
                throw ValidationError(where + "non-finite coordinate");
            }
        }
        if (with_leaf) {
            r.leaf = std::string(cells[4]);
        }
        if (!out.emplace(std::string(cells[0]), r).second) {
            throw ValidationError(where + "duplicate id '" + std::string(cells[0]) + "'");
        }
    }
    return out;
}

std::vector<double> preprocess_volume(const Volume& v, const Centroid& c, HuWindow window, std::size_t crop,
                                      std::size_t block) {
    auto iso = resample_trilinear(v, {1.0, 1.0, 1.0});
    if (!iso.normalized) {
        iso = normalize_hu(iso, window);
    }
    // Centroids are relative to the centre of input voxel 0; the resampled
    // grid's voxel 0 centre sits at 0.5*(1 - s) mm in that frame.
    Centroid shifted = c;
    for (int a = 0; a < 3; ++a) {
        shifted.position[a] += 0.5 * (v.spacing[a] - 1.0);
    }
    return featurize_pool(crop_centered(iso, shifted, crop), block);
}

} // namespace hiertax
