#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hiertax {

using Dims = std::array<std::size_t, 3>;
using Vec3 = std::array<double, 3>;

/// Dense CT volume, x-fastest storage.
struct Volume {
    Dims dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};  ///< mm per voxel
    std::vector<float> voxels;
    bool normalized = false;

    Volume() = default;
    Volume(Dims d, Vec3 s, float fill = 0.0f, bool norm = false);

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + dims[0] * (y + dims[1] * z);
    }
    float& at(std::size_t x, std::size_t y, std::size_t z) { return voxels[index(x, y, z)]; }
    float at(std::size_t x, std::size_t y, std::size_t z) const { return voxels[index(x, y, z)]; }

    /// Throws ValidationError if dims, spacing or voxel count are inconsistent.
    void validate() const;
};

/// Lesion centre in millimetres, origin at the centre of voxel (0,0,0).
struct Centroid {
    Vec3 position{0.0, 0.0, 0.0};
};

/// Trilinear resampling onto `target` spacing. Voxel i spans
/// [i*s, (i+1)*s) mm; output dims are round(n*s/t). Samples outside the
/// input grid clamp to the border voxel.
Volume resample_trilinear(const Volume& v, Vec3 target = {1.0, 1.0, 1.0});

struct HuWindow {
    double lo = -1024.0;
    double hi = 400.0;
};

/// Linear map of [lo, hi] HU onto [-1, 1], clamped.
Volume normalize_hu(const Volume& v, HuWindow window = {});
double normalize_hu_value(double hu, HuWindow window = {});

inline constexpr float kPadValue = -1.0f;

/// size^3 crop around voxel round(c / spacing). The centre voxel lands at
/// crop index (size-1)/2, so the window is [k - (size-1)/2, k + size/2 + 1)
/// per axis; voxels outside the volume are kPadValue.
Volume crop_centered(const Volume& v, const Centroid& c, std::size_t size = 48);

/// Rigid, interpolation-free augmentation of a cubic volume.
struct AugmentParams {
    int axis = 2;                       ///< rotation axis 0..2
    int quarter_turns = 0;              ///< 0..3
    std::array<bool, 3> flip{false, false, false};
    std::array<int, 3> shift{0, 0, 0};  ///< voxels, applied last, kPadValue fill
};

inline constexpr int kMaxShift = 4;

AugmentParams draw_augment(std::uint64_t seed);
Volume apply_augment(const Volume& v, const AugmentParams& p);
Volume augment(const Volume& v, std::uint64_t seed);

/// Mean over non-overlapping block^3 cubes, flattened x-fastest.
std::vector<double> featurize_pool(const Volume& v, std::size_t block = 8);

/// `dims=nx,ny,nz spacing=sx,sy,sz normalized=0|1\n` then little-endian float32 voxels.
std::string encode_volume(const Volume& v);
Volume decode_volume(std::string_view bytes);
Volume read_volume(const std::string& path);
void write_volume(const std::string& path, const Volume& v);

/// `id,x_mm,y_mm,z_mm[,leaf]`. The optional leaf column labels the lesion.
struct CentroidRecord {
    Centroid centroid;
    std::string leaf;
};
std::map<std::string, CentroidRecord> load_centroids(std::string_view csv);

/// Resample to 1 mm, normalize (if raw), crop 48^3, pool.
std::vector<double> preprocess_volume(const Volume& v, const Centroid& c, HuWindow window = {},
                                      std::size_t crop = 48, std::size_t block = 8);

} // namespace hiertax
