#ifndef MORPHO_INGEST_HPP
#define MORPHO_INGEST_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "morpho/geometry.hpp"

namespace morpho {
namespace ingest {

/// Grayscale raster, values widened to 16 bit on load.
struct GrayImage {
    int width = 0;
    int height = 0;
    double pixel_size = 1.0; // um per pixel
    std::vector<std::uint16_t> data; // row-major, data[y*width + x]

    std::uint16_t at(int x, int y) const { return data[std::size_t(y) * width + x]; }
    std::uint16_t& at(int x, int y) { return data[std::size_t(y) * width + x]; }

    /// Throws InputError if dimensions, pixel size, or buffer size are off.
    void validate() const;
};

/// One intensity interval mapped to a named region.
struct ThresholdInterval {
    std::string label;
    double lo = 0;
    double hi = 0;
};

struct SegmentationSpec {
    std::vector<ThresholdInterval> thresholds;
    double smoothing_radius = 0; // Gaussian pre-blur sigma in pixels, 0 = off
};

/// Per-pixel region assignment; -1 is background, otherwise an index into
/// `names`.
struct LabelImage {
    int width = 0;
    int height = 0;
    double pixel_size = 1.0;
    std::vector<int> labels;
    std::vector<std::string> names;

    int at(int x, int y) const { return labels[std::size_t(y) * width + x]; }
    int index_of(const std::string& name) const; // -1 if absent
};

/// Read a PGM (P2 ASCII or P5 binary) image. pixel_size comes from a sidecar
/// JSON file (same path, .json extension, key "pixel_size_um") when present,
/// else 1 um.
GrayImage load_image(const std::string& path);

/// Write PGM. Binary P5 by default; maxval 255 when all values fit, 65535
/// otherwise (two bytes per sample, big endian).
void save_pgm(const std::string& path, const GrayImage& img, bool ascii = false);

/// Separable Gaussian blur, sigma in pixels, kernel cut at 3 sigma,
/// borders reflected. sigma <= 0 returns the input unchanged.
GrayImage gaussian_blur(const GrayImage& img, double sigma);

/// Assign each pixel the first interval containing its (optionally blurred)
/// intensity. Overlapping intervals or duplicate labels are rejected.
LabelImage segment_threshold(const GrayImage& img, const SegmentationSpec& spec);

/// Trace the 0.5 level of the indicator of `label` with marching squares on
/// the pixel-center grid. Outer boundaries come back counter-clockwise,
/// holes clockwise, coordinates in um. target_points > 0 resamples each
/// contour to that many points.
std::vector<geometry::Curve> extract_contours(const LabelImage& labels,
                                              const std::string& label,
                                              std::size_t target_points = 0);

} // namespace ingest
} // namespace morpho

#endif
