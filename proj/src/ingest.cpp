#include "morpho/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "morpho/error.hpp"

namespace morpho {
namespace ingest {

void GrayImage::validate() const {
    if (width < 2 || height < 2)
        throw InputError("image: width and height must be at least 2");
    if (!(pixel_size > 0))
        throw InputError("image: pixel size must be positive");
    if (data.size() != std::size_t(width) * height)
        throw InputError("image: pixel buffer size does not match dimensions");
}

int LabelImage::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string next_token(const std::string& buf, std::size_t& pos) {
    while (pos < buf.size()) {
        char c = buf[pos];
        if (c == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t start = pos;
    while (pos < buf.size() &&
           !std::isspace(static_cast<unsigned char>(buf[pos])) &&
           buf[pos] != '#')
        ++pos;
    return buf.substr(start, pos - start);
}

long parse_header_int(const std::string& buf, std::size_t& pos,
                      const char* what) {
    std::string tok = next_token(buf, pos);
    if (tok.empty()) throw InputError(std::string("pgm: missing ") + what);
    try {
        std::size_t used = 0;
        long v = std::stol(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw InputError(std::string("pgm: bad ") + what + " '" + tok + "'");
    }
}

std::string sidecar_path(const std::string& path) {
    std::size_t dot = path.find_last_of('.');
    std::size_t slash = path.find_last_of("/\\");
    if (dot == std::string::npos ||
        (slash != std::string::npos && dot < slash))
        return path + ".json";
    return path.substr(0, dot) + ".json";
}

double read_pixel_size(const std::string& image_path) {
    std::ifstream in(sidecar_path(image_path));
    if (!in) return 1.0;
    try {
        nlohmann::json j;
        in >> j;
        if (j.contains("pixel_size_um")) {
            double v = j["pixel_size_um"].get<double>();
            if (!(v > 0))
                throw InputError("sidecar: pixel_size_um must be positive");
            return v;
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError("sidecar: " + sidecar_path(image_path) + ": " +
                         e.what());
    }
    return 1.0;
}

} // namespace

GrayImage load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("pgm: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();

    std::size_t pos = 0;
    std::string magic = next_token(buf, pos);
    if (magic != "P2" && magic != "P5")
        throw InputError("pgm: unsupported magic '" + magic + "' in " + path);
    long w = parse_header_int(buf, pos, "width");
    long h = parse_header_int(buf, pos, "height");
    long maxval = parse_header_int(buf, pos, "maxval");
    if (w < 2 || h < 2)
        throw InputError("pgm: dimensions must be at least 2x2");
    if (maxval <= 0 || maxval > 65535)
        throw InputError("pgm: maxval " + std::to_string(maxval) +
                         " out of range (1..65535)");

    GrayImage img;
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.pixel_size = read_pixel_size(path);
    std::size_t n = std::size_t(w) * h;
    img.data.resize(n);

    if (magic == "P2") {
        for (std::size_t i = 0; i < n; ++i) {
            long v = parse_header_int(buf, pos, "pixel value");
            if (v < 0 || v > maxval)
                throw InputError("pgm: pixel value " + std::to_string(v) +
                                 " exceeds maxval");
            img.data[i] = static_cast<std::uint16_t>(v);
        }
    } else {
        // One whitespace byte separates the header from the payload.
        if (pos >= buf.size())
            throw InputError("pgm: truncated header in " + path);
        ++pos;
        int bytes = maxval > 255 ? 2 : 1;
        if (buf.size() - pos < n * bytes)
            throw InputError("pgm: truncated pixel data in " + path);
        for (std::size_t i = 0; i < n; ++i) {
            if (bytes == 1) {
                img.data[i] = static_cast<unsigned char>(buf[pos + i]);
            } else {
                unsigned hi = static_cast<unsigned char>(buf[pos + 2 * i]);
                unsigned lo = static_cast<unsigned char>(buf[pos + 2 * i + 1]);
                img.data[i] = static_cast<std::uint16_t>((hi << 8) | lo);
            }
        }
    }
    img.validate();
    return img;
}

void save_pgm(const std::string& path, const GrayImage& img, bool ascii) {
    img.validate();
    std::uint16_t maxv = 0;
    for (auto v : img.data) maxv = std::max(maxv, v);
    int maxval = maxv > 255 ? 65535 : 255;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("pgm: cannot write " + path);
    out << (ascii ? "P2" : "P5") << "\n"
        << img.width << " " << img.height << "\n"
        << maxval << "\n";
    if (ascii) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x)
                out << img.at(x, y) << (x + 1 == img.width ? '\n' : ' ');
        }
    } else if (maxval > 255) {
        for (auto v : img.data) {
            out.put(static_cast<char>(v >> 8));
            out.put(static_cast<char>(v & 0xff));
        }
    } else {
        for (auto v : img.data) out.put(static_cast<char>(v));
    }
    if (!out) throw InputError("pgm: write failed for " + path);
}

namespace {

int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

std::vector<double> gaussian_kernel(double sigma) {
    int half = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * half + 1);
    double sum = 0;
    for (int i = -half; i <= half; ++i) {
        double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[i + half] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

std::vector<double> blur_to_double(const GrayImage& img, double sigma) {
    std::size_t n = img.data.size();
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = img.data[i];
    if (sigma <= 0) return a;

    auto k = gaussian_kernel(sigma);
    int half = static_cast<int>(k.size() / 2);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0;
            for (int d = -half; d <= half; ++d)
                acc += k[d + half] *
                       a[std::size_t(y) * img.width + reflect(x + d, img.width)];
            b[std::size_t(y) * img.width + x] = acc;
        }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0;
            for (int d = -half; d <= half; ++d)
                acc += k[d + half] *
                       b[std::size_t(reflect(y + d, img.height)) * img.width + x];
            a[std::size_t(y) * img.width + x] = acc;
        }
    return a;
}

} // namespace

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    img.validate();
    if (sigma <= 0) return img;
    auto vals = blur_to_double(img, sigma);
    GrayImage out = img;
    for (std::size_t i = 0; i < vals.size(); ++i)
        out.data[i] = static_cast<std::uint16_t>(
            std::clamp(std::lround(vals[i]), 0l, 65535l));
    return out;
}

LabelImage segment_threshold(const GrayImage& img, const SegmentationSpec& spec) {
    img.validate();
    for (const auto& t : spec.thresholds) {
        if (t.label.empty())
            throw InputError("segment: threshold interval without a label");
        if (!(t.lo <= t.hi))
            throw InputError("segment: empty interval for label '" + t.label +
                             "'");
    }
    for (std::size_t i = 0; i < spec.thresholds.size(); ++i)
        for (std::size_t j = i + 1; j < spec.thresholds.size(); ++j) {
            const auto& a = spec.thresholds[i];
            const auto& b = spec.thresholds[j];
            if (a.label == b.label)
                throw InputError("segment: duplicate label '" + a.label + "'");
            if (std::max(a.lo, b.lo) <= std::min(a.hi, b.hi))
                throw InputError("segment: intervals for '" + a.label +
                                 "' and '" + b.label + "' overlap");
        }

    auto vals = blur_to_double(img, spec.smoothing_radius);
    LabelImage out;
    out.width = img.width;
    out.height = img.height;
    out.pixel_size = img.pixel_size;
    for (const auto& t : spec.thresholds) out.names.push_back(t.label);
    out.labels.assign(vals.size(), -1);
    for (std::size_t p = 0; p < vals.size(); ++p) {
        for (std::size_t k = 0; k < spec.thresholds.size(); ++k) {
            if (vals[p] >= spec.thresholds[k].lo &&
                vals[p] <= spec.thresholds[k].hi) {
                out.labels[p] = static_cast<int>(k);
                break;
            }
        }
    }
    return out;
}

namespace {

// Marching squares runs on the pixel-center lattice: sample (i,j) sits at
// ((i+0.5), (j+0.5)) in pixel units, everything outside the image is
// background. Contour vertices are edge midpoints of that lattice; doubling
// their lattice coordinates gives exact integer keys for linking.
struct EdgeKey {
    int x2; // doubled coordinates in pixel-center units
    int y2;
    bool operator==(const EdgeKey& o) const { return x2 == o.x2 && y2 == o.y2; }
};

struct EdgeKeyHash {
    std::size_t operator()(const EdgeKey& k) const {
        return std::hash<long long>()(
            (static_cast<long long>(k.x2) << 32) ^
            static_cast<unsigned>(k.y2));
    }
};

} // namespace

std::vector<geometry::Curve> extract_contours(const LabelImage& labels,
                                              const std::string& label,
                                              std::size_t target_points) {
    int idx = labels.index_of(label);
    std::vector<geometry::Curve> out;
    if (idx < 0) return out;

    auto inside = [&](int x, int y) -> int {
        if (x < 0 || y < 0 || x >= labels.width || y >= labels.height) return 0;
        return labels.at(x, y) == idx ? 1 : 0;
    };

    // Directed segments with the labeled region on the left; loops around
    // outer boundaries run counter-clockwise, around holes clockwise.
    std::unordered_map<EdgeKey, EdgeKey, EdgeKeyHash> next;
    std::vector<EdgeKey> starts; // in scan order, for deterministic output

    for (int j = -1; j < labels.height; ++j) {
        for (int i = -1; i < labels.width; ++i) {
            int a = inside(i, j);         // bottom-left of the cell
            int b = inside(i + 1, j);     // bottom-right
            int c = inside(i + 1, j + 1); // top-right
            int d = inside(i, j + 1);     // top-left
            int code = a | (b << 1) | (c << 2) | (d << 3);
            if (code == 0 || code == 15) continue;

            // Midpoints in doubled pixel-center coordinates. The cell spans
            // centers (i+0.5, j+0.5)..(i+1.5, j+1.5).
            EdgeKey S{2 * i + 2, 2 * j + 1};
            EdgeKey E{2 * i + 3, 2 * j + 2};
            EdgeKey N{2 * i + 2, 2 * j + 3};
            EdgeKey W{2 * i + 1, 2 * j + 2};

            auto emit = [&](EdgeKey from, EdgeKey to) {
                next.emplace(from, to);
                starts.push_back(from);
            };
            switch (code) {
                case 1: emit(S, W); break;
                case 2: emit(E, S); break;
                case 3: emit(E, W); break;
                case 4: emit(N, E); break;
                case 5: emit(S, W); emit(N, E); break; // saddle: kept apart
                case 6: emit(N, S); break;
                case 7: emit(N, W); break;
                case 8: emit(W, N); break;
                case 9: emit(S, N); break;
                case 10: emit(E, S); emit(W, N); break; // saddle: kept apart
                case 11: emit(E, N); break;
                case 12: emit(W, E); break;
                case 13: emit(S, E); break;
                case 14: emit(W, S); break;
                default: break;
            }
        }
    }

    std::unordered_map<EdgeKey, bool, EdgeKeyHash> used;
    double half = 0.5 * labels.pixel_size;
    for (const auto& start : starts) {
        if (used.count(start)) continue;
        geometry::Curve c;
        c.closed = true;
        c.label = label;
        EdgeKey cur = start;
        do {
            used[cur] = true;
            c.points.push_back({cur.x2 * half, cur.y2 * half});
            auto it = next.find(cur);
            if (it == next.end())
                throw ComputeError("contours: broken contour chain");
            cur = it->second;
        } while (!(cur == start));
        if (target_points >= 3)
            c = geometry::resample_equidistant(c, target_points);
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace ingest
} // namespace morpho
