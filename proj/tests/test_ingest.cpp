#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "morpho/ingest.hpp"
#include "test_helpers.hpp"

using namespace morpho::ingest;
using namespace morpho::geometry;
using morpho::InputError;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/morpho_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

GrayImage disk_image(int size, int cx, int cy, double r, std::uint16_t fg,
                     std::uint16_t bg) {
    GrayImage img;
    img.width = size;
    img.height = size;
    img.data.assign(std::size_t(size) * size, bg);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= r * r) img.at(x, y) = fg;
        }
    return img;
}

double total_signed_area(const std::vector<Curve>& curves) {
    double a = 0;
    for (const auto& c : curves) a += signed_area(c);
    return a;
}

std::size_t count_label(const LabelImage& li, const std::string& name) {
    int idx = li.index_of(name);
    std::size_t n = 0;
    for (int v : li.labels) n += (v == idx);
    return n;
}

} // namespace

TEST_CASE("pgm reading: ascii, binary, comments, errors") {
    SUBCASE("ascii with comments") {
        TempFile f("a.pgm");
        write_file(f.path,
                   "P2\n# a comment\n2 2\n# another\n255\n0 255\n255 0\n");
        GrayImage img = load_image(f.path);
        CHECK(img.width == 2);
        CHECK(img.height == 2);
        CHECK(img.pixel_size == 1.0);
        CHECK(img.data == std::vector<std::uint16_t>{0, 255, 255, 0});
    }
    SUBCASE("binary matches ascii") {
        TempFile fa("b1.pgm"), fb("b2.pgm");
        write_file(fa.path, "P2\n2 2\n255\n0 255 255 0\n");
        std::string bin = "P5\n2 2\n255\n";
        bin.push_back('\0');
        bin.push_back('\xff');
        bin.push_back('\xff');
        bin.push_back('\0');
        write_file(fb.path, bin);
        CHECK(load_image(fa.path).data == load_image(fb.path).data);
    }
    SUBCASE("two-byte binary samples are big endian") {
        TempFile f("c.pgm");
        std::string bin = "P5\n2 2\n65535\n";
        const unsigned char bytes[8] = {0x01, 0x00, 0x00, 0x02,
                                        0xff, 0xff, 0x00, 0x00};
        bin.append(reinterpret_cast<const char*>(bytes), 8);
        write_file(f.path, bin);
        GrayImage img = load_image(f.path);
        CHECK(img.data == std::vector<std::uint16_t>{256, 2, 65535, 0});
    }
    SUBCASE("sidecar json sets the pixel size") {
        TempFile f("d.pgm"), fj("d.json");
        write_file(f.path, "P2\n2 2\n255\n0 1 2 3\n");
        write_file(fj.path, "{\"pixel_size_um\": 0.4}");
        CHECK(load_image(f.path).pixel_size == doctest::Approx(0.4));
    }
    SUBCASE("malformed input is rejected with a reason") {
        TempFile f("e.pgm");
        write_file(f.path, "P3\n2 2\n255\n");
        CHECK_THROWS_AS(load_image(f.path), InputError);
        write_file(f.path, "P2\n2 2\n70000\n0 0 0 0\n");
        CHECK_THROWS_AS(load_image(f.path), InputError);
        write_file(f.path, "P2\n2 2\n255\n0 0 0\n");
        CHECK_THROWS_AS(load_image(f.path), InputError);
        std::string bin = "P5\n2 2\n255\nab"; // two bytes short
        write_file(f.path, bin);
        CHECK_THROWS_AS(load_image(f.path), InputError);
        CHECK_THROWS_AS(load_image("/tmp/does_not_exist_morpho.pgm"),
                        InputError);
    }
}

TEST_CASE("pgm round trip is bit exact") {
    std::mt19937 rng(7);
    GrayImage img = disk_image(64, 32, 32, 20.0, 200, 10);
    // Sprinkle noise so the payload is not trivially uniform.
    std::uniform_int_distribution<int> noise(0, 255);
    for (auto& v : img.data)
        v = static_cast<std::uint16_t>(std::min(255, v + noise(rng) / 64));

    for (bool ascii : {false, true}) {
        TempFile f(ascii ? "rt_a.pgm" : "rt_b.pgm");
        save_pgm(f.path, img, ascii);
        GrayImage back = load_image(f.path);
        CHECK(back.width == img.width);
        CHECK(back.height == img.height);
        CHECK(back.data == img.data);
    }

    // Wide-value image exercises the two-byte path.
    for (auto& v : img.data) v = static_cast<std::uint16_t>(v * 257);
    TempFile f("rt_wide.pgm");
    save_pgm(f.path, img);
    CHECK(load_image(f.path).data == img.data);
}

TEST_CASE("gaussian blur") {
    SUBCASE("constant image is unchanged") {
        GrayImage img;
        img.width = img.height = 16;
        img.data.assign(256, 777);
        GrayImage b = gaussian_blur(img, 2.0);
        CHECK(b.data == img.data);
    }
    SUBCASE("impulse response matches the normalized kernel") {
        GrayImage img;
        img.width = 33;
        img.height = 33;
        img.data.assign(33 * 33, 0);
        img.at(16, 16) = 10000;
        double sigma = 1.5;
        GrayImage b = gaussian_blur(img, sigma);
        // Oracle: separable kernel evaluated directly.
        int half = static_cast<int>(std::ceil(3 * sigma));
        double norm = 0;
        for (int i = -half; i <= half; ++i)
            norm += std::exp(-0.5 * i * i / (sigma * sigma));
        for (int dy = -3; dy <= 3; ++dy)
            for (int dx = -3; dx <= 3; ++dx) {
                double want = 10000 *
                              std::exp(-0.5 * dx * dx / (sigma * sigma)) / norm *
                              std::exp(-0.5 * dy * dy / (sigma * sigma)) / norm;
                CHECK(std::abs(b.at(16 + dx, 16 + dy) - want) <= 0.5 + 1e-9);
            }
    }
    SUBCASE("mass is conserved away from borders") {
        GrayImage img = disk_image(64, 32, 32, 10.0, 1000, 0);
        GrayImage b = gaussian_blur(img, 2.0);
        double before = 0, after = 0;
        for (auto v : img.data) before += v;
        for (auto v : b.data) after += v;
        // Rounding each pixel costs at most half a unit.
        CHECK(std::abs(after - before) <= 0.5 * img.data.size());
    }
}

TEST_CASE("threshold segmentation") {
    SUBCASE("constant image, covering interval") {
        GrayImage img;
        img.width = img.height = 8;
        img.data.assign(64, 42);
        SegmentationSpec spec;
        spec.thresholds = {{"organ", 0, 100}};
        LabelImage li = segment_threshold(img, spec);
        CHECK(count_label(li, "organ") == 64);
    }
    SUBCASE("bimodal image selects exactly the bright pixels") {
        GrayImage img;
        img.width = img.height = 8;
        img.data.assign(64, 0);
        std::size_t bright = 0;
        for (std::size_t i = 0; i < 64; i += 3) {
            img.data[i] = 255;
            ++bright;
        }
        SegmentationSpec spec;
        spec.thresholds = {{"bright", 128, 255}};
        LabelImage li = segment_threshold(img, spec);
        CHECK(count_label(li, "bright") == bright);
        int idx = li.index_of("bright");
        for (std::size_t i = 0; i < 64; ++i)
            CHECK((li.labels[i] == idx) == (img.data[i] == 255));
    }
    SUBCASE("multiple labels partition by interval") {
        GrayImage img;
        img.width = img.height = 4;
        img.data = {0,  10, 20, 30, 40, 50, 60,  70,
                    80, 90, 100, 110, 120, 130, 140, 150};
        SegmentationSpec spec;
        spec.thresholds = {{"low", 0, 49}, {"high", 50, 200}};
        LabelImage li = segment_threshold(img, spec);
        CHECK(count_label(li, "low") == 5);
        CHECK(count_label(li, "high") == 11);
    }
    SUBCASE("overlapping intervals and duplicate labels are rejected") {
        GrayImage img;
        img.width = img.height = 4;
        img.data.assign(16, 0);
        SegmentationSpec spec;
        spec.thresholds = {{"a", 0, 100}, {"b", 100, 200}};
        CHECK_THROWS_AS(segment_threshold(img, spec), InputError);
        spec.thresholds = {{"a", 0, 10}, {"a", 20, 30}};
        CHECK_THROWS_AS(segment_threshold(img, spec), InputError);
        spec.thresholds = {{"a", 30, 20}};
        CHECK_THROWS_AS(segment_threshold(img, spec), InputError);
    }
    SUBCASE("deterministic and idempotent") {
        GrayImage img = disk_image(32, 16, 16, 9.0, 200, 10);
        SegmentationSpec spec;
        spec.thresholds = {{"organ", 100, 255}};
        spec.smoothing_radius = 1.0;
        LabelImage a = segment_threshold(img, spec);
        LabelImage b = segment_threshold(img, spec);
        CHECK(a.labels == b.labels);
    }
    SUBCASE("blurred disk keeps its area") {
        double r = 10.0;
        GrayImage img = disk_image(64, 32, 32, r, 200, 10);
        SegmentationSpec spec;
        spec.thresholds = {{"organ", 100, 255}};
        spec.smoothing_radius = 1.0;
        LabelImage li = segment_threshold(img, spec);
        double area = static_cast<double>(count_label(li, "organ"));
        double want = M_PI * r * r;
        CHECK(std::abs(area - want) / want < 0.05);
    }
}

TEST_CASE("contour extraction") {
    SUBCASE("filled square: one simple closed CCW curve of known area") {
        GrayImage img;
        img.width = img.height = 16;
        img.pixel_size = 0.5;
        img.data.assign(256, 0);
        for (int y = 3; y < 13; ++y)
            for (int x = 3; x < 13; ++x) img.at(x, y) = 255;
        SegmentationSpec spec;
        spec.thresholds = {{"organ", 128, 255}};
        LabelImage li = segment_threshold(img, spec);
        auto curves = extract_contours(li, "organ");
        REQUIRE(curves.size() == 1);
        const Curve& c = curves[0];
        CHECK(c.closed);
        CHECK(c.label == "organ");
        CHECK_NOTHROW(c.validate());
        // 10x10 pixels; the contour rounds each corner off by half a pixel
        // triangle: 100 - 4 * 0.125 pixel^2, scaled by pixel_size^2.
        double px2 = 0.5 * 0.5;
        CHECK(signed_area(c) == doctest::Approx(99.5 * px2).epsilon(1e-12));
        // Pixel-count oracle within the boundary band.
        double count = static_cast<double>(count_label(li, "organ"));
        CHECK(std::abs(signed_area(c) / px2 - count) <= 1.0);
    }

    SUBCASE("disk: area within two percent of the analytic value") {
        double r = 20.0;
        GrayImage img = disk_image(64, 32, 32, r, 255, 0);
        SegmentationSpec spec;
        spec.thresholds = {{"organ", 128, 255}};
        LabelImage li = segment_threshold(img, spec);
        auto curves = extract_contours(li, "organ");
        REQUIRE(curves.size() == 1);
        CHECK_NOTHROW(curves[0].validate());
        double want = M_PI * r * r;
        CHECK(std::abs(signed_area(curves[0]) - want) / want < 0.02);
    }

    SUBCASE("annulus: outer CCW plus hole CW") {
        GrayImage img;
        img.width = img.height = 64;
        img.data.assign(64 * 64, 0);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                double dx = x - 32, dy = y - 32;
                double d2 = dx * dx + dy * dy;
                if (d2 <= 20 * 20 && d2 >= 8 * 8) img.at(x, y) = 255;
            }
        SegmentationSpec spec;
        spec.thresholds = {{"organ", 128, 255}};
        LabelImage li = segment_threshold(img, spec);
        auto curves = extract_contours(li, "organ");
        REQUIRE(curves.size() == 2);
        double outer = 0, inner = 0;
        for (const auto& c : curves) {
            CHECK_NOTHROW(c.validate());
            double a = signed_area(c);
            if (a > 0)
                outer = a;
            else
                inner = a;
        }
        CHECK(outer > 0);
        CHECK(inner < 0);
        double want = M_PI * (20.0 * 20.0 - 8.0 * 8.0);
        CHECK(std::abs((outer + inner) - want) / want < 0.03);
        // Net area matches the pixel count within the boundary band.
        double count = static_cast<double>(count_label(li, "organ"));
        double perimeter_band = 2 * M_PI * (20.0 + 8.0);
        CHECK(std::abs((outer + inner) - count) < perimeter_band);
    }

    SUBCASE("diagonal saddle pixels stay separate loops") {
        GrayImage img;
        img.width = img.height = 4;
        img.data.assign(16, 0);
        img.at(1, 1) = 255;
        img.at(2, 2) = 255;
        SegmentationSpec spec;
        spec.thresholds = {{"organ", 128, 255}};
        auto curves = extract_contours(segment_threshold(img, spec), "organ");
        REQUIRE(curves.size() == 2);
        for (const auto& c : curves) {
            CHECK(c.size() == 4);
            CHECK_NOTHROW(c.validate());
            CHECK(signed_area(c) == doctest::Approx(0.5)); // half-pixel diamond
        }
    }

    SUBCASE("absent label gives an empty list") {
        GrayImage img = disk_image(16, 8, 8, 4.0, 255, 0);
        SegmentationSpec spec;
        spec.thresholds = {{"organ", 128, 255}};
        auto curves = extract_contours(segment_threshold(img, spec), "nope");
        CHECK(curves.empty());
    }

    SUBCASE("decimation to a target point count") {
        GrayImage img = disk_image(64, 32, 32, 20.0, 255, 0);
        SegmentationSpec spec;
        spec.thresholds = {{"organ", 128, 255}};
        auto curves = extract_contours(segment_threshold(img, spec), "organ", 64);
        REQUIRE(curves.size() == 1);
        CHECK(curves[0].size() == 64);
        // Chords stay equal after decimation.
        double mn = 1e300, mx = 0;
        for (std::size_t i = 0; i < 64; ++i) {
            double d = dist(curves[0].segment_start(i), curves[0].segment_end(i));
            mn = std::min(mn, d);
            mx = std::max(mx, d);
        }
        CHECK((mx - mn) / mx < 1e-6);
    }

    SUBCASE("random blobs: orientation and area bookkeeping hold") {
        std::mt19937 rng(99);
        std::uniform_real_distribution<double> uc(8.0, 40.0), us(3.0, 7.0);
        for (int trial = 0; trial < 6; ++trial) {
            GrayImage img;
            img.width = img.height = 48;
            img.data.assign(48 * 48, 0);
            double cx[3], cy[3], s[3];
            for (int k = 0; k < 3; ++k) {
                cx[k] = uc(rng);
                cy[k] = uc(rng);
                s[k] = us(rng);
            }
            for (int y = 0; y < 48; ++y)
                for (int x = 0; x < 48; ++x) {
                    double f = 0;
                    for (int k = 0; k < 3; ++k) {
                        double dx = x - cx[k], dy = y - cy[k];
                        f += std::exp(-0.5 * (dx * dx + dy * dy) / (s[k] * s[k]));
                    }
                    img.at(x, y) =
                        static_cast<std::uint16_t>(std::min(65535.0, 1000 * f));
                }
            SegmentationSpec spec;
            spec.thresholds = {{"organ", 400, 65535}};
            LabelImage li = segment_threshold(img, spec);
            auto curves = extract_contours(li, "organ");
            double count = static_cast<double>(count_label(li, "organ"));
            if (count == 0) {
                CHECK(curves.empty());
                continue;
            }
            REQUIRE(!curves.empty());
            double perimeter = 0;
            for (const auto& c : curves) {
                CHECK_NOTHROW(c.validate());
                perimeter += c.length();
            }
            CHECK(std::abs(total_signed_area(curves) - count) <= perimeter);
        }
    }
}
