#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "flash/rangeimg.hpp"
#include "flash/tensor.hpp"
#include "geometry.hpp"
#include "tempdir.hpp"

using namespace flash;
using flash::testing::random_cloud;
using flash::testing::random_image;
using flash::testing::TempDir;

namespace {

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream os(p, std::ios::binary);
    os << bytes;
}

std::string float_bytes(std::initializer_list<float> values) {
    std::string s;
    for (float f : values) s.append(reinterpret_cast<const char*>(&f), 4);
    return s;
}

}  // namespace

TEST_SUITE("rangeimg") {

TEST_CASE("azimuth examples") {
    ProjectionConfig cfg;
    CHECK(pixel_coord({1, 0, 0}, cfg).u == 512.0);
    CHECK(pixel_coord({0, 1, 0}, cfg).u == doctest::Approx(256.0).epsilon(1e-12));
    auto img = project({{{1, 0, 0}, {0, 1, 0}}}, cfg).image;
    std::size_t cols[2] = {0, 0}, k = 0;
    for (std::size_t r = 0; r < cfg.height; ++r)
        for (std::size_t c = 0; c < cfg.width; ++c)
            if (img.valid(r, c)) cols[k++] = c;
    CHECK(k == 2);
    CHECK(((cols[0] == 256 && cols[1] == 512) || (cols[0] == 512 && cols[1] == 256)));
}

TEST_CASE("elevation example: (10,0,0) lands in row 4") {
    ProjectionConfig cfg;
    const double v = pixel_coord({10, 0, 0}, cfg).v;
    CHECK(v == doctest::Approx(64.0 * 2.0 / 26.8).epsilon(1e-12));
    auto res = project({{{10, 0, 0}}}, cfg);
    CHECK(res.image.valid(4, 512));
    CHECK(res.image.at(4, 512) == 10.0f);
}

TEST_CASE("azimuth wraps modulo W") {
    ProjectionConfig cfg;
    // atan2(-0, -1) = -pi gives u = W exactly, which wraps to column 0.
    auto a = project({{{-1, -0.0, 0}}}, cfg).image;
    CHECK(a.valid(4, 0));
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const double phi = (2 * rng.uniform() - 1) * std::numbers::pi;
        const double u1 = pixel_coord({std::cos(phi), std::sin(phi), 0}, cfg).u;
        const double u2 = pixel_coord({std::cos(phi + 2 * std::numbers::pi), std::sin(phi + 2 * std::numbers::pi), 0}, cfg).u;
        CHECK(u1 == doctest::Approx(u2).epsilon(1e-9));
    }
}

TEST_CASE("row coordinate decreases with elevation") {
    ProjectionConfig cfg;
    double prev = 1e300;
    for (int k = 0; k <= 100; ++k) {
        const double el = cfg.theta_min + (cfg.theta_max - cfg.theta_min) * k / 100.0;
        const double v = pixel_coord({std::cos(el), 0, std::sin(el)}, cfg).v;
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("nearest return wins") {
    ProjectionConfig cfg;
    for (bool near_first : {true, false}) {
        PointCloud c;
        c.points = near_first ? std::vector<Point3>{{3, 0, 0}, {5, 0, 0}} : std::vector<Point3>{{5, 0, 0}, {3, 0, 0}};
        auto img = project(c, cfg).image;
        CHECK(img.valid_count() == 1);
        CHECK(img.at(4, 512) == 3.0f);
    }
}

TEST_CASE("out-of-view and out-of-range points are dropped") {
    ProjectionConfig cfg;
    cfg.r_min = 1.0;
    PointCloud c{{{0, 0, 10}, {0.5, 0, 0}, {100, 0, 0}, {10, 0, -1}}};
    auto res = project(c, cfg);
    CHECK(res.dropped == 3);
    CHECK(res.image.valid_count() == 1);
    CHECK(project(PointCloud{}, cfg).image.valid_count() == 0);
}

TEST_CASE("unprojection round trips") {
    ProjectionConfig cfg{32, 128};
    Rng rng(2);
    CHECK(unproject(RangeImage(32, 128), cfg).empty());
    CHECK_THROWS(unproject(RangeImage(16, 128), cfg));
    for (int trial = 0; trial < 50; ++trial) {
        RangeImage img = random_image(cfg, rng);
        CHECK(project(unproject(img, cfg), cfg).image == img);
    }
    for (int trial = 0; trial < 50; ++trial) {
        const PointCloud cloud = random_cloud(300, rng, cfg);
        const RangeImage img = project(cloud, cfg).image;
        const PointCloud back = unproject(img, cfg);
        CHECK(back.size() == img.valid_count());
        CHECK(project(back, cfg).image == img);
        const PointCloud again = unproject(project(back, cfg).image, cfg);
        CHECK(again.points == back.points);
    }
}

TEST_CASE("unprojected points stay within one cell of the original") {
    ProjectionConfig cfg{32, 128};
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const PointCloud one = random_cloud(1, rng, cfg);
        const auto res = project(one, cfg);
        const PointCloud back = unproject(res.image, cfg);
        REQUIRE(back.size() == 1);
        const PixelCoord a = pixel_coord(one.points[0], cfg), b = pixel_coord(back.points[0], cfg);
        double du = std::abs(a.u - b.u);
        du = std::min(du, cfg.width - du);
        CHECK(du <= 0.5 + 1e-9);
        CHECK(std::abs(a.v - b.v) <= 0.5 + 1e-9);
        const double r = one.points[0].norm();
        // Ranges are stored in single precision.
        CHECK(std::abs(back.points[0].norm() - r) <= r * 6e-8);
    }
}

TEST_CASE("log transform") {
    RangeImage img(1, 4);
    img.set(0, 0, 0.0f);
    img.set(0, 1, static_cast<float>(std::numbers::e - 1.0));
    img.set(0, 2, 42.5f);
    const RangeImage lg = log_transform(img);
    CHECK(lg.at(0, 0) == 0.0f);
    CHECK(lg.at(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(lg.mask == img.mask);
    CHECK_FALSE(lg.valid(0, 3));
    const RangeImage back = inverse_log_transform(lg);
    for (std::size_t c = 0; c < 3; ++c) CHECK(back.at(0, c) == doctest::Approx(img.at(0, c)).epsilon(1e-6));
    RangeImage bad(1, 1);
    bad.set(0, 0, -1.0f);
    CHECK_THROWS_AS(log_transform(bad), std::invalid_argument);
}

TEST_CASE("row downsampling") {
    Rng rng(4);
    ProjectionConfig cfg{64, 1024};
    RangeImage img = random_image(cfg, rng);
    RangeImage low = downsample_rows(img, 4);
    CHECK(low.height == 16);
    CHECK(low.width == 1024);
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 1024; ++c) {
            CHECK(low.at(r, c) == img.at(4 * r, c));
            CHECK(low.valid(r, c) == img.valid(4 * r, c));
        }
    CHECK(downsample_rows(img, 1) == img);
    CHECK_THROWS_AS(downsample_rows(img, 3), std::invalid_argument);
    CHECK_THROWS_AS(downsample_rows(img, 0), std::invalid_argument);
}

TEST_CASE("velodyne files") {
    TempDir dir;
    write_bytes(dir / "one.bin", float_bytes({1, 0, 0, 0.5f}));
    const PointCloud c = read_velodyne_bin(dir / "one.bin");
    REQUIRE(c.size() == 1);
    CHECK(c.points[0] == Point3{1, 0, 0});
    write_bytes(dir / "empty.bin", "");
    CHECK(read_velodyne_bin(dir / "empty.bin").empty());
    write_bytes(dir / "trunc.bin", float_bytes({1, 2, 3}));
    CHECK_THROWS(read_velodyne_bin(dir / "trunc.bin"));
    CHECK_THROWS(read_velodyne_bin(dir / "missing.bin"));
    PointCloud w{{{1.5, -2.25, 0.125}, {3, 4, 5}}};
    write_velodyne_bin(w, dir / "w.bin");
    CHECK(read_velodyne_bin(dir / "w.bin").points == w.points);
}

TEST_CASE("FRIM round trip and error contract") {
    TempDir dir;
    Rng rng(5);
    ProjectionConfig cfg{8, 16};
    RangeImage img = random_image(cfg, rng);
    img.range[3] = std::nextafter(7.0f, 8.0f);
    img.mask[3] = 1;
    write_rangeimage(img, dir / "a.frim");
    CHECK(read_rangeimage(dir / "a.frim") == img);
    CHECK(std::filesystem::file_size(dir / "a.frim") == 14 + 8 * 16 * 5);

    write_bytes(dir / "magic.frim", "XRIM" + std::string(6 + 5, '\0'));
    CHECK_THROWS(read_rangeimage(dir / "magic.frim"));
    std::ifstream in(dir / "a.frim", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    write_bytes(dir / "short.frim", bytes.substr(0, bytes.size() - 1));
    CHECK_THROWS(read_rangeimage(dir / "short.frim"));
    bytes.back() = 2;
    write_bytes(dir / "mask.frim", bytes);
    CHECK_THROWS(read_rangeimage(dir / "mask.frim"));
}

TEST_CASE("PLY round trip") {
    TempDir dir;
    PointCloud c{{{1.25, -2.5, 3.0}, {0.1, 0.2, 0.3}}};
    write_ply(c, dir / "c.ply");
    const PointCloud back = read_ply(dir / "c.ply");
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back.points[i].x == doctest::Approx(c.points[i].x).epsilon(1e-8));
        CHECK(back.points[i].z == doctest::Approx(c.points[i].z).epsilon(1e-8));
    }
    write_bytes(dir / "bad.ply", "nope\n");
    CHECK_THROWS(read_ply(dir / "bad.ply"));
}

}
