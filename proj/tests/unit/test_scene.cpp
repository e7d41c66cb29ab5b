#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mvgs/error.hpp"
#include "mvgs/rng.hpp"
#include "mvgs/scene.hpp"

using namespace mvgs;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("mvgs_test_scene_" + name);
}

std::string camera_line() {
    return "1 0 0 0 1 0 0 0 1 0 0 3 50 50 32 32 64 64 0.01 100\n";
}

}  // namespace

TEST(Scene, ParsesOneRecordAndRenormalizesQuaternion) {
    const std::string text = "splatscene 1\ngaussians 1\n0.1 0.2 0.3 -2 -2 -2 2 0 0 0 0.5 0.2 0.4 0.6\ncameras 1\n" +
                             camera_line();
    const SceneFile sf = parse_scene(text);
    ASSERT_EQ(sf.gaussians.size(), 1u);
    EXPECT_EQ(sf.renormalized_quaternions, 1);
    EXPECT_DOUBLE_EQ(sf.gaussians[0].rotation.w, 1.0);
    EXPECT_DOUBLE_EQ(sf.gaussians[0].mean.y, 0.2);
    ASSERT_EQ(sf.cameras.size(), 1u);
    EXPECT_EQ(sf.cameras[0].width, 64);
}

TEST(Scene, EmptyGaussianSection) {
    const SceneFile sf = parse_scene("splatscene 1\ngaussians 0\ncameras 1\n" + camera_line());
    EXPECT_TRUE(sf.gaussians.empty());
}

TEST(Scene, ShortRecordNamesLine) {
    const std::string text = "splatscene 1\ngaussians 1\n0 0 0 0 0 0 1 0 0 0 0 0.5\ncameras 0\n";
    try {
        parse_scene(text);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_NE(std::string(e.what()).find("line 3: expected 14 fields"), std::string::npos) << e.what();
    }
}

TEST(Scene, RejectsBadHeaderAndNonNumbers) {
    EXPECT_THROW(parse_scene("splatscene 2\ngaussians 0\ncameras 0\n"), ParseError);
    EXPECT_THROW(parse_scene("splatscene 1\ngaussians 1\n0 0 x 0 0 0 1 0 0 0 0 0 0 0\ncameras 0\n"), ParseError);
    EXPECT_THROW(parse_scene("splatscene 1\ngaussians 0\ncameras 0\nextra\n"), ParseError);
}

TEST(Scene, RoundTripWithinTolerance) {
    const SyntheticScene s = make_synthetic(3, 10, 3, CameraLayout::random);
    const auto path = temp_path("roundtrip.txt");
    save_scene(s.gaussians, s.cameras, path);
    const SceneFile back = load_scene(path);
    ASSERT_EQ(back.gaussians.size(), s.gaussians.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < s.gaussians.size(); ++i) {
        const Gaussian3D& a = s.gaussians[i];
        const Gaussian3D& b = back.gaussians[i];
        for (int k = 0; k < 3; ++k) {
            worst = std::max({worst, std::abs(a.mean[k] - b.mean[k]), std::abs(a.log_scale[k] - b.log_scale[k]),
                              std::abs(a.color[k] - b.color[k])});
        }
        for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(a.rotation[k] - b.rotation[k]));
        worst = std::max(worst, std::abs(a.opacity_logit - b.opacity_logit));
    }
    EXPECT_LE(worst, 1e-9);
    EXPECT_EQ(format_scene(back.gaussians, back.cameras), format_scene(s.gaussians, s.cameras));
    std::filesystem::remove(path);
}

TEST(Scene, SavesAreByteIdentical) {
    const SyntheticScene s = make_synthetic(4, 12, 2, CameraLayout::orbit);
    EXPECT_EQ(format_scene(s.gaussians, s.cameras), format_scene(s.gaussians, s.cameras));
}

TEST(Synthetic, SeededDeterminism) {
    const SyntheticScene a = make_synthetic(7, 100, 8, CameraLayout::orbit);
    const SyntheticScene b = make_synthetic(7, 100, 8, CameraLayout::orbit);
    EXPECT_EQ(format_scene(a.gaussians, a.cameras), format_scene(b.gaussians, b.cameras));
    const SyntheticScene c = make_synthetic(8, 100, 8, CameraLayout::orbit);
    EXPECT_NE(format_scene(a.gaussians, a.cameras), format_scene(c.gaussians, c.cameras));
}

TEST(Synthetic, OrbitPairFacesOrigin) {
    const SyntheticScene s = make_synthetic(1, 5, 2, CameraLayout::orbit);
    const Vec3 c0 = s.cameras[0].center();
    const Vec3 c1 = s.cameras[1].center();
    EXPECT_NEAR(c0.x, 3.0, 1e-12);
    EXPECT_NEAR(c0.z, 0.0, 1e-12);
    EXPECT_NEAR(c1.x, -3.0, 1e-12);
    EXPECT_NEAR(c1.z, 0.0, 1e-9);
    for (const Camera& cam : s.cameras) {
        const Vec3 f = cam.forward();
        const Vec3 expect = -1.0 / norm(cam.center()) * cam.center();
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(f[k], expect[k], 1e-12);
        EXPECT_NEAR(cam.world_to_camera({}).x, 0.0, 1e-12);
        EXPECT_NEAR(cam.world_to_camera({}).y, 0.0, 1e-12);
    }
}

TEST(Synthetic, SampledRanges) {
    const SyntheticScene s = make_synthetic(11, 500, 4, CameraLayout::random);
    for (const Gaussian3D& g : s.gaussians) {
        EXPECT_LE(norm(g.mean), 1.0);
        for (int k = 0; k < 3; ++k) {
            EXPECT_GE(g.scale()[k], 0.01 - 1e-12);
            EXPECT_LE(g.scale()[k], 0.15 + 1e-12);
        }
        EXPECT_GE(g.opacity(), 0.3 - 1e-12);
        EXPECT_LE(g.opacity(), 0.95 + 1e-12);
        const Quat& q = g.rotation;
        EXPECT_NEAR(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z, 1.0, 1e-12);
    }
    for (const Camera& cam : s.cameras) EXPECT_NEAR(norm(cam.center()), 3.0, 1e-12);
}

TEST(Synthetic, RejectsSingleCamera) {
    EXPECT_THROW(make_synthetic(1, 10, 1, CameraLayout::orbit), Error);
    EXPECT_THROW(make_synthetic(1, 0, 3, CameraLayout::orbit), Error);
}

TEST(Images, PpmRoundTripQuantizes) {
    Rng rng(5);
    Image img(7, 5);
    for (double& p : img.pixels) p = rng.uniform(-0.2, 1.2);
    const auto path = temp_path("img.ppm");
    write_ppm(img, path);
    const Image back = read_ppm(path);
    ASSERT_EQ(back.width, 7);
    ASSERT_EQ(back.height, 5);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        EXPECT_DOUBLE_EQ(back.pixels[i], std::round(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0) / 255.0);
    std::filesystem::remove(path);
}

TEST(Images, DepthRoundTrip) {
    Image img(3, 2);
    img.depth = {1.5, 2.25, 100.0, 0.125, 3.0, 7.0};
    const auto path = temp_path("img.depth");
    write_depth(img, path);
    int w = 0, h = 0;
    const std::vector<double> d = read_depth(path, w, h);
    EXPECT_EQ(w, 3);
    EXPECT_EQ(h, 2);
    EXPECT_EQ(d, img.depth);
    std::filesystem::remove(path);
}

TEST(Dataset, ValidatesSizes) {
    SceneDataset data;
    const SyntheticScene s = make_synthetic(1, 3, 2, CameraLayout::orbit);
    data.cameras = s.cameras;
    data.images = {Image(64, 64)};
    EXPECT_THROW(data.validate(), Error);
    data.images.push_back(Image(32, 64));
    EXPECT_THROW(data.validate(), Error);
    data.images[1] = Image(64, 64);
    EXPECT_NO_THROW(data.validate());
}
