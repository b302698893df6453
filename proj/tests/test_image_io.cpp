#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "promptrr/image_io.hpp"
#include "promptrr/rng.hpp"
#include "promptrr/tensor.hpp"
#include "support/finite_diff.hpp"

using namespace promptrr;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const fs::path p = fs::temp_directory_path() / "promptrr_io_tests";
    fs::create_directories(p);
    return p;
}

std::string write_raw(const std::string& name, const std::string& header,
                      const std::vector<std::uint8_t>& payload) {
    const fs::path p = scratch_dir() / name;
    std::ofstream out(p, std::ios::binary);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    out.close();
    return p.string();
}

}  // namespace

TEST_CASE("ppm roundtrip stays within quantization error") {
    Rng rng(61);
    const Tensor img = testsupport::random_tensor({3, 9, 7}, rng, false, 0.f, 1.f);
    const std::string path = (scratch_dir() / "roundtrip.ppm").string();
    write_ppm(path, img);
    const Tensor back = read_ppm(path);

    REQUIRE(back.shape() == img.shape());
    float worst = 0.f;
    for (int i = 0; i < img.numel(); ++i)
        worst = std::max(worst, std::abs(back.data()[i] - img.data()[i]));
    CHECK(worst <= 0.5f / 255.f + 1e-6f);
}

TEST_CASE("ppm write-read-write is stable after one quantization") {
    Rng rng(67);
    const Tensor img = testsupport::random_tensor({3, 5, 8}, rng, false, 0.f, 1.f);
    const std::string p1 = (scratch_dir() / "stable1.ppm").string();
    const std::string p2 = (scratch_dir() / "stable2.ppm").string();
    write_ppm(p1, img);
    const Tensor once = read_ppm(p1);
    write_ppm(p2, once);
    const Tensor twice = read_ppm(p2);
    for (int i = 0; i < once.numel(); ++i) CHECK(once.data()[i] == twice.data()[i]);
}

TEST_CASE("ppm reader unpacks interleaved bytes into planes") {
    const std::vector<std::uint8_t> bytes = {0, 128, 255, 10, 20, 30, 40, 50, 60, 70, 80, 90};
    const std::string path = write_raw("crafted.ppm", "P6\n2 2\n255\n", bytes);
    const Tensor t = read_ppm(path);
    REQUIRE(t.shape() == Shape{3, 2, 2});
    // t[c, i, j] == bytes[(i*2 + j)*3 + c] / 255
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                const float want = bytes[static_cast<std::size_t>((i * 2 + j) * 3 + c)] / 255.f;
                CHECK(t.data()[(c * 2 + i) * 2 + j] == want);
            }
    CHECK(t.data()[0] == 0.f);
    CHECK(t.data()[2 * 4] == 1.f);  // first pixel, blue plane
}

TEST_CASE("ppm reader skips header comments") {
    const std::vector<std::uint8_t> bytes = {1, 2, 3, 4, 5, 6};
    const std::string path =
        write_raw("comments.ppm", "P6 # magic\n# a comment line\n2 # width\n1\n# more\n255\n", bytes);
    const Tensor t = read_ppm(path);
    CHECK(t.shape() == Shape{3, 1, 2});
    CHECK(t.data()[0] == 1.f / 255.f);
}

TEST_CASE("ppm reader rejects malformed files") {
    CHECK_THROWS_WITH_AS(read_ppm((scratch_dir() / "missing.ppm").string()),
                         doctest::Contains("cannot open"), TensorError);

    const std::vector<std::uint8_t> six = {1, 2, 3, 4, 5, 6};
    CHECK_THROWS_WITH_AS(read_ppm(write_raw("p5.ppm", "P5\n2 1\n255\n", six)),
                         doctest::Contains("P6"), TensorError);
    CHECK_THROWS_WITH_AS(read_ppm(write_raw("deep.ppm", "P6\n2 1\n65535\n", six)),
                         doctest::Contains("maxval"), TensorError);
    CHECK_THROWS_WITH_AS(read_ppm(write_raw("short.ppm", "P6\n2 2\n255\n", six)),
                         doctest::Contains("truncated"), TensorError);
    CHECK_THROWS_WITH_AS(read_ppm(write_raw("garbage.ppm", "P6\nxx 1\n255\n", six)),
                         doctest::Contains("bad"), TensorError);
    CHECK_THROWS(read_ppm(write_raw("eof.ppm", "P6\n2", {})));
}

TEST_CASE("ppm writer clamps out-of-range values") {
    Tensor img = Tensor::zeros({3, 1, 2});
    img.data()[0] = 1.5f;   // r of pixel 0
    img.data()[1] = -0.5f;  // r of pixel 1
    img.data()[2] = 0.5f;   // g of pixel 0
    const std::string path = (scratch_dir() / "clamp.ppm").string();
    write_ppm(path, img);
    const Tensor back = read_ppm(path);
    CHECK(back.data()[0] == 1.f);
    CHECK(back.data()[1] == 0.f);
    CHECK(back.data()[2] == 128.f / 255.f);
}

TEST_CASE("ppm writer rejects non-image tensors") {
    const std::string path = (scratch_dir() / "reject.ppm").string();
    CHECK_THROWS_WITH_AS(write_ppm(path, Tensor::zeros({1, 4, 4})),
                         doctest::Contains("[3 x H x W]"), TensorError);
    CHECK_THROWS(write_ppm(path, Tensor::zeros({12})));
}
