#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "atlasloom/autodiff.hpp"
#include "atlasloom/nifti.hpp"

using namespace atlasloom;
using namespace atlasloom::vol;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "atlasloom_nifti_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
}

Volume3D make_random_volume(std::uint64_t seed) {
    Volume3D v({8, 8, 8}, centered_grid({8, 8, 8}, {1.0, 1.0, 2.0}).affine);
    ad::Rng rng(seed);
    for (auto& d : v.data()) d = static_cast<float>(rng.uniform_range(-5.0, 5.0));
    return v;
}

}  // namespace

TEST_CASE("write then read round-trips payload and header exactly") {
    auto v = make_random_volume(7);
    const auto path = temp_file("roundtrip.nii");
    write_volume(v, path.string());
    auto r = read_volume(path.string());
    CHECK(r.dims() == v.dims());
    CHECK(r.data() == v.data());
    CHECK(r.affine().equals(v.affine(), 0.0));

    // A second write of the read-back volume is bit-identical on disk.
    const auto path2 = temp_file("roundtrip2.nii");
    write_volume(r, path2.string());
    CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("wrong magic is rejected as unsupported") {
    auto v = make_random_volume(8);
    const auto path = temp_file("badmagic.nii");
    write_volume(v, path.string());
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(344);
        f.write("x+1", 3);
    }
    try {
        read_volume(path.string());
        FAIL("expected VolumeIoError");
    } catch (const VolumeIoError& e) {
        CHECK(e.status() == VolumeIoStatus::BadMagic);
    }
}

TEST_CASE("unsupported datatype is rejected with its own status") {
    auto v = make_random_volume(9);
    const auto path = temp_file("baddtype.nii");
    write_volume(v, path.string());
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(70);
        const char dt[2] = {64, 0};  // float64 code, unsupported
        f.write(dt, 2);
    }
    try {
        read_volume(path.string());
        FAIL("expected VolumeIoError");
    } catch (const VolumeIoError& e) {
        CHECK(e.status() == VolumeIoStatus::UnsupportedDatatype);
    }
}

TEST_CASE("truncated payload is rejected") {
    auto v = make_random_volume(10);
    const auto path = temp_file("trunc.nii");
    write_volume(v, path.string());
    std::filesystem::resize_file(path, 352 + 100);
    try {
        read_volume(path.string());
        FAIL("expected VolumeIoError");
    } catch (const VolumeIoError& e) {
        CHECK(e.status() == VolumeIoStatus::Truncated);
    }
}

TEST_CASE("int16 payloads promote to float exactly over the full range") {
    // Hand-build an int16 file: 256 voxels sweeping the int16 range.
    const auto path = temp_file("int16.nii");
    auto v = make_random_volume(11);
    write_volume(v, path.string());  // template header to edit
    auto bytes = read_bytes(path);
    bytes[70] = 4;  // datatype int16
    bytes[71] = 0;
    bytes[72] = 16;  // bitpix
    bytes.resize(352);
    std::vector<std::int16_t> samples;
    for (int i = 0; i < 512; ++i)
        samples.push_back(static_cast<std::int16_t>(-32768 + i * 128));
    for (std::int16_t s : samples) {
        bytes.push_back(static_cast<unsigned char>(s & 0xff));
        bytes.push_back(static_cast<unsigned char>((s >> 8) & 0xff));
    }
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    auto r = read_volume(path.string());
    for (std::size_t i = 0; i < samples.size(); ++i)
        CHECK(r.data()[i] == static_cast<float>(samples[i]));
}

TEST_CASE("missing file reports a file access error") {
    try {
        read_volume("/nonexistent/path/volume.nii");
        FAIL("expected VolumeIoError");
    } catch (const VolumeIoError& e) {
        CHECK(e.status() == VolumeIoStatus::FileAccess);
    }
}
