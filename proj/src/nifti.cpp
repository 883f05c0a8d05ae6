#include "atlasloom/nifti.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace atlasloom::vol {

namespace {

constexpr int kHeaderSize = 348;
constexpr float kVoxOffset = 352.0f;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtInt16 = 4;

// Little-endian scalar store/load into a byte buffer.
template <typename T>
void store_le(std::vector<unsigned char>& buf, std::size_t offset, T value) {
    static_assert(sizeof(T) <= 8);
    std::uint64_t bits = 0;
    std::memcpy(&bits, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf[offset + i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
}

template <typename T>
T load_le(const unsigned char* buf) {
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
}

}  // namespace

Volume3D read_volume(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw VolumeIoError(VolumeIoStatus::FileAccess, "cannot open volume file: " + path);

    std::vector<unsigned char> hdr(kHeaderSize);
    in.read(reinterpret_cast<char*>(hdr.data()), kHeaderSize);
    if (in.gcount() != kHeaderSize)
        throw VolumeIoError(VolumeIoStatus::Truncated, "truncated header: " + path);

    if (load_le<std::int32_t>(&hdr[0]) != kHeaderSize || hdr[344] != 'n' || hdr[345] != '+' ||
        hdr[346] != '1' || hdr[347] != 0)
        throw VolumeIoError(VolumeIoStatus::BadMagic, "not a supported volume file: " + path);

    const std::int16_t ndim = load_le<std::int16_t>(&hdr[40]);
    if (ndim != 3)
        throw VolumeIoError(VolumeIoStatus::HeaderInvalid,
                            "expected a 3D volume, dim[0]=" + std::to_string(ndim));

    std::array<int, 3> dims;
    for (int c = 0; c < 3; ++c) {
        dims[c] = load_le<std::int16_t>(&hdr[42 + 2 * c]);
        if (dims[c] <= 0)
            throw VolumeIoError(VolumeIoStatus::HeaderInvalid, "non-positive dimension in header");
    }

    const std::int16_t datatype = load_le<std::int16_t>(&hdr[70]);
    if (datatype != kDtFloat32 && datatype != kDtInt16)
        throw VolumeIoError(VolumeIoStatus::UnsupportedDatatype,
                            "unsupported datatype code " + std::to_string(datatype));

    const float vox_offset = load_le<float>(&hdr[108]);
    if (vox_offset < kHeaderSize)
        throw VolumeIoError(VolumeIoStatus::HeaderInvalid, "vox_offset below header size");

    Mat4 affine = Mat4::identity();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            affine.at(r, c) = static_cast<double>(load_le<float>(&hdr[280 + 16 * r + 4 * c]));
    if (std::abs(affine.linear().det()) < 1e-12)
        throw VolumeIoError(VolumeIoStatus::HeaderInvalid, "singular affine in header");

    in.seekg(static_cast<std::streamoff>(vox_offset), std::ios::beg);
    const std::int64_t n = static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
    const std::size_t elem = datatype == kDtFloat32 ? 4 : 2;
    std::vector<unsigned char> payload(static_cast<std::size_t>(n) * elem);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (in.gcount() != static_cast<std::streamsize>(payload.size()))
        throw VolumeIoError(VolumeIoStatus::Truncated, "truncated payload: " + path);

    Volume3D vol(dims, affine, 0.0f);
    if (datatype == kDtFloat32) {
        for (std::int64_t i = 0; i < n; ++i)
            vol.data()[static_cast<std::size_t>(i)] = load_le<float>(&payload[4 * i]);
    } else {
        // int16 promotes to float exactly; all values are <= 2^15.
        for (std::int64_t i = 0; i < n; ++i)
            vol.data()[static_cast<std::size_t>(i)] =
                static_cast<float>(load_le<std::int16_t>(&payload[2 * i]));
    }
    return vol;
}

void write_volume(const Volume3D& vol, const std::string& path) {
    std::vector<unsigned char> hdr(352, 0);  // header + 4-byte extension flag
    store_le<std::int32_t>(hdr, 0, kHeaderSize);
    store_le<std::int16_t>(hdr, 40, 3);  // dim[0]
    for (int c = 0; c < 3; ++c)
        store_le<std::int16_t>(hdr, 42 + 2 * c, static_cast<std::int16_t>(vol.dims()[c]));
    for (int c = 3; c < 7; ++c) store_le<std::int16_t>(hdr, 42 + 2 * c, 1);
    store_le<std::int16_t>(hdr, 70, kDtFloat32);
    store_le<std::int16_t>(hdr, 72, 32);  // bitpix
    const Vec3 sp = vol.spacing();
    store_le<float>(hdr, 76, 1.0f);  // pixdim[0] (qfac)
    for (int c = 0; c < 3; ++c)
        store_le<float>(hdr, 80 + 4 * c, static_cast<float>(sp[c]));
    store_le<float>(hdr, 108, kVoxOffset);
    store_le<float>(hdr, 112, 1.0f);  // scl_slope
    store_le<std::int16_t>(hdr, 254, 1);  // sform_code
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            store_le<float>(hdr, 280 + 16 * r + 4 * c, static_cast<float>(vol.affine().at(r, c)));
    hdr[344] = 'n';
    hdr[345] = '+';
    hdr[346] = '1';
    hdr[347] = 0;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw VolumeIoError(VolumeIoStatus::FileAccess, "cannot write volume file: " + path);
    out.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));

    std::vector<unsigned char> payload(static_cast<std::size_t>(vol.num_voxels()) * 4);
    for (std::int64_t i = 0; i < vol.num_voxels(); ++i)
        store_le<float>(payload, static_cast<std::size_t>(4 * i),
                        vol.data()[static_cast<std::size_t>(i)]);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out)
        throw VolumeIoError(VolumeIoStatus::FileAccess, "write failed: " + path);
}

}  // namespace atlasloom::vol
