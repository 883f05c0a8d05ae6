// Single-file NIfTI-1 volume I/O, little-endian, datatypes float32 and
// int16 only. The affine is taken from the srow_x/y/z rows. Files written
// here are float32 with vox_offset 352 and round-trip bit-exactly.
#pragma once

#include <stdexcept>
#include <string>

#include "atlasloom/volume.hpp"

namespace atlasloom::vol {

enum class VolumeIoStatus {
    BadMagic,
    UnsupportedDatatype,
    Truncated,
    HeaderInvalid,
    FileAccess,
};

class VolumeIoError : public std::runtime_error {
  public:
    VolumeIoError(VolumeIoStatus status, const std::string& msg)
        : std::runtime_error(msg), status_(status) {}
    VolumeIoStatus status() const { return status_; }

  private:
    VolumeIoStatus status_;
};

Volume3D read_volume(const std::string& path);
void write_volume(const Volume3D& vol, const std::string& path);

}  // namespace atlasloom::vol
