// Small fixed-size linear algebra for volume geometry: 3-vectors, 3x3 and
// 4x4 matrices, signed permutations, and rigid transforms. All angles are
// degrees at API boundaries; matrices are row-major.
#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace atlasloom {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

// Gaussian FWHM to standard deviation.
inline double fwhm_to_sigma(double fwhm) { return fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
};

struct Mat3 {
    // row-major
    std::array<double, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return r;
    }

    double& at(int r, int c) { return m[r * 3 + c]; }
    double at(int r, int c) const { return m[r * 3 + c]; }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
                r.at(i, j) = s;
            }
        return r;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
        return r;
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    Mat3 inverse() const {
        const double d = det();
        if (std::abs(d) < 1e-12)
            throw std::invalid_argument("Mat3::inverse: singular matrix");
        Mat3 r;
        r.m[0] = (m[4] * m[8] - m[5] * m[7]) / d;
        r.m[1] = (m[2] * m[7] - m[1] * m[8]) / d;
        r.m[2] = (m[1] * m[5] - m[2] * m[4]) / d;
        r.m[3] = (m[5] * m[6] - m[3] * m[8]) / d;
        r.m[4] = (m[0] * m[8] - m[2] * m[6]) / d;
        r.m[5] = (m[2] * m[3] - m[0] * m[5]) / d;
        r.m[6] = (m[3] * m[7] - m[4] * m[6]) / d;
        r.m[7] = (m[1] * m[6] - m[0] * m[7]) / d;
        r.m[8] = (m[0] * m[4] - m[1] * m[3]) / d;
        return r;
    }
};

// 4x4 homogeneous matrix, used for voxel-to-world affines and world-space
// rigid maps. Bottom row is expected to stay (0,0,0,1).
struct Mat4 {
    std::array<double, 16> m{};

    static Mat4 identity() {
        Mat4 r;
        r.m = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
        return r;
    }

    double& at(int r, int c) { return m[r * 4 + c]; }
    double at(int r, int c) const { return m[r * 4 + c]; }

    Mat4 operator*(const Mat4& o) const {
        Mat4 r;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k) s += at(i, k) * o.at(k, j);
                r.at(i, j) = s;
            }
        return r;
    }

    // Applies the affine to a point (homogeneous w = 1).
    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z + m[3],
                m[4] * v.x + m[5] * v.y + m[6] * v.z + m[7],
                m[8] * v.x + m[9] * v.y + m[10] * v.z + m[11]};
    }

    Mat3 linear() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.at(i, j) = at(i, j);
        return r;
    }

    Vec3 translation() const { return {m[3], m[7], m[11]}; }

    static Mat4 from_linear(const Mat3& lin, const Vec3& t) {
        Mat4 r = identity();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.at(i, j) = lin.at(i, j);
        r.m[3] = t.x;
        r.m[7] = t.y;
        r.m[11] = t.z;
        return r;
    }

    // Inverse of an affine map [L t; 0 1]: [L^-1, -L^-1 t].
    Mat4 inverse_affine() const {
        const Mat3 li = linear().inverse();
        const Vec3 t = translation();
        const Vec3 ti = li * t;
        return from_linear(li, {-ti.x, -ti.y, -ti.z});
    }

    bool equals(const Mat4& o, double tol) const {
        for (int i = 0; i < 16; ++i)
            if (std::abs(m[i] - o.m[i]) > tol) return false;
        return true;
    }
};

// 3x3 integer matrix with exactly one +-1 entry per row and column.
// Models axis-aligned reorientations (permutations with flips).
struct SignedPermutation {
    std::array<int, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    int at(int r, int c) const { return m[r * 3 + c]; }
    int& at(int r, int c) { return m[r * 3 + c]; }

    static SignedPermutation identity() { return SignedPermutation{}; }

    bool valid() const {
        for (int r = 0; r < 3; ++r) {
            int nz = 0;
            for (int c = 0; c < 3; ++c) {
                const int v = at(r, c);
                if (v != 0 && v != 1 && v != -1) return false;
                if (v != 0) ++nz;
            }
            if (nz != 1) return false;
        }
        for (int c = 0; c < 3; ++c) {
            int nz = 0;
            for (int r = 0; r < 3; ++r)
                if (at(r, c) != 0) ++nz;
            if (nz != 1) return false;
        }
        return true;
    }

    int det() const {
        return at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) -
               at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0)) +
               at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
    }

    SignedPermutation operator*(const SignedPermutation& o) const {
        SignedPermutation r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                int s = 0;
                for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
                r.at(i, j) = s;
            }
        return r;
    }

    // Orthogonal, so the inverse is the transpose.
    SignedPermutation inverse() const {
        SignedPermutation r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
        return r;
    }

    bool operator==(const SignedPermutation& o) const { return m == o.m; }

    Mat3 to_mat3() const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = static_cast<double>(m[i]);
        return r;
    }
};

// Rigid world-space map x' = R x + t with R = Rz * Ry * Rx built from Euler
// angles in degrees. Rotation center is the world origin.
struct RigidTransform {
    Vec3 rotation_deg;
    Vec3 translation_mm;

    static RigidTransform identity() { return {}; }

    Mat3 rotation_matrix() const {
        const double rx = deg_to_rad(rotation_deg.x);
        const double ry = deg_to_rad(rotation_deg.y);
        const double rz = deg_to_rad(rotation_deg.z);
        const double cx = std::cos(rx), sx = std::sin(rx);
        const double cy = std::cos(ry), sy = std::sin(ry);
        const double cz = std::cos(rz), sz = std::sin(rz);
        Mat3 Rx = Mat3::identity();
        Rx.m = {1, 0, 0, 0, cx, -sx, 0, sx, cx};
        Mat3 Ry;
        Ry.m = {cy, 0, sy, 0, 1, 0, -sy, 0, cy};
        Mat3 Rz;
        Rz.m = {cz, -sz, 0, sz, cz, 0, 0, 0, 1};
        return Rz * (Ry * Rx);
    }

    Mat4 to_mat4() const { return Mat4::from_linear(rotation_matrix(), translation_mm); }
};

// Relative rotation angle in degrees between two rigid transforms.
inline double rotation_angle_between_deg(const RigidTransform& a, const RigidTransform& b) {
    const Mat3 rel = a.rotation_matrix() * b.rotation_matrix().inverse();
    const double tr = rel.m[0] + rel.m[4] + rel.m[8];
    const double c = std::min(1.0, std::max(-1.0, (tr - 1.0) / 2.0));
    return rad_to_deg(std::acos(c));
}

}  // namespace atlasloom
