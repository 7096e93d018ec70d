#pragma once

#include "nclust/diff/tensor.hpp"
#include "nclust/protein.hpp"
#include "nclust/rng.hpp"
#include "nclust/vec3.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace nclust::testing {

/// Fresh directory under the system temp dir, removed on scope exit.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("nclust_test_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline diff::Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    diff::Tensor t = diff::Tensor::zeros(rows, cols);
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline double max_abs_diff(const diff::Tensor& a, const diff::Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}


/// Random proper rotation by Gram–Schmidt on Gaussian columns.
inline Mat3 random_rotation(Rng& rng) {
    Vec3 a{rng.normal(), rng.normal(), rng.normal()};
    Vec3 b{rng.normal(), rng.normal(), rng.normal()};
    a = (1.0 / norm(a)) * a;
    b = b - dot(a, b) * a;
    b = (1.0 / norm(b)) * b;
    const Vec3 c = cross(a, b);
    Mat3 r{};
    for (int i = 0; i < 3; ++i) {
        r[i][0] = a[i];
        r[i][1] = b[i];
        r[i][2] = c[i];
    }
    return r;
}

inline std::vector<Vec3> rigid_transform(const std::vector<Vec3>& pts, const Mat3& r, const Vec3& t) {
    std::vector<Vec3> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(mat_vec(r, p) + t);
    return out;
}

inline std::vector<Vec3> random_points(std::size_t n, double extent, Rng& rng) {
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = {rng.uniform(0, extent), rng.uniform(0, extent), rng.uniform(0, extent)};
    return pts;
}

/// Chain with ~3.8 Å steps and random turns; not self-avoiding.
inline std::vector<Vec3> random_chain(std::size_t n, Rng& rng) {
    std::vector<Vec3> pts;
    Vec3 p{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        pts.push_back(p);
        Vec3 d{rng.normal(), rng.normal(), rng.normal()};
        p = p + (3.8 / norm(d)) * d;
    }
    return pts;
}

/// Fully present record on random_chain coordinates with random types.
inline ProteinRecord random_record(std::size_t n, Rng& rng, std::size_t num_classes = 3, std::string id = "r") {
    ProteinRecord r;
    r.id = std::move(id);
    r.coords = random_chain(n, rng);
    for (std::size_t i = 0; i < n; ++i) {
        r.aa_types.push_back(static_cast<int>(rng.below(21)));
        r.seq_index.push_back(static_cast<int>(i));
        r.present_mask.push_back(true);
    }
    r.label = static_cast<std::size_t>(rng.below(num_classes));
    return r;
}

} // namespace nclust::testing
