#include "nclust/geometry.hpp"

#include "nclust/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>

namespace nclust::geometry {

std::size_t NeighborLists::total_members() const {
    std::size_t n = 0;
    for (const auto& l : lists) n += l.size();
    return n;
}

namespace {

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
};

struct CellHash {
    std::size_t operator()(const CellKey& k) const noexcept {
        std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B185EBCA87ULL;
        h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
        h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
        return static_cast<std::size_t>(h);
    }
};

CellKey cell_of(const Vec3& p, double cell) {
    return {static_cast<std::int64_t>(std::floor(p[0] / cell)), static_cast<std::int64_t>(std::floor(p[1] / cell)),
            static_cast<std::int64_t>(std::floor(p[2] / cell))};
}

} // namespace

NeighborLists radius_neighbors(std::span<const Vec3> coords, double radius, std::size_t cap) {
    if (!(radius > 0.0)) throw SchemaError("radius_neighbors: radius must be positive");
    if (cap == 0) throw SchemaError("radius_neighbors: cap must be positive");
    const std::size_t n = coords.size();
    NeighborLists out;
    out.radius = radius;
    out.cap = cap;
    out.lists.resize(n);

    // Slightly oversized cells keep every in-radius pair within adjacent
    // cells despite rounding in the division.
    const double cell = radius * (1.0 + 1e-9);
    std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
    grid.reserve(n);
    for (std::size_t i = 0; i < n; ++i) grid[cell_of(coords[i], cell)].push_back(i);

    const double r2 = radius * radius;
    struct Candidate {
        bool not_self;
        double d2;
        std::size_t index;
        auto operator<=>(const Candidate&) const = default;
    };
    std::vector<Candidate> found;
    for (std::size_t i = 0; i < n; ++i) {
        found.clear();
        const CellKey c = cell_of(coords[i], cell);
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
                    if (it == grid.end()) continue;
                    for (std::size_t m : it->second) {
                        const double d2 = squared_distance(coords[i], coords[m]);
                        if (d2 <= r2) found.push_back({m != i, d2, m});
                    }
                }
        std::sort(found.begin(), found.end());
        if (found.size() > cap) found.resize(cap);
        auto& list = out.lists[i];
        list.reserve(found.size());
        for (const auto& f : found) list.push_back(f.index);
    }
    return out;
}

LocalFrames LocalFrames::select(std::span<const std::size_t> rows) const {
    LocalFrames out;
    for (auto r : rows) {
        out.frames.push_back(frames.at(r));
        out.directions.push_back(directions.at(r));
        out.valid.push_back(valid.at(r));
    }
    return out;
}

LocalFrames local_frames(std::span<const Vec3> coords) {
    const std::size_t n = coords.size();
    LocalFrames out;
    out.frames.assign(n, identity3());
    out.directions.assign(n, Vec3{0, 0, 0});
    out.valid.assign(n, false);

    std::vector<bool> dir_ok(n, false);
    for (std::size_t i = 1; i < n; ++i) {
        const Vec3 d = coords[i] - coords[i - 1];
        const double len = norm(d);
        if (len < degeneracy_eps) continue;
        out.directions[i] = (1.0 / len) * d;
        dir_ok[i] = true;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!dir_ok[i] || !dir_ok[i + 1]) continue;
        const Vec3& u = out.directions[i];
        const Vec3& u_next = out.directions[i + 1];
        const Vec3 bis = u - u_next;
        const Vec3 nrm = cross(u, u_next);
        const double bl = norm(bis), nl = norm(nrm);
        if (bl < degeneracy_eps || nl < degeneracy_eps) continue;
        const Vec3 b = (1.0 / bl) * bis;
        const Vec3 j = (1.0 / nl) * nrm;
        const Vec3 k = cross(b, j);
        Mat3& o = out.frames[i];
        for (int r = 0; r < 3; ++r) {
            o[r][0] = b[r];
            o[r][1] = j[r];
            o[r][2] = k[r];
        }
        out.valid[i] = true;
    }
    return out;
}

std::array<double, 4> quat_from_rotation(const Mat3& r) {
    const Mat3 rtr = mat_t_mat(r, r);
    double dev = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) dev = std::max(dev, std::abs(rtr[i][j] - (i == j ? 1.0 : 0.0)));
    const double d = det(r);
    if (!(dev <= 1e-4) || !(std::abs(d - 1.0) <= 1e-4)) {
        throw NumericalError("quat_from_rotation: not a proper rotation (orthonormality deviation " +
                             std::to_string(dev) + ", det " + std::to_string(d) + ")");
    }
    // Shepperd's method: pivot on the largest of the four squared components.
    const double tr = r[0][0] + r[1][1] + r[2][2];
    std::array<double, 4> q{};
    if (tr >= r[0][0] && tr >= r[1][1] && tr >= r[2][2]) {
        const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 + tr));
        q = {0.25 * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s};
    } else if (r[0][0] >= r[1][1] && r[0][0] >= r[2][2]) {
        const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 + r[0][0] - r[1][1] - r[2][2]));
        q = {(r[2][1] - r[1][2]) / s, 0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s};
    } else if (r[1][1] >= r[2][2]) {
        const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 + r[1][1] - r[0][0] - r[2][2]));
        q = {(r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s};
    } else {
        const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 + r[2][2] - r[0][0] - r[1][1]));
        q = {(r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s};
    }
    const double len = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (auto& c : q) c /= len;
    if (q[0] < 0.0)
        for (auto& c : q) c = -c;
    return q;
}

Mat3 rotation_from_quat(const std::array<double, 4>& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
             {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
             {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

void PairEncoding::write_features(std::span<double> out) const {
    if (out.size() != pair_feature_dim) throw ShapeError("PairEncoding::write_features: wrong output width");
    std::size_t i = 0;
    for (double v : dist_lift) out[i++] = v;
    for (double v : direction) out[i++] = v;
    for (double v : orientation_quat) out[i++] = v;
    out[i] = rel_seq;
}

std::array<double, rbf_bins> rbf_lift(double distance, double radius) {
    std::array<double, rbf_bins> out{};
    const double spacing = radius / static_cast<double>(rbf_bins - 1);
    for (std::size_t b = 0; b < rbf_bins; ++b) {
        const double z = (distance - spacing * static_cast<double>(b)) / spacing;
        out[b] = std::exp(-z * z);
    }
    return out;
}

PairEncoding pair_encoding(const LocalFrames& frames, std::span<const Vec3> coords, std::span<const int> seq_index,
                           std::size_t n, std::size_t k, double radius, std::size_t chain_length) {
    PairEncoding e;
    e.offset = coords[k] - coords[n];
    e.distance = norm(e.offset);
    e.dist_lift = rbf_lift(e.distance, radius);
    if (frames.valid[n] && e.distance >= degeneracy_eps) {
        e.direction = mat_t_vec(frames.frames[n], (1.0 / e.distance) * e.offset);
    }
    if (k != n && frames.valid[n] && frames.valid[k]) {
        e.orientation_quat = quat_from_rotation(mat_t_mat(frames.frames[n], frames.frames[k]));
    }
    e.rel_seq = static_cast<double>(seq_index[k] - seq_index[n]) / static_cast<double>(std::max<std::size_t>(chain_length, 1));
    return e;
}

} // namespace nclust::geometry
