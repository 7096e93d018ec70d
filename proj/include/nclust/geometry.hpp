#pragma once

#include "nclust/vec3.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace nclust::geometry {

inline constexpr std::size_t default_neighbor_cap = 64;
inline constexpr double degeneracy_eps = 1e-8;
inline constexpr std::size_t rbf_bins = 16;
/// Width of one PairEncoding feature row: RBF lift, direction, quaternion, relative sequence offset.
inline constexpr std::size_t pair_feature_dim = rbf_bins + 3 + 4 + 1;

/// Per-node radius neighborhoods. Each list starts with its own node (the
/// medoid) and is ordered by ascending distance, ties by ascending index.
struct NeighborLists {
    std::vector<std::vector<std::size_t>> lists;
    double radius = 0.0;
    std::size_t cap = default_neighbor_cap;

    std::size_t size() const { return lists.size(); }
    std::size_t total_members() const;
};

/// All m with ‖z_m − z_n‖ ≤ radius, truncated to the `cap` nearest.
/// Backed by a uniform hash grid with cell size equal to the radius.
NeighborLists radius_neighbors(std::span<const Vec3> coords, double radius, std::size_t cap = default_neighbor_cap);

/// Orthonormal residue frames built from the chain direction. Column
/// vectors of `frames[n]` are b_n, j_n and b_n × j_n; invalid frames
/// (termini, degenerate geometry) hold the identity.
struct LocalFrames {
    std::vector<Mat3> frames;
    std::vector<Vec3> directions; ///< u_n, zero at n = 0 or when degenerate
    std::vector<bool> valid;

    std::size_t size() const { return frames.size(); }
    LocalFrames select(std::span<const std::size_t> rows) const;
};

/// Frames computed along the array order, which is the chain order.
LocalFrames local_frames(std::span<const Vec3> coords);

/// Unit quaternion (w, x, y, z) with w ≥ 0. Throws NumericalError unless R
/// is orthonormal with determinant +1 to within 1e-4.
std::array<double, 4> quat_from_rotation(const Mat3& r);
Mat3 rotation_from_quat(const std::array<double, 4>& q);

struct PairEncoding {
    std::array<double, rbf_bins> dist_lift{};
    Vec3 direction{};
    std::array<double, 4> orientation_quat{1, 0, 0, 0};
    double rel_seq = 0.0;
    /// Raw pieces: z_k − z_n and its norm. Not rotation invariant; kept for inspection.
    Vec3 offset{};
    double distance = 0.0;

    /// Invariant features in a fixed order (length pair_feature_dim).
    void write_features(std::span<double> out) const;
};

/// Gaussian RBF lift of `distance` onto rbf_bins centers evenly spaced in
/// [0, radius] with width equal to the center spacing.
std::array<double, rbf_bins> rbf_lift(double distance, double radius);

/// Relative spatial encoding of member k in the cluster of medoid n.
/// `chain_length` normalizes the sequence offset.
PairEncoding pair_encoding(const LocalFrames& frames, std::span<const Vec3> coords, std::span<const int> seq_index,
                           std::size_t n, std::size_t k, double radius, std::size_t chain_length);

} // namespace nclust::geometry
