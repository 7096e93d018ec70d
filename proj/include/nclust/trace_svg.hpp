#pragma once

#include "nclust/model.hpp"

#include <string>

namespace nclust {

/// Flat xy scatter of one iteration: one circle per node, fill from blue
/// (lowest score) to red (highest), survivors outlined in black.
std::string trace_svg(const IterationTrace& it, double size_px = 480.0);

} // namespace nclust
