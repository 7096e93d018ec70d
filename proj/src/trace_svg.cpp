#include "nclust/trace_svg.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

namespace nclust {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(40 + 215 * t);
    const int g = static_cast<int>(70 + 60 * (1.0 - std::abs(2.0 * t - 1.0)));
    const int b = static_cast<int>(255 - 215 * t);
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

} // namespace

std::string trace_svg(const IterationTrace& it, double size_px) {
    const double margin = 20.0;
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
    double x1 = -x0, y1 = -x0;
    for (const auto& c : it.coords) {
        x0 = std::min(x0, c[0]);
        x1 = std::max(x1, c[0]);
        y0 = std::min(y0, c[1]);
        y1 = std::max(y1, c[1]);
    }
    const double span = std::max({x1 - x0, y1 - y0, 1e-9});
    const double s = (size_px - 2 * margin) / span;
    double lo = 0.0, hi = 0.0;
    if (!it.scores.empty()) {
        lo = *std::min_element(it.scores.begin(), it.scores.end());
        hi = *std::max_element(it.scores.begin(), it.scores.end());
    }
    const std::set<std::size_t> kept(it.selected.begin(), it.selected.end());

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(size_px) << "\" height=\"" << fmt(size_px)
       << "\" viewBox=\"0 0 " << fmt(size_px) << ' ' << fmt(size_px) << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"8\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">iteration " << it.iteration << ", "
       << it.coords.size() << " nodes, " << it.selected.size() << " kept</text>\n";
    for (std::size_t i = 0; i < it.coords.size(); ++i) {
        const double cx = margin + (it.coords[i][0] - x0) * s;
        const double cy = size_px - margin - (it.coords[i][1] - y0) * s;
        const std::string fill =
            it.scores.empty() ? "#999999" : color(hi > lo ? (it.scores[i] - lo) / (hi - lo) : 0.5);
        os << "<circle cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" r=\"5\" fill=\"" << fill << '"';
        if (kept.contains(i)) os << " stroke=\"black\" stroke-width=\"1.5\"";
        os << "><title>node " << it.node_ids[i];
        if (!it.scores.empty()) os << " score " << it.scores[i];
        os << "</title></circle>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace nclust
