#include "nclust/synth.hpp"

#include "nclust/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace nclust {

namespace {

constexpr double bond_length = 3.8;
constexpr double clash_distance = 4.0;
constexpr int max_tries = 60;

Vec3 random_unit(Rng& rng) {
    for (;;) {
        Vec3 v{rng.normal(), rng.normal(), rng.normal()};
        const double l = norm(v);
        if (l > 1e-6) return (1.0 / l) * v;
    }
}

// Uniform rotation from a random unit quaternion.
Mat3 random_rotation(Rng& rng) {
    double q[4];
    double len = 0.0;
    do {
        len = 0.0;
        for (double& c : q) {
            c = rng.normal();
            len += c * c;
        }
    } while (len < 1e-12);
    len = std::sqrt(len);
    const double w = q[0] / len, x = q[1] / len, y = q[2] / len, z = q[3] / len;
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
             {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
             {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

// Smallest distance from p to pts[0..end), skipping index `skip`.
double min_distance(const std::vector<Vec3>& pts, std::size_t end, const Vec3& p, std::size_t skip) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < end; ++i)
        if (i != skip) best = std::min(best, squared_distance(pts[i], p));
    return std::sqrt(best);
}

Vec3 centroid(const std::vector<Vec3>& pts) {
    Vec3 c{0, 0, 0};
    if (pts.empty()) return c;
    for (const auto& p : pts) c = c + p;
    return (1.0 / static_cast<double>(pts.size())) * c;
}

// Appends `count` residues to `pts`, each a 3.8 Å step from the last.
void extend_chain(std::vector<Vec3>& pts, std::size_t count, Rng& rng) {
    for (std::size_t s = 0; s < count; ++s) {
        if (pts.empty()) {
            pts.push_back({0, 0, 0});
            continue;
        }
        const Vec3 last = pts.back();
        const bool has_prev = pts.size() >= 2;
        const Vec3 prev_dir = has_prev ? (1.0 / bond_length) * (last - pts[pts.size() - 2]) : Vec3{0, 0, 0};
        const Vec3 c = centroid(pts);
        Vec3 best{};
        double best_clear = -1.0;
        for (int t = 0; t < max_tries; ++t) {
            Vec3 d = random_unit(rng);
            const Vec3 to_c = c - last;
            const double lc = norm(to_c);
            if (lc > 1e-6) d = d + (0.35 / lc) * to_c;
            d = (1.0 / norm(d)) * d;
            if (has_prev) {
                const double cosang = dot(d, prev_dir);
                if (cosang < -0.3 || cosang > 0.85) continue;
            }
            const Vec3 cand = last + bond_length * d;
            const double clear = min_distance(pts, pts.size(), cand, pts.size() - 1);
            if (clear > best_clear) {
                best_clear = clear;
                best = cand;
            }
            if (clear >= clash_distance) break;
        }
        if (best_clear < 0.0) best = last + bond_length * random_unit(rng);
        pts.push_back(best);
    }
}

MotifTemplate make_template(std::size_t size, Rng& rng) {
    MotifTemplate t;
    std::vector<int> types(20);
    for (int i = 0; i < 20; ++i) types[static_cast<std::size_t>(i)] = i;
    rng.shuffle(types.begin(), types.end());
    t.types.assign(types.begin(), types.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(size, 20)));
    while (t.types.size() < size) t.types.push_back(static_cast<int>(rng.below(20)));
    extend_chain(t.coords, size, rng);
    const Vec3 c = centroid(t.coords);
    for (auto& p : t.coords) p = p - c;
    return t;
}

// Places a rigidly moved (and optionally jittered) copy of the template
// after the current chain end.
void implant(std::vector<Vec3>& pts, const MotifTemplate& t, double noise, Rng& rng) {
    std::vector<Vec3> local = t.coords;
    if (noise > 0.0)
        for (auto& p : local)
            for (auto& c : p) c += noise * rng.normal();
    std::vector<Vec3> best;
    double best_clear = -1.0;
    const std::size_t base = pts.size();
    for (int tr = 0; tr < max_tries; ++tr) {
        const Mat3 r = random_rotation(rng);
        std::vector<Vec3> placed;
        placed.reserve(local.size());
        for (const auto& p : local) placed.push_back(mat_vec(r, p));
        Vec3 shift{0, 0, 0};
        if (!pts.empty()) shift = (pts.back() + bond_length * random_unit(rng)) - placed.front();
        for (auto& p : placed) p = p + shift;
        double clear = std::numeric_limits<double>::infinity();
        if (base > 0)
            for (const auto& p : placed) clear = std::min(clear, min_distance(pts, base - 1, p, base));
        if (clear > best_clear) {
            best_clear = clear;
            best = std::move(placed);
        }
        if (clear >= clash_distance) break;
    }
    pts.insert(pts.end(), best.begin(), best.end());
}

} // namespace

void SynthConfig::validate() const {
    if (num_proteins == 0) throw SchemaError("synth: num_proteins must be positive");
    if (num_classes == 0) throw SchemaError("synth: num_classes must be positive");
    if (motif_size == 0) throw SchemaError("synth: motif_size must be positive");
    if (chain_min == 0 || chain_min > chain_max) throw SchemaError("synth: need 0 < chain_min <= chain_max");
    if (motif_size >= chain_min) throw SchemaError("synth: motif_size must be below the minimum chain length");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw SchemaError("synth: noise must be finite and >= 0");
}

std::vector<Vec3> random_compact_chain(std::size_t n, Rng& rng) {
    std::vector<Vec3> pts;
    pts.reserve(n);
    extend_chain(pts, n, rng);
    return pts;
}

SynthResult synth_motif_dataset_full(const SynthConfig& cfg, Rng& rng) {
    cfg.validate();
    SynthResult out;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        MotifTemplate t;
        // distinct type strings so classes are separable by composition alone
        bool clash = true;
        while (clash) {
            t = make_template(cfg.motif_size, rng);
            clash = std::any_of(out.templates.begin(), out.templates.end(),
                                [&](const MotifTemplate& o) { return o.types == t.types; });
        }
        out.templates.push_back(std::move(t));
    }
    Dataset& ds = out.dataset;
    ds.task = TaskKind::single_label;
    ds.num_classes = cfg.num_classes;
    ds.split = Split::train;
    for (std::size_t i = 0; i < cfg.num_proteins; ++i) {
        const std::size_t cls = i % cfg.num_classes;
        const auto& t = out.templates[cls];
        const std::size_t n = cfg.chain_min + rng.below(cfg.chain_max - cfg.chain_min + 1);
        const std::size_t at = rng.below(n - cfg.motif_size + 1);

        std::vector<Vec3> pts;
        pts.reserve(n);
        extend_chain(pts, at, rng);
        implant(pts, t, cfg.noise, rng);
        extend_chain(pts, n - at - cfg.motif_size, rng);

        ProteinRecord rec;
        char id[32];
        std::snprintf(id, sizeof id, "synth_%05zu", i);
        rec.id = id;
        rec.coords = std::move(pts);
        rec.aa_types.resize(n);
        for (auto& a : rec.aa_types) a = static_cast<int>(rng.below(20));
        rec.seq_index.resize(n);
        for (std::size_t k = 0; k < n; ++k) rec.seq_index[k] = static_cast<int>(k) + 1;
        rec.present_mask.assign(n, true);
        for (std::size_t k = 0; k < cfg.motif_size; ++k) {
            rec.aa_types[at + k] = t.types[k];
            rec.motif_ids.push_back(at + k);
        }
        rec.motif_template = static_cast<int>(cls);
        rec.label = cls;
        ds.records.push_back(std::move(rec));
    }
    return out;
}

Dataset synth_motif_dataset(const SynthConfig& cfg, Rng& rng) { return synth_motif_dataset_full(cfg, rng).dataset; }

} // namespace nclust
