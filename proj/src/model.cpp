#include "nclust/model.hpp"

#include "nclust/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>

namespace nclust {

using diff::Graph;
using diff::ParamSet;
using diff::Tensor;
using diff::Var;
using json = nlohmann::json;

std::string_view to_string(AttentionMode m) { return m == AttentionMode::learned ? "learned" : "random-baseline"; }

std::string_view to_string(PoolingMode m) {
    return m == PoolingMode::neural_clustering ? "neural-clustering" : "average-pool-baseline";
}

AttentionMode parse_attention_mode(std::string_view s) {
    if (s == "learned") return AttentionMode::learned;
    if (s == "random-baseline" || s == "random") return AttentionMode::random_baseline;
    throw SchemaError("unknown attention mode '" + std::string(s) + "' (learned | random-baseline)");
}

PoolingMode parse_pooling_mode(std::string_view s) {
    if (s == "neural-clustering") return PoolingMode::neural_clustering;
    if (s == "average-pool-baseline" || s == "average-pool") return PoolingMode::average_pool_baseline;
    throw SchemaError("unknown pooling mode '" + std::string(s) + "' (neural-clustering | average-pool-baseline)");
}

std::size_t ModelConfig::in_width(std::size_t t, std::size_t b) const {
    if (b > 0) return channels.at(t);
    return t == 0 ? embed_dim : channels.at(t - 1);
}

void ModelConfig::validate() const {
    if (iterations < 1) throw SchemaError("model: iterations must be >= 1");
    if (blocks < 1) throw SchemaError("model: blocks must be >= 1");
    if (!(base_radius > 0.0) || !std::isfinite(base_radius)) throw SchemaError("model: base_radius must be > 0");
    if (!(omega > 0.0 && omega <= 1.0)) throw SchemaError("model: omega must be in (0, 1]");
    if (channels.size() != iterations)
        throw SchemaError("model: channels has " + std::to_string(channels.size()) + " entries, expected " +
                          std::to_string(iterations));
    for (auto c : channels)
        if (c == 0) throw SchemaError("model: channel widths must be positive");
    if (embed_dim == 0) throw SchemaError("model: embed_dim must be positive");
    if (num_classes == 0) throw SchemaError("model: num_classes must be positive");
    if (neighbor_cap == 0) throw SchemaError("model: neighbor_cap must be positive");
}

json to_json(const ModelConfig& c) {
    return {{"iterations", c.iterations},
            {"blocks", c.blocks},
            {"base_radius", c.base_radius},
            {"omega", c.omega},
            {"channels", c.channels},
            {"embed_dim", c.embed_dim},
            {"num_classes", c.num_classes},
            {"task", std::string(to_string(c.task))},
            {"attention", std::string(to_string(c.attention))},
            {"pooling", std::string(to_string(c.pooling))},
            {"neighbor_cap", c.neighbor_cap},
            {"random_attention_seed", c.random_attention_seed}};
}

ModelConfig model_config_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("model config must be a JSON object");
    ModelConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "iterations") c.iterations = v.get<std::size_t>();
            else if (key == "blocks") c.blocks = v.get<std::size_t>();
            else if (key == "base_radius") c.base_radius = v.get<double>();
            else if (key == "omega") c.omega = v.get<double>();
            else if (key == "channels") c.channels = v.get<std::vector<std::size_t>>();
            else if (key == "embed_dim") c.embed_dim = v.get<std::size_t>();
            else if (key == "num_classes") c.num_classes = v.get<std::size_t>();
            else if (key == "task") c.task = parse_task(v.get<std::string>());
            else if (key == "attention") c.attention = parse_attention_mode(v.get<std::string>());
            else if (key == "pooling") c.pooling = parse_pooling_mode(v.get<std::string>());
            else if (key == "neighbor_cap") c.neighbor_cap = v.get<std::size_t>();
            else if (key == "random_attention_seed") c.random_attention_seed = v.get<std::uint64_t>();
            else throw SchemaError("model config: unknown key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

std::string block_prefix(std::size_t t, std::size_t b) {
    return "it" + std::to_string(t) + ".blk" + std::to_string(b) + ".";
}

std::string cn_prefix(std::size_t t) { return "it" + std::to_string(t) + ".cn."; }

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ParamSet ps;
    using diff::uniform_init;
    constexpr std::size_t g = geometry::pair_feature_dim;
    ps.add("embed", uniform_init(num_residue_types, cfg.embed_dim, num_residue_types, rng));
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        const std::size_t c = cfg.channels[t];
        for (std::size_t b = 0; b < cfg.blocks; ++b) {
            const std::size_t cin = cfg.in_width(t, b);
            const std::string p = block_prefix(t, b);
            ps.add(p + "enc.geom", uniform_init(g, c, g + cin, rng));
            ps.add(p + "enc.feat", uniform_init(cin, c, g + cin, rng));
            ps.add(p + "enc.b1", uniform_init(1, c, g + cin, rng));
            ps.add(p + "enc.W2", uniform_init(c, c, c, rng));
            ps.add(p + "enc.b2", uniform_init(1, c, c, rng));
            if (cfg.attention == AttentionMode::learned) {
                ps.add(p + "att.medoid", uniform_init(cin, c, cin + c, rng));
                ps.add(p + "att.member", uniform_init(c, c, cin + c, rng));
                ps.add(p + "att.bias", uniform_init(1, c, cin + c, rng));
                ps.add(p + "att.w", uniform_init(c, 1, c, rng));
            }
            if (cin != c) {
                ps.add(p + "skip.W", uniform_init(cin, c, cin, rng));
                ps.add(p + "skip.b", uniform_init(1, c, cin, rng));
            }
        }
        if (cfg.pooling == PoolingMode::neural_clustering) {
            const std::string p = cn_prefix(t);
            // W1 = 0 and W3 = W2: the initial score is a graph difference, alive on about half the nodes
            Tensor w2 = uniform_init(c, 1, c, rng);
            ps.add(p + "W1", Tensor::zeros(c, 1));
            ps.add(p + "W2", w2);
            ps.add(p + "W3", std::move(w2));
        }
    }
    const std::size_t c_last = cfg.channels.back();
    ps.add("head.W", uniform_init(c_last, cfg.num_classes, c_last, rng));
    ps.add("head.b", uniform_init(1, cfg.num_classes, c_last, rng));
    return ps;
}

Tensor SciResult::adjacency() const {
    const std::size_t n = size();
    Tensor a = Tensor::zeros(n, n);
    for (std::size_t i = 0; i < adj_row.size(); ++i) a(adj_row[i], adj_col[i]) = 1.0;
    return a;
}

SciResult sci(const IterationState& state, double radius, std::size_t cap) {
    SciResult out;
    out.lists = geometry::radius_neighbors(state.coords, radius, cap);
    const std::size_t n = state.size();
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i) {
        edges.emplace_back(i, i);
        for (auto m : out.lists.lists[i]) {
            out.medoid.push_back(i);
            out.member.push_back(m);
            edges.emplace_back(i, m);
            edges.emplace_back(m, i);
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    out.degree.assign(n, 0.0);
    for (auto [r, c] : edges) {
        out.adj_row.push_back(r);
        out.adj_col.push_back(c);
        out.degree[r] += 1.0;
    }
    return out;
}

Tensor pair_features(const IterationState& state, const SciResult& clusters, double radius) {
    constexpr std::size_t g = geometry::pair_feature_dim;
    Tensor out = Tensor::zeros(clusters.medoid.size(), g);
    auto vals = out.values();
    for (std::size_t i = 0; i < clusters.medoid.size(); ++i) {
        geometry::pair_encoding(state.frames, state.coords, state.seq_index, clusters.medoid[i], clusters.member[i],
                                radius, state.chain_length)
            .write_features(vals.subspan(i * g, g));
    }
    return out;
}

namespace {

// Exponential spacings normalized within each cluster: a uniform draw
// from the simplex of every cluster.
Tensor random_simplex_weights(const SciResult& clusters, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t k = clusters.medoid.size();
    std::vector<double> w(k);
    std::vector<double> total(clusters.size(), 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        w[i] = -std::log(1.0 - rng.uniform());
        total[clusters.medoid[i]] += w[i];
    }
    for (std::size_t i = 0; i < k; ++i) {
        const double t = total[clusters.medoid[i]];
        w[i] = t > 0.0 ? w[i] / t : 1.0;
    }
    // singleton clusters get exactly 1
    std::vector<std::size_t> count(clusters.size(), 0);
    for (auto m : clusters.medoid) ++count[m];
    for (std::size_t i = 0; i < k; ++i)
        if (count[clusters.medoid[i]] == 1) w[i] = 1.0;
    return Tensor::column(std::move(w));
}

} // namespace

CreOutput cre_block(Graph& g, const IterationState& state, Var h, const SciResult& clusters, Var pair_feats,
                    ParamSet& params, const ModelConfig& cfg, std::size_t t, std::size_t b,
                    const std::string& record_id) {
    const std::size_t n = state.size();
    const std::size_t cin = cfg.in_width(t, b);
    if (h.shape() != std::vector<std::size_t>{n, cin})
        throw ShapeError("cre_block: features " + diff::shape_string(h.shape()) + " do not match [" +
                         std::to_string(n) + "x" + std::to_string(cin) + "]");
    if (pair_feats.value().rows() != clusters.medoid.size())
        throw ShapeError("cre_block: pair features " + diff::shape_string(pair_feats.shape()) + " do not match " +
                         std::to_string(clusters.medoid.size()) + " pairs");
    const std::string p = block_prefix(t, b);
    auto P = [&](const char* name) { return g.param(params.at(p + name)); };

    // f([geometry ‖ h_k]) split by input block; member rows gathered after the product
    Var hidden = relu(add(add(matmul(pair_feats, P("enc.geom")), gather_rows(matmul(h, P("enc.feat")), clusters.member)),
                          P("enc.b1")));
    Var x = affine(hidden, P("enc.W2"), P("enc.b2"));

    Var gamma;
    if (cfg.attention == AttentionMode::learned) {
        Var med = gather_rows(matmul(h, P("att.medoid")), clusters.medoid);
        Var u = relu(add(add(med, matmul(x, P("att.member"))), P("att.bias")));
        gamma = segment_softmax(matmul(u, P("att.w")), clusters.medoid, n);
    } else {
        const std::uint64_t seed =
            mix_seed(mix_seed(cfg.random_attention_seed, fnv1a(record_id)), t * 1024 + b);
        gamma = g.constant(random_simplex_weights(clusters, seed));
    }
    Var agg = segment_weighted_sum(x, gamma, clusters.medoid, n);
    Var skip = cin == cfg.channels[t] ? h : affine(h, P("skip.W"), P("skip.b"));
    return {add(agg, skip), x, gamma};
}

std::size_t survivor_count(std::size_t n, double omega) { return std::max<std::size_t>(1, floor_fraction(omega, n)); }

namespace {

IterationState select_rows(const IterationState& s, Var features, const std::vector<std::size_t>& rows) {
    IterationState next;
    next.features = features;
    next.frames = s.frames.select(rows);
    next.chain_length = s.chain_length;
    for (auto r : rows) {
        next.coords.push_back(s.coords[r]);
        next.seq_index.push_back(s.seq_index[r]);
        next.node_ids.push_back(s.node_ids[r]);
    }
    return next;
}

} // namespace

Nomination cn_nominate(Graph& g, const IterationState& state, Var x, const SciResult& clusters, ParamSet& params,
                       const ModelConfig& cfg, std::size_t t) {
    const std::size_t n = state.size();
    if (x.value().rows() != n) throw ShapeError("cn_nominate: feature rows do not match the state");
    const std::string p = cn_prefix(t);
    Var s1 = matmul(x, g.param(params.at(p + "W1")));
    Var s2 = matmul(x, g.param(params.at(p + "W2")));
    Var s3 = matmul(x, g.param(params.at(p + "W3")));
    // Σ_m A_nm (W2 x_n − W3 x_m) = deg_n·W2 x_n − Σ_m A_nm W3 x_m
    Var deg = g.constant(Tensor::column(clusters.degree));
    Var ones = g.constant(Tensor({clusters.adj_row.size(), 1}, 1.0));
    Var neigh = segment_weighted_sum(gather_rows(s3, clusters.adj_col), ones, clusters.adj_row, n);
    Var phi = relu(add(s1, sub(mul(s2, deg), neigh)));

    Nomination out;
    out.weighted = mul(x, phi);
    const auto& pv = phi.value();
    out.scores.assign(pv.values().begin(), pv.values().end());

    const std::size_t raw = floor_fraction(cfg.omega, n);
    const std::size_t keep = std::max<std::size_t>(1, raw);
    out.clamped = raw == 0;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return out.scores[a] > out.scores[b]; });
    out.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));

    std::vector<std::size_t> rows = out.selected;
    std::sort(rows.begin(), rows.end());
    out.next = select_rows(state, gather_rows(out.weighted, rows), rows);
    return out;
}

Nomination average_pool(Graph& g, const IterationState& state, Var x, const ModelConfig& cfg) {
    const std::size_t n = state.size();
    if (x.value().rows() != n) throw ShapeError("average_pool: feature rows do not match the state");
    const std::size_t raw = floor_fraction(cfg.omega, n);
    const std::size_t m = std::max<std::size_t>(1, raw);
    std::vector<std::size_t> segment(n);
    std::vector<double> weight(n);
    std::vector<std::size_t> reps;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t lo = i * n / m, hi = (i + 1) * n / m;
        for (std::size_t r = lo; r < hi; ++r) {
            segment[r] = i;
            weight[r] = 1.0 / static_cast<double>(hi - lo);
        }
        reps.push_back((lo + hi - 1) / 2);
    }
    Nomination out;
    out.clamped = raw == 0;
    out.weighted = x;
    out.selected = reps;
    Var pooled = segment_weighted_sum(x, g.constant(Tensor::column(std::move(weight))), segment, m);
    out.next = select_rows(state, pooled, reps);
    return out;
}

json to_json(const ScoreTrace& tr) {
    json its = json::array();
    for (const auto& it : tr.iterations) {
        json coords = json::array();
        for (const auto& c : it.coords) coords.push_back({c[0], c[1], c[2]});
        its.push_back({{"iteration", it.iteration},
                       {"radius", it.radius},
                       {"node_ids", it.node_ids},
                       {"scores", it.scores},
                       {"coords", std::move(coords)},
                       {"selected", it.selected},
                       {"clamped", it.clamped}});
    }
    return {{"protein_id", tr.protein_id},
            {"input_nodes", tr.input_nodes},
            {"warnings", tr.warnings},
            {"survivors", tr.survivors},
            {"iterations", std::move(its)}};
}

ForwardResult forward(Graph& g, const ProteinRecord& input, ParamSet& params, const ModelConfig& cfg) {
    if (input.size() == 0) throw DegenerateError("forward: record '" + input.id + "' has no nodes");
    const ProteinRecord rec = compact_present(input);
    for (int a : rec.aa_types)
        if (a < 0 || a >= num_residue_types) throw SchemaError("forward: residue type out of range in '" + rec.id + "'");

    ForwardResult out;
    out.trace.protein_id = rec.id;
    out.trace.input_nodes = rec.size();

    IterationState state;
    std::vector<std::size_t> types(rec.aa_types.begin(), rec.aa_types.end());
    state.features = gather_rows(g.param(params.at("embed")), types);
    state.coords = rec.coords;
    state.seq_index = rec.seq_index;
    state.frames = geometry::local_frames(rec.coords);
    state.node_ids.resize(rec.size());
    std::iota(state.node_ids.begin(), state.node_ids.end(), 0);
    state.chain_length = rec.size();

    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        const double radius = cfg.radius(t);
        const SciResult clusters = sci(state, radius, cfg.neighbor_cap);
        Var pf = g.constant(pair_features(state, clusters, radius));
        Var h = state.features;
        for (std::size_t b = 0; b < cfg.blocks; ++b)
            h = cre_block(g, state, h, clusters, pf, params, cfg, t, b, rec.id).features;
        Nomination nom = cfg.pooling == PoolingMode::neural_clustering
                             ? cn_nominate(g, state, h, clusters, params, cfg, t)
                             : average_pool(g, state, h, cfg);
        IterationTrace it;
        it.iteration = t + 1;
        it.radius = radius;
        it.node_ids = state.node_ids;
        it.coords = state.coords;
        it.scores = nom.scores;
        it.selected = nom.selected;
        it.clamped = nom.clamped;
        if (nom.clamped) ++out.trace.warnings;
        out.trace.iterations.push_back(std::move(it));
        state = std::move(nom.next);
    }
    out.trace.survivors = state.node_ids;
    out.logits = affine(mean_rows(state.features), g.param(params.at("head.W")), g.param(params.at("head.b")));
    return out;
}

Prediction predict(const ProteinRecord& rec, ParamSet& params, const ModelConfig& cfg) {
    Graph g;
    auto r = forward(g, rec, params, cfg);
    return {r.logits.value(), std::move(r.trace)};
}

void calibrate_nomination(ParamSet& params, const ModelConfig& cfg, std::span<const ProteinRecord> records,
                          double target) {
    if (cfg.pooling != PoolingMode::neural_clustering || records.empty()) return;
    if (!(target > 0.0)) throw SchemaError("calibrate_nomination: target must be > 0");
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        double sum = 0.0;
        std::size_t alive = 0;
        for (const auto& rec : records) {
            if (rec.size() == 0) continue;
            const auto p = predict(rec, params, cfg);
            for (double s : p.trace.iterations[t].scores)
                if (s > 0.0) {
                    sum += s;
                    ++alive;
                }
        }
        if (alive == 0 || !std::isfinite(sum)) continue;
        const double f = target * static_cast<double>(alive) / sum;
        // W1 enters the score linearly as well
        for (const char* w : {"W1", "W2", "W3"})
            for (auto& v : params.at(cn_prefix(t) + w).value.values()) v *= f;
    }
}

Var record_loss(Var logits, const ProteinRecord& rec, const ModelConfig& cfg) {
    if (cfg.task == TaskKind::single_label) {
        const auto* c = std::get_if<std::size_t>(&rec.label);
        if (!c) throw SchemaError("record '" + rec.id + "' has no class label");
        if (*c >= cfg.num_classes) throw SchemaError("record '" + rec.id + "' label exceeds the head width");
        const std::size_t label = *c;
        return cross_entropy(logits, std::span<const std::size_t>(&label, 1));
    }
    const auto* v = std::get_if<std::vector<std::uint8_t>>(&rec.label);
    if (!v || v->size() != cfg.num_classes)
        throw SchemaError("record '" + rec.id + "' needs a multi-label vector of length " +
                          std::to_string(cfg.num_classes));
    Tensor target = Tensor::zeros(1, v->size());
    for (std::size_t i = 0; i < v->size(); ++i) target[i] = (*v)[i];
    return bce_with_logits(logits, target);
}

} // namespace nclust
