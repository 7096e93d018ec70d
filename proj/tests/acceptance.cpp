// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "nclust/cli.hpp"
#include "nclust/diff/checkpoint.hpp"
#include "nclust/diff/gradcheck.hpp"
#include "nclust/geometry.hpp"
#include "nclust/log.hpp"
#include "nclust/metrics.hpp"
#include "nclust/model.hpp"
#include "nclust/synth.hpp"
#include "nclust/train.hpp"
#include "test_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace nclust;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Random protein on a clash-avoiding chain with random residue types.
ProteinRecord chain_record(std::size_t n, Rng& rng, std::size_t classes, const std::string& id) {
    ProteinRecord r;
    r.id = id;
    r.coords = random_compact_chain(n, rng);
    for (std::size_t i = 0; i < n; ++i) {
        r.aa_types.push_back(static_cast<int>(rng.below(num_residue_types)));
        r.seq_index.push_back(static_cast<int>(i + 1));
        r.present_mask.push_back(true);
    }
    r.label = static_cast<std::size_t>(rng.below(classes));
    return r;
}

ModelConfig small_model(std::size_t iterations, std::size_t width, std::size_t classes) {
    ModelConfig m;
    m.iterations = iterations;
    m.blocks = 1;
    m.channels.assign(iterations, width);
    m.embed_dim = width;
    m.num_classes = classes;
    return m;
}

// The desk configuration used by the learning criteria.
ModelConfig desk_model() {
    ModelConfig m = small_model(2, 32, 4);
    m.embed_dim = 16;
    return m;
}

TrainConfig desk_train(std::uint64_t seed) {
    TrainConfig t;
    t.lr = 0.1;
    t.batch_size = 8;
    t.epochs = 300;
    t.seed = seed;
    t.clip_norm = 1.0;
    t.eval_every = 10;
    t.stop_at_train_accuracy = 0.99;
    return t;
}

// 200 train / 50 held-out planted-motif proteins, 4 classes, seed 7.
std::pair<Dataset, Dataset> desk_data() {
    SynthConfig sc;
    sc.num_proteins = 250;
    sc.num_classes = 4;
    Rng rng(7);
    Dataset all = synth_motif_dataset(sc, rng);
    Dataset tr = all, te = all;
    tr.records.assign(all.records.begin(), all.records.begin() + 200);
    te.records.assign(all.records.begin() + 200, all.records.end());
    te.split = Split::test;
    return {tr, te};
}

// ---- 1 ----
Outcome rigid_motion() {
    const auto t0 = Clock::now();
    Rng rng(101);
    ModelConfig m = small_model(4, 16, 5);
    m.blocks = 2;
    auto params = init_params(m, 11);
    double worst = 0.0;
    for (int p = 0; p < 10; ++p) {
        const std::size_t n = 30 + rng.below(171);
        auto rec = chain_record(n, rng, 5, "rigid" + std::to_string(p));
        const auto base = predict(rec, params, m).logits;
        double scale = 0.0;
        for (double v : base.values()) scale = std::max(scale, std::abs(v));
        for (int k = 0; k < 20; ++k) {
            const Mat3 r = testing::random_rotation(rng);
            const Vec3 t{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-100, 100)};
            auto moved = rec;
            moved.coords = testing::rigid_transform(rec.coords, r, t);
            const auto l = predict(moved, params, m).logits;
            for (std::size_t i = 0; i < l.size(); ++i) worst = std::max(worst, std::abs(l[i] - base[i]) / scale);
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-10 && secs < 120,
            "max relative logit change " + fmt("%.2e", worst) + " (limit 1e-10), " + fmt("%.1f", secs) + " s"};
}

// ---- 2 ----
Outcome gradient_check() {
    const auto t0 = Clock::now();
    ModelConfig m = small_model(2, 8, 3);
    double worst = 0.0;
    std::string where;
    for (std::uint64_t seed : {1, 2, 3}) {
        Rng rng(seed);
        auto rec = chain_record(20, rng, 3, "grad");
        auto params = init_params(m, seed);
        const auto rep = diff::grad_check(
            params, [&](diff::Graph& g, diff::ParamSet& p) { return record_loss(forward(g, rec, p, m).logits, rec, m); },
            1e-5);
        for (const auto& e : rep.params)
            if (e.max_rel > worst) {
                worst = e.max_rel;
                where = e.name + " seed " + std::to_string(seed);
            }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-3 && secs < 300, "max relative error " + fmt("%.2e", worst) + " at " + where +
                                            " (limit 1e-3), " + fmt("%.1f", secs) + " s"};
}

// ---- 3 ----
Outcome cardinality() {
    std::vector<std::size_t> sizes;
    for (std::size_t n = 1; n <= 60; ++n) sizes.push_back(n);
    for (std::size_t n = 67; n < 500; n += 23) sizes.push_back(n);
    sizes.push_back(500);
    Rng rng(303);
    std::vector<ProteinRecord> recs;
    for (auto n : sizes) recs.push_back(chain_record(n, rng, 2, "card" + std::to_string(n)));

    std::size_t checks = 0, bad = 0;
    for (std::size_t T = 1; T <= 5; ++T)
        for (int w = 2; w <= 7; ++w) {
            ModelConfig m = small_model(T, 4, 2);
            m.omega = w / 10.0;
            auto params = init_params(m, T * 10 + w);
            for (const auto& rec : recs) {
                const auto tr = predict(rec, params, m).trace;
                std::size_t expect = rec.size();
                for (std::size_t t = 0; t < T; ++t) {
                    ++checks;
                    if (tr.iterations[t].node_ids.size() != expect) ++bad;
                    // floor(ω·N) in exact integer arithmetic
                    expect = std::max<std::size_t>(1, static_cast<std::size_t>(w) * expect / 10);
                }
                ++checks;
                if (tr.survivors.size() != expect) ++bad;
            }
        }
    return {bad == 0 && checks > 0, std::to_string(checks) + " iteration counts checked over " +
                                        std::to_string(sizes.size()) + " sizes, 6 ω, T 1..5; " +
                                        std::to_string(bad) + " mismatches"};
}

// ---- 4 ----
std::vector<std::vector<std::size_t>> brute_neighbors(const std::vector<Vec3>& pts, double r, std::size_t cap) {
    std::vector<std::vector<std::size_t>> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<std::pair<double, std::size_t>> hits;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j == i) continue;
            const double dx = pts[i][0] - pts[j][0], dy = pts[i][1] - pts[j][1], dz = pts[i][2] - pts[j][2];
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 <= r * r) hits.push_back({d2, j});
        }
        std::sort(hits.begin(), hits.end());
        out[i].push_back(i);
        for (const auto& h : hits) {
            if (out[i].size() == cap) break;
            out[i].push_back(h.second);
        }
    }
    return out;
}

Outcome neighbor_oracle() {
    Rng rng(404);
    int bad = 0;
    std::size_t pairs = 0;
    for (int k = 0; k < 100; ++k) {
        const std::size_t n = 1 + rng.below(300);
        std::vector<Vec3> pts;
        if (k % 4 == 3) {
            // lattice points: many equal distances
            for (std::size_t i = 0; i < n; ++i)
                pts.push_back({double(rng.below(6)) * 2.0, double(rng.below(6)) * 2.0, double(rng.below(6)) * 2.0});
        } else {
            pts = testing::random_points(n, rng.uniform(5.0, 60.0), rng);
        }
        const double r = rng.uniform(1.0, 15.0);
        const std::size_t cap = k % 3 == 0 ? 1 + rng.below(10) : geometry::default_neighbor_cap;
        const auto got = geometry::radius_neighbors(pts, r, cap);
        const auto want = brute_neighbors(pts, r, cap);
        if (got.lists != want) ++bad;
        for (const auto& l : want) pairs += l.size();
    }
    return {bad == 0, "100 instances, " + std::to_string(pairs) + " list entries; " + std::to_string(bad) +
                          " instances differ from the O(N^2) scan"};
}

// ---- 5 ----
// Protein-centric maximum F-score written out term by term.
double fmax_literal(const std::vector<std::map<std::size_t, double>>& scores,
                    const std::vector<std::set<std::size_t>>& truth) {
    double best = 0.0;
    for (int step = 0; step <= 100; ++step) {
        const double tau = step / 100.0;
        double prec_total = 0.0, rec_total = 0.0;
        int m_tau = 0, n_e = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            int tp = 0, predicted = 0;
            for (const auto& [f, s] : scores[i])
                if (s >= tau) {
                    ++predicted;
                    tp += truth[i].count(f) ? 1 : 0;
                }
            if (predicted >= 1) {
                ++m_tau;
                prec_total += double(tp) / predicted;
            }
            if (!truth[i].empty()) {
                ++n_e;
                rec_total += double(tp) / double(truth[i].size());
            }
        }
        if (m_tau == 0 || n_e == 0) continue;
        const double pr = prec_total / m_tau, rc = rec_total / n_e;
        if (pr + rc > 0) best = std::max(best, 2 * pr * rc / (pr + rc));
    }
    return best;
}

Outcome fmax_oracle() {
    const auto previous = set_warning_sink([](std::string_view) {});
    Rng rng(505);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const std::size_t proteins = 1 + rng.below(8), classes = 1 + rng.below(6);
        std::vector<std::map<std::size_t, double>> s(proteins);
        std::vector<std::set<std::size_t>> t(proteins);
        for (std::size_t i = 0; i < proteins; ++i)
            for (std::size_t c = 0; c < classes; ++c) {
                if (rng.uniform() < 0.7) {
                    double v = rng.uniform();
                    if (k % 2) v = std::round(v * 100.0) / 100.0; // land on grid points
                    s[i][c] = v;
                }
                if (rng.uniform() < 0.4) t[i].insert(c);
            }
        worst = std::max(worst, std::abs(fmax(s, t).fmax - fmax_literal(s, t)));
    }
    set_warning_sink(previous);
    // G = {a, b}, scores {a: 0.9, c: 0.8}
    const std::vector<std::map<std::size_t, double>> hs{{{0, 0.9}, {2, 0.8}}};
    const std::vector<std::set<std::size_t>> ht{{0, 1}};
    const double hand = fmax(hs, ht).fmax;
    const bool ok = worst <= 1e-12 && std::abs(hand - 2.0 / 3.0) <= 1e-12;
    return {ok, "200 instances, max deviation " + fmt("%.1e", worst) + "; hand example " + fmt("%.15f", hand) +
                    " (expected 2/3)"};
}

// ---- 6 ----
Outcome desk_learning() {
    const auto t0 = Clock::now();
    const auto [tr, te] = desk_data();
    auto result = train(tr, nullptr, desk_model(), desk_train(0));
    const double train_acc = result.report.train_eval.primary();
    const double test_acc = evaluate(te, result.params, desk_model()).primary();
    const double secs = seconds_since(t0);
    const bool ok = train_acc >= 0.99 && test_acc >= 0.80 && result.report.epochs_run <= 300 && secs < 600;
    return {ok, "train accuracy " + fmt("%.3f", train_acc) + " after " + std::to_string(result.report.epochs_run) +
                    " epochs, held-out accuracy " + fmt("%.3f", test_acc) + ", " + fmt("%.0f", secs) +
                    " s (need >= 0.99 within 300 epochs, >= 0.80, < 600 s)"};
}

// ---- 7 ----
Outcome ablation() {
    const auto [tr, te] = desk_data();
    int beats_random = 0, matches_avg = 0;
    std::string table;
    std::ostringstream summary;
    for (std::uint64_t seed : {1, 2, 3}) {
        SweepGrid attention;
        attention.attention = {AttentionMode::learned, AttentionMode::random_baseline};
        SweepGrid pooling;
        pooling.pooling = {PoolingMode::average_pool_baseline};
        auto rows = sweep(attention, tr, te, desk_model(), desk_train(seed));
        auto avg = sweep(pooling, tr, te, desk_model(), desk_train(seed));
        rows.push_back(avg.front());
        rows.back().cell.index = 2;
        const std::string csv = sweep_csv(rows);
        std::istringstream lines(csv);
        std::string line;
        bool header = true;
        while (std::getline(lines, line)) {
            if (header) {
                if (table.empty()) table = "seed," + line + "\n";
                header = false;
                continue;
            }
            table += std::to_string(seed) + "," + line + "\n";
        }
        for (const auto& r : rows)
            if (!r.ok) return {false, "cell failed: " + r.error};
        const double learned = rows[0].test.primary(), random = rows[1].test.primary(), pooled = rows[2].test.primary();
        beats_random += learned > random;
        matches_avg += learned >= pooled;
        summary << " seed " << seed << ": learned " << fmt("%.2f", learned) << " random " << fmt("%.2f", random)
                << " avg-pool " << fmt("%.2f", pooled) << ";";
    }
    std::cout << "--- ablation table (held-out accuracy in test_metric) ---\n" << table << "---\n";
    return {beats_random >= 2 && matches_avg >= 2, "learned > random in " + std::to_string(beats_random) +
                                                      "/3, learned >= avg-pool in " + std::to_string(matches_avg) +
                                                      "/3;" + summary.str()};
}

// ---- 8 ----
Outcome missing_coordinates() {
    SynthConfig sc;
    sc.num_proteins = 80;
    sc.num_classes = 4;
    Rng rng(808);
    Dataset all = synth_motif_dataset(sc, rng);
    Dataset tr = all, te = all;
    tr.records.assign(all.records.begin(), all.records.begin() + 60);
    te.records.assign(all.records.begin() + 60, all.records.end());
    TrainConfig tc = desk_train(5);
    tc.epochs = 15;
    tc.stop_at_train_accuracy = 0.0;
    SweepGrid g;
    g.drop = {0.05, 0.10, 0.20, 0.30, 0.40};
    ModelConfig m = desk_model();
    m.iterations = 3;
    m.channels = {32, 32, 32};
    const auto rows = sweep(g, tr, te, m, tc);
    std::ostringstream detail;
    bool ok = rows.size() == 5;
    for (const auto& r : rows) {
        ok = ok && r.ok;
        const auto& s = r.test.mean_survivors;
        ok = ok && std::is_sorted(s.rbegin(), s.rend());
        detail << " u=" << fmt("%.2f", r.cell.drop) << (r.ok ? " ok" : " FAILED") << " [";
        for (std::size_t i = 0; i < s.size(); ++i) detail << (i ? " " : "") << fmt("%.1f", s[i]);
        detail << "]";
    }
    // per protein, under the mask path as well
    ModelConfig mm = m;
    auto params = init_params(mm, 3);
    Rng drop_rng(9);
    for (const auto& rec : te.records)
        for (double u : g.drop) {
            auto masked = rec;
            std::vector<std::size_t> idx(rec.size());
            std::iota(idx.begin(), idx.end(), 0);
            drop_rng.shuffle(idx.begin(), idx.end());
            for (std::size_t i = 0; i < floor_fraction(u, rec.size()); ++i) masked.present_mask[idx[i]] = false;
            const auto tr2 = predict(masked, params, mm).trace;
            std::size_t prev = tr2.input_nodes;
            for (const auto& it : tr2.iterations) {
                ok = ok && it.node_ids.size() <= prev;
                prev = it.node_ids.size();
            }
            ok = ok && tr2.survivors.size() <= prev;
        }
    return {ok, "train+eval per u; mean node counts per iteration:" + detail.str()};
}

// ---- 9 ----
Outcome determinism() {
    SynthConfig sc;
    sc.num_proteins = 30;
    sc.num_classes = 3;
    Rng rng(909);
    Dataset all = synth_motif_dataset(sc, rng);
    Dataset tr = all, te = all;
    tr.records.assign(all.records.begin(), all.records.begin() + 20);
    te.records.assign(all.records.begin() + 20, all.records.end());
    ModelConfig m = desk_model();
    m.num_classes = 3;
    TrainConfig tc = desk_train(17);
    tc.epochs = 6;
    tc.eval_every = 2;
    tc.use_augment = true;
    tc.augment.drop_fraction = 0.1;
    const auto a = train(tr, &te, m, tc);
    const auto b = train(tr, &te, m, tc);
    const bool losses = a.report.epoch_loss == b.report.epoch_loss;
    const auto ca = make_checkpoint(m, a.params), cb = make_checkpoint(m, b.params);
    const bool ckpt = diff::encode_checkpoint(ca.params, ca.metadata) == diff::encode_checkpoint(cb.params, cb.metadata);
    SweepGrid g;
    g.omega = {0.3, 0.5};
    g.attention = {AttentionMode::learned, AttentionMode::random_baseline};
    tc.epochs = 3;
    const auto s1 = sweep_csv(sweep(g, tr, te, m, tc, 1));
    const auto s2 = sweep_csv(sweep(g, tr, te, m, tc, 1));
    const auto s3 = sweep_csv(sweep(g, tr, te, m, tc, 3));
    const bool tables = s1 == s2 && s1 == s3;
    return {losses && ckpt && tables, std::string("loss sequences ") + (losses ? "identical" : "DIFFER") +
                                          ", checkpoint bytes " + (ckpt ? "identical" : "DIFFER") + ", sweep tables " +
                                          (tables ? "identical (1 and 3 jobs)" : "DIFFER")};
}

// ---- 10 ----
Outcome trace_fidelity() {
    const fs::path dir = fs::temp_directory_path() / "nclust_acceptance_trace";
    fs::remove_all(dir);
    fs::create_directories(dir);
    SynthConfig sc;
    sc.num_proteins = 12;
    sc.num_classes = 2;
    sc.chain_min = 60;
    sc.chain_max = 90;
    Rng rng(1010);
    Dataset ds = synth_motif_dataset(sc, rng);
    ModelConfig m = small_model(4, 16, 2);
    TrainConfig tc = desk_train(4);
    tc.epochs = 2;
    auto trained = train(ds, nullptr, m, tc);
    const auto ck = make_checkpoint(m, trained.params);
    diff::save_checkpoint(dir / "model.bin", ck.params, ck.metadata);
    write_dataset(dir / "data", {ds});

    bool ok = true;
    std::size_t compared = 0;
    for (const auto& rec : ds.records) {
        const std::string out = (dir / "out").string(), ck_path = (dir / "model.bin").string(),
                          data = (dir / "data").string();
        const char* argv[] = {"nclust", "trace",   "--checkpoint", ck_path.c_str(), "--data", data.c_str(),
                              "--split", "train",  "--id",         rec.id.c_str(),  "--out",  out.c_str()};
        std::ostringstream so, se;
        if (run_cli(12, argv, so, se) != 0) return {false, "trace command failed: " + se.str()};
        std::ifstream in(dir / "out" / ("trace_" + rec.id + ".json"));
        const json t = json::parse(in);

        auto [model, params] = restore_checkpoint(diff::load_checkpoint(dir / "model.bin"));
        diff::Graph g;
        const auto fw = forward(g, rec, params, model);
        const auto& its = t.at("iterations");
        ok = ok && its.size() == 4;
        std::size_t expect = rec.size();
        for (std::size_t i = 0; i < its.size() && i < 4; ++i) {
            const auto scores = its[i].at("scores").get<std::vector<double>>();
            ok = ok && its[i].at("node_ids").size() == expect;
            ok = ok && scores == fw.trace.iterations[i].scores; // bitwise
            compared += scores.size();
            expect = survivor_count(expect, model.omega);
        }
        ok = ok && t.at("survivors").size() == expect;
    }
    fs::remove_all(dir);
    return {ok, std::to_string(ds.size()) + " traces, 4 blocks each, " + std::to_string(compared) +
                    " scores compared bitwise with the forward pass"};
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> all{
        {"rigid-motion invariance", rigid_motion},
        {"gradient correctness", gradient_check},
        {"nomination cardinality law", cardinality},
        {"neighbor-search oracle", neighbor_oracle},
        {"F_max oracle", fmax_oracle},
        {"desk-scale learning", desk_learning},
        {"ablation direction", ablation},
        {"missing-coordinate robustness", missing_coordinates},
        {"determinism", determinism},
        {"trace fidelity", trace_fidelity},
    };
    int failed = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        Outcome o;
        try {
            o = all[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << all[i].name << "): " << o.detail
                  << std::endl;
    }
    std::cout << (all.size() - failed) << "/" << all.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
