#include "nclust/train.hpp"

#include "nclust/error.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

namespace nclust {

using diff::Graph;
using diff::ParamSet;
using json = nlohmann::json;

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw SchemaError("train: lr must be finite and >= 0");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw SchemaError("train: weight_decay must be >= 0");
    if (batch_size == 0) throw SchemaError("train: batch_size must be positive");
    if (epochs == 0) throw SchemaError("train: epochs must be >= 1");
    if (eval_every == 0) throw SchemaError("train: eval_every must be positive");
    if (!(stop_at_train_accuracy >= 0.0 && stop_at_train_accuracy <= 1.0))
        throw SchemaError("train: stop_at_train_accuracy must be in [0, 1]");
    if (!(clip_norm >= 0.0) || !std::isfinite(clip_norm)) throw SchemaError("train: clip_norm must be a finite value >= 0");
    if (use_augment) augment.validate();
}

json to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"use_augment", c.use_augment},
            {"augment",
             {{"noise_std", c.augment.noise_std},
              {"scale_min", c.augment.scale_min},
              {"scale_max", c.augment.scale_max},
              {"drop_fraction", c.augment.drop_fraction}}},
            {"eval_every", c.eval_every},
            {"stop_at_train_accuracy", c.stop_at_train_accuracy},
            {"clip_norm", c.clip_norm},
            {"calibration_records", c.calibration_records},
            {"timing", c.timing}};
}

TrainConfig train_config_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("train config must be a JSON object");
    TrainConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "lr") c.lr = v.get<double>();
            else if (key == "weight_decay") c.weight_decay = v.get<double>();
            else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (key == "epochs") c.epochs = v.get<std::size_t>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "use_augment") c.use_augment = v.get<bool>();
            else if (key == "eval_every") c.eval_every = v.get<std::size_t>();
            else if (key == "stop_at_train_accuracy") c.stop_at_train_accuracy = v.get<double>();
            else if (key == "clip_norm") c.clip_norm = v.get<double>();
            else if (key == "calibration_records") c.calibration_records = v.get<std::size_t>();
            else if (key == "timing") c.timing = v.get<bool>();
            else if (key == "augment") {
                for (const auto& [ak, av] : v.items()) {
                    if (ak == "noise_std") c.augment.noise_std = av.get<double>();
                    else if (ak == "scale_min") c.augment.scale_min = av.get<double>();
                    else if (ak == "scale_max") c.augment.scale_max = av.get<double>();
                    else if (ak == "drop_fraction") c.augment.drop_fraction = av.get<double>();
                    else throw SchemaError("train config: unknown augment key '" + ak + "'");
                }
            } else
                throw SchemaError("train config: unknown key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

double EvalReport::primary() const {
    if (accuracy) return *accuracy;
    if (fmax) return fmax->fmax;
    return 0.0;
}

namespace {

template <class T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

void check_task(const Dataset& d, const ModelConfig& m) {
    if (d.task != m.task)
        throw SchemaError("dataset task " + std::string(to_string(d.task)) + " does not match model task " +
                          std::string(to_string(m.task)));
    if (d.num_classes != m.num_classes)
        throw SchemaError("dataset has " + std::to_string(d.num_classes) + " classes, model head has " +
                          std::to_string(m.num_classes));
}

} // namespace

json to_json(const EvalReport& r) {
    json j{{"proteins", r.proteins},
           {"accuracy", opt(r.accuracy)},
           {"mean_loss", r.mean_loss},
           {"mean_survivors", r.mean_survivors},
           {"seconds_per_prediction", opt(r.seconds_per_prediction)}};
    j["fmax"] = r.fmax ? json{{"fmax", r.fmax->fmax},
                              {"threshold", r.fmax->threshold},
                              {"excluded_empty", r.fmax->excluded_empty}}
                       : json(nullptr);
    j["nomination_recall"] =
        r.nomination ? json{{"raw", r.nomination->raw}, {"enrichment", r.nomination->enrichment}} : json(nullptr);
    return j;
}

json to_json(const MetricReport& r) {
    json evals = json::array();
    for (const auto& e : r.evals)
        evals.push_back({{"epoch", e.epoch}, {"train_metric", e.train_metric}, {"val_metric", opt(e.val_metric)}});
    return {{"attention_mode", r.attention_mode},
            {"pooling_mode", r.pooling_mode},
            {"epoch_loss", r.epoch_loss},
            {"evals", std::move(evals)},
            {"epochs_run", r.epochs_run},
            {"best_epoch", r.best_epoch},
            {"target_reached_epoch", opt(r.target_reached_epoch)},
            {"train", to_json(r.train_eval)},
            {"val", r.val_eval ? to_json(*r.val_eval) : json(nullptr)}};
}

EvalReport evaluate(const Dataset& data, ParamSet& params, const ModelConfig& cfg, bool timing,
                    std::vector<Prediction>* predictions) {
    check_task(data, cfg);
    EvalReport out;
    out.proteins = data.size();
    std::vector<std::vector<double>> logits;
    std::vector<std::size_t> labels;
    std::vector<std::vector<double>> probs;
    std::vector<std::vector<std::uint8_t>> truth;
    double loss_sum = 0.0, raw_sum = 0.0, enr_sum = 0.0;
    std::size_t motif_records = 0;
    std::vector<double> survivors;
    double seconds = 0.0;
    if (predictions) predictions->clear();

    for (const auto& input : data.records) {
        const ProteinRecord rec = compact_present(input);
        const auto t0 = std::chrono::steady_clock::now();
        Graph g;
        auto fr = forward(g, rec, params, cfg);
        if (timing) seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        loss_sum += record_loss(fr.logits, rec, cfg).value()[0];
        const auto lv = fr.logits.value().values();
        logits.emplace_back(lv.begin(), lv.end());
        if (cfg.task == TaskKind::single_label) {
            labels.push_back(std::get<std::size_t>(rec.label));
        } else {
            std::vector<double> p;
            for (double z : lv) p.push_back(1.0 / (1.0 + std::exp(-z)));
            probs.push_back(std::move(p));
            truth.push_back(std::get<std::vector<std::uint8_t>>(rec.label));
        }
        const auto& tr = fr.trace;
        if (survivors.empty()) survivors.assign(tr.iterations.size() + 1, 0.0);
        for (std::size_t t = 0; t < tr.iterations.size(); ++t)
            survivors[t] += static_cast<double>(tr.iterations[t].node_ids.size());
        survivors.back() += static_cast<double>(tr.survivors.size());
        if (!rec.motif_ids.empty()) {
            auto nr = nomination_recall(tr, rec.motif_ids);
            raw_sum += nr.raw;
            enr_sum += nr.enrichment;
            ++motif_records;
        }
        if (predictions) predictions->push_back({fr.logits.value(), tr});
    }
    if (data.size() > 0) {
        const double n = static_cast<double>(data.size());
        out.mean_loss = loss_sum / n;
        for (auto& s : survivors) s /= n;
        out.mean_survivors = std::move(survivors);
        if (timing) out.seconds_per_prediction = seconds / n;
    }
    if (cfg.task == TaskKind::single_label)
        out.accuracy = accuracy(logits, labels);
    else
        out.fmax = fmax(probs, truth);
    if (motif_records > 0) {
        const double m = static_cast<double>(motif_records);
        out.nomination = NominationRecall{raw_sum / m, enr_sum / m};
    }
    return out;
}

std::uint64_t model_init_seed(std::uint64_t train_seed) { return mix_seed(train_seed, 1); }

ParamSet initial_params(const Dataset& train_set, const ModelConfig& model, const TrainConfig& cfg) {
    ParamSet params = init_params(model, model_init_seed(cfg.seed));
    const std::size_t n = std::min(cfg.calibration_records, train_set.size());
    calibrate_nomination(params, model, std::span(train_set.records).first(n));
    return params;
}

TrainResult train(const Dataset& train_set, const Dataset* val_set, const ModelConfig& model, const TrainConfig& cfg) {
    model.validate();
    cfg.validate();
    check_task(train_set, model);
    if (val_set) check_task(*val_set, model);
    if (train_set.size() == 0) throw SchemaError("train: empty training set");

    TrainResult out;
    out.params = initial_params(train_set, model, cfg);
    ParamSet& params = out.params;
    Rng order_rng(mix_seed(cfg.seed, 2));
    Rng aug_rng(mix_seed(cfg.seed, 3));
    MetricReport& rep = out.report;
    rep.attention_mode = to_string(model.attention);
    rep.pooling_mode = to_string(model.pooling);

    std::vector<ProteinRecord> records;
    records.reserve(train_set.size());
    for (const auto& r : train_set.records) records.push_back(compact_present(r));

    std::vector<std::size_t> order(records.size());
    std::optional<ParamSet> best;
    double best_val = -1.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        order_rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(stop - start);
            params.zero_grad();
            for (std::size_t i = start; i < stop; ++i) {
                const ProteinRecord& base = records[order[i]];
                const ProteinRecord rec = cfg.use_augment ? augment(base, cfg.augment, aug_rng) : base;
                Graph g;
                auto loss = record_loss(forward(g, rec, params, model).logits, rec, model);
                loss_sum += loss.value()[0];
                g.backward(scale(loss, inv));
            }
            if (cfg.clip_norm > 0.0) diff::clip_grad_norm(params, cfg.clip_norm);
            diff::sgd_step(params, cfg.lr, cfg.weight_decay);
        }
        rep.epoch_loss.push_back(loss_sum / static_cast<double>(records.size()));
        rep.epochs_run = epoch + 1;

        const bool last = epoch + 1 == cfg.epochs;
        if ((epoch + 1) % cfg.eval_every != 0 && !last) continue;
        EvalPoint pt;
        pt.epoch = epoch + 1;
        pt.train_metric = evaluate(train_set, params, model).primary();
        if (val_set) {
            pt.val_metric = evaluate(*val_set, params, model).primary();
            if (*pt.val_metric > best_val) {
                best_val = *pt.val_metric;
                best = params;
                rep.best_epoch = epoch + 1;
            }
        }
        rep.evals.push_back(pt);
        if (cfg.stop_at_train_accuracy > 0.0 && pt.train_metric >= cfg.stop_at_train_accuracy) {
            rep.target_reached_epoch = epoch + 1;
            break;
        }
    }
    if (best)
        params = std::move(*best);
    else
        rep.best_epoch = rep.epochs_run;
    params.clear_grad();
    rep.train_eval = evaluate(train_set, params, model, cfg.timing);
    if (val_set) rep.val_eval = evaluate(*val_set, params, model, cfg.timing);
    return out;
}

namespace {
constexpr const char* model_format = "nclust-model";
}

diff::Checkpoint make_checkpoint(const ModelConfig& model, const ParamSet& params) {
    json meta{{"format", model_format}, {"model", to_json(model)}};
    return {meta.dump(), params};
}

std::pair<ModelConfig, ParamSet> restore_checkpoint(const diff::Checkpoint& ckpt) {
    json meta;
    try {
        meta = json::parse(ckpt.metadata);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("checkpoint metadata: ") + e.what());
    }
    if (!meta.is_object() || meta.value("format", "") != model_format || !meta.contains("model"))
        throw SchemaError("checkpoint does not hold an nclust model");
    ModelConfig model = model_config_from_json(meta.at("model"));
    const ParamSet expected = init_params(model, 0);
    if (expected.size() != ckpt.params.size())
        throw SchemaError("checkpoint has " + std::to_string(ckpt.params.size()) + " tensors, model needs " +
                          std::to_string(expected.size()));
    for (const auto& p : expected) {
        const auto* q = ckpt.params.find(p.name);
        if (!q) throw SchemaError("checkpoint is missing '" + p.name + "'");
        if (q->value.shape() != p.value.shape())
            throw SchemaError("checkpoint tensor '" + p.name + "' has shape " + diff::shape_string(q->value.shape()) +
                              ", expected " + diff::shape_string(p.value.shape()));
    }
    return {model, ckpt.params};
}

std::vector<SweepCell> expand_grid(const SweepGrid& grid, const ModelConfig& base) {
    auto or_base = [](const auto& v, auto fallback) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        return v.empty() ? std::vector<T>{static_cast<T>(fallback)} : v;
    };
    const auto radii = or_base(grid.radius, base.base_radius);
    const auto omegas = or_base(grid.omega, base.omega);
    const auto ts = or_base(grid.iterations, base.iterations);
    const auto drops = or_base(grid.drop, 0.0);
    const auto atts = or_base(grid.attention, base.attention);
    const auto pools = or_base(grid.pooling, base.pooling);
    std::vector<SweepCell> cells;
    for (double r : radii)
        for (double w : omegas)
            for (std::size_t t : ts)
                for (double u : drops)
                    for (auto a : atts)
                        for (auto p : pools) cells.push_back({cells.size(), r, w, t, u, a, p});
    return cells;
}

ModelConfig cell_model(const ModelConfig& base, const SweepCell& cell) {
    ModelConfig m = base;
    m.base_radius = cell.radius;
    m.omega = cell.omega;
    m.iterations = cell.iterations;
    m.attention = cell.attention;
    m.pooling = cell.pooling;
    if (m.channels.empty()) throw SchemaError("sweep: base config has no channels");
    const std::size_t last = m.channels.back();
    m.channels.resize(cell.iterations, last);
    return m;
}

namespace {

Dataset drop_all(const Dataset& d, double u, std::uint64_t seed) {
    if (u == 0.0) return d;
    Dataset out = d;
    Rng rng(seed);
    for (auto& r : out.records) r = drop_nodes(r, u, rng);
    return out;
}

SweepRow run_cell(const SweepCell& cell, const Dataset& train_set, const Dataset& test_set, const ModelConfig& base,
                  const TrainConfig& cfg) {
    SweepRow row;
    row.cell = cell;
    try {
        const ModelConfig m = cell_model(base, cell);
        const Dataset tr = drop_all(train_set, cell.drop, mix_seed(cfg.seed, 11));
        const Dataset te = drop_all(test_set, cell.drop, mix_seed(cfg.seed, 12));
        auto result = train(tr, nullptr, m, cfg);
        row.report = std::move(result.report);
        row.test = evaluate(te, result.params, m, cfg.timing);
        row.ok = true;
    } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
    }
    return row;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

} // namespace

std::vector<SweepRow> sweep(const SweepGrid& grid, const Dataset& train_set, const Dataset& test_set,
                            const ModelConfig& base, const TrainConfig& cfg, std::size_t jobs) {
    const auto cells = expand_grid(grid, base);
    std::vector<SweepRow> rows(cells.size());
    jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, cells.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) rows[i] = run_cell(cells[i], train_set, test_set, base, cfg);
        return rows;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < cells.size(); i = next++)
                rows[i] = run_cell(cells[i], train_set, test_set, base, cfg);
        });
    for (auto& t : pool) t.join();
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "cell,radius,omega,iterations,drop,attention,pooling,status,epochs_run,final_train_loss,train_metric,"
          "test_metric,test_fmax_threshold,nomination_raw,nomination_enrichment,mean_survivors,error\n";
    for (const auto& r : rows) {
        const auto& c = r.cell;
        os << c.index << ',' << num(c.radius) << ',' << num(c.omega) << ',' << c.iterations << ',' << num(c.drop) << ','
           << to_string(c.attention) << ',' << to_string(c.pooling) << ',' << (r.ok ? "ok" : "failed") << ',';
        if (r.ok) {
            const auto& rep = r.report;
            os << rep.epochs_run << ',' << (rep.epoch_loss.empty() ? "" : num(rep.epoch_loss.back())) << ','
               << num(rep.train_eval.primary()) << ',' << num(r.test.primary()) << ','
               << (r.test.fmax ? num(r.test.fmax->threshold) : "") << ','
               << (r.test.nomination ? num(r.test.nomination->raw) : "") << ','
               << (r.test.nomination ? num(r.test.nomination->enrichment) : "") << ',';
            std::string surv;
            for (std::size_t i = 0; i < r.test.mean_survivors.size(); ++i)
                surv += (i ? ";" : "") + num(r.test.mean_survivors[i]);
            os << surv << ',';
        } else {
            os << ",,,,,,,,";
        }
        os << csv_escape(r.error) << '\n';
    }
    return os.str();
}

} // namespace nclust
