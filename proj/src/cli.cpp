#include "nclust/cli.hpp"

#include "nclust/diff/checkpoint.hpp"
#include "nclust/diff/gradcheck.hpp"
#include "nclust/error.hpp"
#include "nclust/synth.hpp"
#include "nclust/trace_svg.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace nclust {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum class Kind { text, uint, real, boolean, uint_list, real_list, text_list };

const std::map<std::string, Kind>& setting_kinds() {
    static const std::map<std::string, Kind> kinds{
        {"data", Kind::text},
        {"out", Kind::text},
        {"split", Kind::text},
        {"iterations", Kind::uint},
        {"blocks", Kind::uint},
        {"radius", Kind::real},
        {"omega", Kind::real},
        {"channels", Kind::uint_list},
        {"embed_dim", Kind::uint},
        {"attention", Kind::text},
        {"pooling", Kind::text},
        {"neighbor_cap", Kind::uint},
        {"random_attention_seed", Kind::uint},
        {"lr", Kind::real},
        {"weight_decay", Kind::real},
        {"batch_size", Kind::uint},
        {"epochs", Kind::uint},
        {"seed", Kind::uint},
        {"augment", Kind::boolean},
        {"noise_std", Kind::real},
        {"scale_min", Kind::real},
        {"scale_max", Kind::real},
        {"drop_fraction", Kind::real},
        {"eval_every", Kind::uint},
        {"stop_at_train_accuracy", Kind::real},
        {"clip_norm", Kind::real},
        {"calibration_records", Kind::uint},
        {"timing", Kind::boolean},
        {"jobs", Kind::uint},
        {"grid_radius", Kind::real_list},
        {"grid_omega", Kind::real_list},
        {"grid_iterations", Kind::uint_list},
        {"grid_drop", Kind::real_list},
        {"grid_attention", Kind::text_list},
        {"grid_pooling", Kind::text_list},
    };
    return kinds;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& why) {
    throw SchemaError("setting '" + key + "': " + why);
}

std::uint64_t as_uint(const std::string& key, const json& v) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    bad_value(key, "expected a non-negative integer, got " + v.dump());
}

double as_real(const std::string& key, const json& v) {
    if (!v.is_number()) bad_value(key, "expected a number, got " + v.dump());
    return v.get<double>();
}

std::string as_text(const std::string& key, const json& v) {
    if (!v.is_string()) bad_value(key, "expected a string, got " + v.dump());
    return v.get<std::string>();
}

template <class F>
auto as_list(const std::string& key, const json& v, F each) {
    using T = decltype(each(key, v));
    std::vector<T> out;
    if (v.is_array())
        for (const auto& e : v) out.push_back(each(key, e));
    else
        out.push_back(each(key, v));
    return out;
}

// Command-line text to the JSON value a config file would hold.
json parse_flag_value(const std::string& key, Kind kind, const std::string& text) {
    auto scalar = [&](Kind k, const std::string& s) -> json {
        if (k == Kind::text) return s;
        if (k == Kind::boolean) {
            if (s == "true" || s == "1") return true;
            if (s == "false" || s == "0") return false;
            bad_value(key, "expected true or false, got '" + s + "'");
        }
        errno = 0;
        char* end = nullptr;
        if (k == Kind::uint) {
            if (s.empty() || s[0] == '-') bad_value(key, "expected a non-negative integer, got '" + s + "'");
            const auto v = std::strtoull(s.c_str(), &end, 10);
            if (errno || *end) bad_value(key, "expected a non-negative integer, got '" + s + "'");
            return static_cast<std::uint64_t>(v);
        }
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || errno || *end) bad_value(key, "expected a number, got '" + s + "'");
        return v;
    };
    auto element = [](Kind k) {
        switch (k) {
        case Kind::uint_list: return Kind::uint;
        case Kind::real_list: return Kind::real;
        case Kind::text_list: return Kind::text;
        default: return k;
        }
    };
    if (kind == Kind::uint_list || kind == Kind::real_list || kind == Kind::text_list) {
        json arr = json::array();
        std::stringstream ss(text);
        std::string tok;
        while (std::getline(ss, tok, ',')) arr.push_back(scalar(element(kind), tok));
        if (arr.empty()) bad_value(key, "empty list");
        return arr;
    }
    return scalar(kind, text);
}

} // namespace

void apply_setting(RunConfig& c, const std::string& key, const json& v) {
    auto& m = c.model;
    auto& t = c.train;
    if (key == "data") c.data = as_text(key, v);
    else if (key == "out") c.out = as_text(key, v);
    else if (key == "split") c.split = as_text(key, v);
    else if (key == "iterations") m.iterations = as_uint(key, v);
    else if (key == "blocks") m.blocks = as_uint(key, v);
    else if (key == "radius") m.base_radius = as_real(key, v);
    else if (key == "omega") m.omega = as_real(key, v);
    else if (key == "channels") {
        auto l = as_list(key, v, as_uint);
        m.channels.assign(l.begin(), l.end());
    } else if (key == "embed_dim") m.embed_dim = as_uint(key, v);
    else if (key == "attention") m.attention = parse_attention_mode(as_text(key, v));
    else if (key == "pooling") m.pooling = parse_pooling_mode(as_text(key, v));
    else if (key == "neighbor_cap") m.neighbor_cap = as_uint(key, v);
    else if (key == "random_attention_seed") m.random_attention_seed = as_uint(key, v);
    else if (key == "lr") t.lr = as_real(key, v);
    else if (key == "weight_decay") t.weight_decay = as_real(key, v);
    else if (key == "batch_size") t.batch_size = as_uint(key, v);
    else if (key == "epochs") t.epochs = as_uint(key, v);
    else if (key == "seed") t.seed = as_uint(key, v);
    else if (key == "augment") {
        if (!v.is_boolean()) bad_value(key, "expected true or false");
        t.use_augment = v.get<bool>();
    } else if (key == "noise_std") t.augment.noise_std = as_real(key, v);
    else if (key == "scale_min") t.augment.scale_min = as_real(key, v);
    else if (key == "scale_max") t.augment.scale_max = as_real(key, v);
    else if (key == "drop_fraction") t.augment.drop_fraction = as_real(key, v);
    else if (key == "eval_every") t.eval_every = as_uint(key, v);
    else if (key == "stop_at_train_accuracy") t.stop_at_train_accuracy = as_real(key, v);
    else if (key == "clip_norm") t.clip_norm = as_real(key, v);
    else if (key == "calibration_records") t.calibration_records = as_uint(key, v);
    else if (key == "timing") {
        if (!v.is_boolean()) bad_value(key, "expected true or false");
        t.timing = v.get<bool>();
    } else if (key == "jobs") c.jobs = as_uint(key, v);
    else if (key == "grid_radius") c.grid.radius = as_list(key, v, as_real);
    else if (key == "grid_omega") c.grid.omega = as_list(key, v, as_real);
    else if (key == "grid_iterations") {
        auto l = as_list(key, v, as_uint);
        c.grid.iterations.assign(l.begin(), l.end());
    } else if (key == "grid_drop") c.grid.drop = as_list(key, v, as_real);
    else if (key == "grid_attention") {
        c.grid.attention.clear();
        for (const auto& s : as_list(key, v, as_text)) c.grid.attention.push_back(parse_attention_mode(s));
    } else if (key == "grid_pooling") {
        c.grid.pooling.clear();
        for (const auto& s : as_list(key, v, as_text)) c.grid.pooling.push_back(parse_pooling_mode(s));
    } else
        throw SchemaError("unknown setting '" + key + "'");
}

void apply_settings(RunConfig& c, const json& object) {
    if (!object.is_object()) throw SchemaError("config must be a JSON object");
    for (const auto& [k, v] : object.items()) apply_setting(c, k, v);
}

json to_json(const RunConfig& c) {
    const auto& m = c.model;
    const auto& t = c.train;
    json att = json::array(), pool = json::array();
    for (auto a : c.grid.attention) att.push_back(std::string(to_string(a)));
    for (auto p : c.grid.pooling) pool.push_back(std::string(to_string(p)));
    return {{"data", c.data},
            {"out", c.out},
            {"split", c.split},
            {"iterations", m.iterations},
            {"blocks", m.blocks},
            {"radius", m.base_radius},
            {"omega", m.omega},
            {"channels", m.channels},
            {"embed_dim", m.embed_dim},
            {"attention", std::string(to_string(m.attention))},
            {"pooling", std::string(to_string(m.pooling))},
            {"neighbor_cap", m.neighbor_cap},
            {"random_attention_seed", m.random_attention_seed},
            {"lr", t.lr},
            {"weight_decay", t.weight_decay},
            {"batch_size", t.batch_size},
            {"epochs", t.epochs},
            {"seed", t.seed},
            {"augment", t.use_augment},
            {"noise_std", t.augment.noise_std},
            {"scale_min", t.augment.scale_min},
            {"scale_max", t.augment.scale_max},
            {"drop_fraction", t.augment.drop_fraction},
            {"eval_every", t.eval_every},
            {"stop_at_train_accuracy", t.stop_at_train_accuracy},
            {"clip_norm", t.clip_norm},
            {"calibration_records", t.calibration_records},
            {"timing", t.timing},
            {"jobs", c.jobs},
            {"grid_radius", c.grid.radius},
            {"grid_omega", c.grid.omega},
            {"grid_iterations", c.grid.iterations},
            {"grid_drop", c.grid.drop},
            {"grid_attention", att},
            {"grid_pooling", pool}};
}

namespace {

// Usage problems found after CLI11 parsing (missing inputs and the like).
struct UsageError : Error {
    using Error::Error;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed: " + p.string());
}

json parse_json_file(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::parse_error& e) {
        throw ParseError(p.string() + ": " + e.what());
    }
}

/// Flags bound to flat settings; applied after the config file.
struct SettingFlags {
    std::map<std::string, std::string> text;
    std::map<std::string, bool> flag;
    std::map<std::string, CLI::Option*> options;
    std::string config_path;
    CLI::Option* config_opt = nullptr;

    void add(CLI::App* app, const std::string& key, const std::string& help, const std::string& flag_name = {}) {
        const Kind kind = setting_kinds().at(key);
        std::string name = flag_name;
        if (name.empty()) {
            name = "--" + key;
            std::replace(name.begin(), name.end(), '_', '-');
        }
        if (kind == Kind::boolean)
            options[key] = app->add_flag(name, flag[key], help);
        else
            options[key] = app->add_option(name, text[key], help)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }

    void add_config(CLI::App* app) {
        config_opt = app->add_option("--config", config_path, "JSON file of settings (flags override it)");
    }

    bool given(const std::string& key, const json& file) const {
        auto it = options.find(key);
        return (it != options.end() && it->second->count() > 0) || file.contains(key);
    }

    json file_settings() const {
        if (!config_opt || config_opt->count() == 0) return json::object();
        json j = parse_json_file(config_path);
        if (!j.is_object()) throw SchemaError("config file must hold a JSON object");
        j.erase("command"); // written alongside outputs; lets an effective config be fed back
        return j;
    }

    void apply(RunConfig& cfg, const json& file) const {
        apply_settings(cfg, file);
        for (const auto& [key, opt] : options) {
            if (opt->count() == 0) continue;
            const Kind kind = setting_kinds().at(key);
            apply_setting(cfg, key, kind == Kind::boolean ? json(flag.at(key)) : parse_flag_value(key, kind, text.at(key)));
        }
    }
};

void add_model_flags(CLI::App* app, SettingFlags& f, bool grid_names) {
    if (!grid_names) {
        f.add(app, "iterations", "clustering iterations T");
        f.add(app, "radius", "base radius r in angstrom; iteration t uses t*r");
        f.add(app, "omega", "fraction of clusters nominated per iteration");
        f.add(app, "attention", "learned | random-baseline");
        f.add(app, "pooling", "neural-clustering | average-pool-baseline");
    }
    f.add(app, "blocks", "CRE blocks per iteration");
    f.add(app, "channels", "comma-separated widths, one per iteration");
    f.add(app, "embed_dim", "residue embedding width");
    f.add(app, "neighbor_cap", "maximum cluster size");
    f.add(app, "random_attention_seed", "seed of the random-attention baseline");
}

void add_train_flags(CLI::App* app, SettingFlags& f) {
    f.add(app, "lr", "SGD learning rate");
    f.add(app, "weight_decay", "L2 weight decay");
    f.add(app, "batch_size", "records per SGD step");
    f.add(app, "epochs", "training epochs");
    f.add(app, "seed", "seed for initialization, shuffling and augmentation");
    f.add(app, "augment", "enable noise/scale/drop augmentation");
    f.add(app, "noise_std", "augmentation noise (angstrom)");
    f.add(app, "scale_min", "lower anisotropic scale factor");
    f.add(app, "scale_max", "upper anisotropic scale factor");
    f.add(app, "drop_fraction", "augmentation node-drop fraction");
    f.add(app, "eval_every", "epochs between evaluations");
    f.add(app, "stop_at_train_accuracy", "stop once clean train accuracy reaches this (0 = off)");
    f.add(app, "clip_norm", "global gradient-norm clip (0 = off)");
    f.add(app, "calibration_records", "train records used to calibrate nomination scores (0 = off)");
    f.add(app, "timing", "report wall-clock per prediction");
}

// Iteration count given without widths: reuse the last width.
void fit_channels(RunConfig& cfg, const SettingFlags& f, const json& file) {
    if (!f.given("channels", file) && cfg.model.channels.size() != cfg.model.iterations && !cfg.model.channels.empty())
        cfg.model.channels.resize(cfg.model.iterations, cfg.model.channels.back());
}

void write_effective_config(const fs::path& dir, const std::string& command, const json& settings) {
    json j = settings;
    j["command"] = command;
    write_file(dir / "config.json", j.dump(2) + "\n");
}

Split split_named(const std::string& s) {
    try {
        return parse_split(s);
    } catch (const SchemaError&) {
        throw UsageError("--split must be train, val or test");
    }
}

fs::path require_dir(const std::string& path, const char* flag) {
    if (path.empty()) throw UsageError(std::string(flag) + " is required");
    if (!fs::is_directory(path)) throw IoError(std::string(flag) + ": no dataset directory at '" + path + "'");
    return path;
}

std::pair<ModelConfig, diff::ParamSet> load_model(const std::string& path) {
    if (path.empty()) throw UsageError("--checkpoint is required");
    if (!fs::exists(path)) throw IoError("--checkpoint: no file at '" + path + "'");
    return restore_checkpoint(diff::load_checkpoint(path));
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

// ---- subcommands ----

struct SynthFlags {
    std::string out;
    std::size_t proteins = 200, val = 0, test = 0, classes = 4, motif = 6, chain_min = 40, chain_max = 60;
    double noise = 0.0;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
    if (f.out.empty()) throw UsageError("--out is required");
    SynthConfig sc;
    sc.num_proteins = f.proteins + f.val + f.test;
    sc.num_classes = f.classes;
    sc.motif_size = f.motif;
    sc.chain_min = f.chain_min;
    sc.chain_max = f.chain_max;
    sc.noise = f.noise;
    if (f.proteins == 0) throw UsageError("--proteins must be positive");
    try {
        sc.validate();
    } catch (const SchemaError& e) {
        throw UsageError(e.what());
    }
    Rng rng(f.seed);
    Dataset all = synth_motif_dataset(sc, rng);
    std::vector<Dataset> splits;
    std::size_t at = 0;
    for (auto [count, split] : {std::pair{f.proteins, Split::train}, {f.val, Split::val}, {f.test, Split::test}}) {
        if (count == 0) continue;
        Dataset d;
        d.task = all.task;
        d.num_classes = all.num_classes;
        d.split = split;
        d.records.assign(all.records.begin() + static_cast<std::ptrdiff_t>(at),
                         all.records.begin() + static_cast<std::ptrdiff_t>(at + count));
        at += count;
        splits.push_back(std::move(d));
    }
    write_dataset(f.out, splits);
    json eff{{"proteins", f.proteins}, {"val", f.val},     {"test", f.test},           {"classes", f.classes},
             {"motif_size", f.motif},  {"chain_min", f.chain_min}, {"chain_max", f.chain_max}, {"noise", f.noise},
             {"seed", f.seed},         {"out", f.out}};
    write_effective_config(f.out, "synth", eff);
    out << "wrote " << sc.num_proteins << " records (" << f.proteins << " train, " << f.val << " val, " << f.test
        << " test) to " << f.out << "\n";
    return exit_ok;
}

int cmd_train(RunConfig cfg, std::ostream& out) {
    const fs::path data = require_dir(cfg.data, "--data");
    if (cfg.out.empty()) throw UsageError("--out is required");
    const Dataset tr = load_dataset(data, Split::train);
    if (tr.size() == 0) throw UsageError("dataset has no train records");
    const Dataset val = load_dataset(data, Split::val);
    cfg.model.task = tr.task;
    cfg.model.num_classes = tr.num_classes;
    cfg.model.validate();
    cfg.train.validate();

    auto result = train(tr, val.size() ? &val : nullptr, cfg.model, cfg.train);
    const fs::path dir = cfg.out;
    fs::create_directories(dir);
    const auto ck = make_checkpoint(cfg.model, result.params);
    diff::save_checkpoint(dir / "checkpoint.bin", ck.params, ck.metadata);
    json report = to_json(result.report);
    report["model"] = to_json(cfg.model);
    write_file(dir / "report.json", report.dump(2) + "\n");
    write_effective_config(dir, "train", to_json(cfg));

    const auto& rep = result.report;
    out << "mode " << rep.attention_mode << " / " << rep.pooling_mode << "\n";
    out << "epochs " << rep.epochs_run << ", final loss " << fixed(rep.epoch_loss.back(), 6) << "\n";
    out << "train " << (cfg.model.task == TaskKind::single_label ? "accuracy " : "fmax ")
        << fixed(rep.train_eval.primary()) << "\n";
    if (rep.val_eval) out << "val " << fixed(rep.val_eval->primary()) << " (best epoch " << rep.best_epoch << ")\n";
    out << "wrote " << (dir / "checkpoint.bin").string() << "\n";
    return exit_ok;
}

struct EvalFlags {
    std::string checkpoint, predictions, task, out;
};

int eval_predictions(const EvalFlags& f, std::ostream& out) {
    if (!fs::exists(f.predictions)) throw IoError("--predictions: no file at '" + f.predictions + "'");
    const json p = parse_json_file(f.predictions);
    if (f.task.empty()) throw UsageError("--task is required with --predictions");
    const TaskKind task = [&] {
        try {
            return parse_task(f.task);
        } catch (const SchemaError& e) {
            throw UsageError(e.what());
        }
    }();
    json result;
    try {
        if (task == TaskKind::multi_label) {
            auto scores = p.at("scores").get<std::vector<std::vector<double>>>();
            auto truth = p.at("truth").get<std::vector<std::vector<std::uint8_t>>>();
            const auto r = fmax(scores, truth);
            result = {{"task", "multi_label"}, {"fmax", r.fmax}, {"threshold", r.threshold},
                      {"excluded_empty", r.excluded_empty}};
        } else {
            auto logits = p.at("logits").get<std::vector<std::vector<double>>>();
            auto labels = p.at("labels").get<std::vector<std::size_t>>();
            result = {{"task", "single_label"}, {"accuracy", accuracy(logits, labels)}};
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("predictions file: ") + e.what());
    }
    if (!f.out.empty()) write_file(fs::path(f.out) / "eval.json", result.dump(2) + "\n");
    out << result.dump(2) << "\n";
    return exit_ok;
}

int cmd_eval(const EvalFlags& f, RunConfig cfg, std::ostream& out) {
    if (!f.predictions.empty()) return eval_predictions(f, out);
    auto [model, params] = load_model(f.checkpoint);
    const fs::path data = require_dir(cfg.data, "--data");
    const Dataset ds = load_dataset(data, split_named(cfg.split));
    if (ds.size() == 0) throw UsageError("split '" + cfg.split + "' is empty");
    const EvalReport rep = evaluate(ds, params, model, cfg.train.timing);
    json j = to_json(rep);
    j["split"] = cfg.split;
    if (!f.out.empty()) {
        write_file(fs::path(f.out) / "eval.json", j.dump(2) + "\n");
        json eff = to_json(cfg);
        eff["checkpoint"] = f.checkpoint;
        write_effective_config(f.out, "eval", eff);
    }
    out << j.dump(2) << "\n";
    return exit_ok;
}

struct TraceFlags {
    std::string checkpoint, record, id, out;
    bool svg = false;
};

int cmd_trace(const TraceFlags& f, const RunConfig& cfg, std::ostream& out) {
    auto [model, params] = load_model(f.checkpoint);
    ProteinRecord rec;
    if (!f.record.empty()) {
        if (!fs::exists(f.record)) throw IoError("--record: no file at '" + f.record + "'");
        rec = deserialize_record(read_file(f.record));
    } else {
        const fs::path data = require_dir(cfg.data, "--data (or --record)");
        const Dataset ds = load_dataset(data, split_named(cfg.split));
        if (ds.size() == 0) throw UsageError("split '" + cfg.split + "' is empty");
        if (f.id.empty()) {
            rec = ds.records.front();
        } else {
            auto it = std::find_if(ds.records.begin(), ds.records.end(), [&](const auto& r) { return r.id == f.id; });
            if (it == ds.records.end()) throw UsageError("no record '" + f.id + "' in split '" + cfg.split + "'");
            rec = *it;
        }
    }
    if (f.svg && f.out.empty()) throw UsageError("--svg needs --out");
    const Prediction p = predict(rec, params, model);
    json j = to_json(p.trace);
    j["logits"] = std::vector<double>(p.logits.values().begin(), p.logits.values().end());
    if (f.out.empty()) {
        out << j.dump(2) << "\n";
        return exit_ok;
    }
    const fs::path dir = f.out;
    write_file(dir / ("trace_" + rec.id + ".json"), j.dump(2) + "\n");
    if (f.svg)
        for (const auto& it : p.trace.iterations)
            write_file(dir / ("trace_" + rec.id + "_iter" + std::to_string(it.iteration) + ".svg"), trace_svg(it));
    json eff = to_json(cfg);
    eff["checkpoint"] = f.checkpoint;
    eff["record"] = f.record;
    eff["id"] = rec.id;
    eff["svg"] = f.svg;
    write_effective_config(dir, "trace", eff);
    out << "traced " << rec.id << ": " << p.trace.iterations.size() << " iterations, node counts";
    for (const auto& it : p.trace.iterations) out << ' ' << it.node_ids.size();
    out << " -> " << p.trace.survivors.size() << "\n";
    return exit_ok;
}

int cmd_sweep(RunConfig cfg, std::ostream& out) {
    const fs::path data = require_dir(cfg.data, "--data");
    const Dataset tr = load_dataset(data, Split::train);
    const Dataset te = load_dataset(data, Split::test);
    if (tr.size() == 0 || te.size() == 0) throw UsageError("sweep needs train and test records");
    cfg.model.task = tr.task;
    cfg.model.num_classes = tr.num_classes;
    // cells cut or extend the channel list anyway
    if (!cfg.model.channels.empty()) cfg.model.channels.resize(cfg.model.iterations, cfg.model.channels.back());
    cfg.model.validate();
    cfg.train.validate();
    if (cfg.jobs == 0) throw UsageError("--jobs must be positive");
    const auto rows = sweep(cfg.grid, tr, te, cfg.model, cfg.train, cfg.jobs);
    const std::string csv = sweep_csv(rows);
    if (!cfg.out.empty()) {
        write_file(fs::path(cfg.out) / "sweep.csv", csv);
        write_effective_config(cfg.out, "sweep", to_json(cfg));
    }
    out << csv;
    return std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.ok; }) ? exit_ok : exit_runtime;
}

struct GradcheckFlags {
    std::uint64_t seed = 1;
    std::size_t nodes = 20;
};

int cmd_gradcheck(const GradcheckFlags& f, std::ostream& out) {
    if (f.nodes == 0) throw UsageError("--nodes must be positive");
    ModelConfig m;
    m.iterations = 2;
    m.blocks = 1;
    m.channels = {8, 8};
    m.embed_dim = 8;
    m.num_classes = 3;
    Rng rng(f.seed);
    ProteinRecord rec;
    rec.id = "gradcheck";
    rec.coords = random_compact_chain(f.nodes, rng);
    for (std::size_t i = 0; i < f.nodes; ++i) {
        rec.aa_types.push_back(static_cast<int>(rng.below(20)));
        rec.seq_index.push_back(static_cast<int>(i));
        rec.present_mask.push_back(true);
    }
    rec.label = static_cast<std::size_t>(rng.below(3));
    auto params = init_params(m, f.seed);
    const auto report = diff::grad_check(params, [&](diff::Graph& g, diff::ParamSet& p) {
        return record_loss(forward(g, rec, p, m).logits, rec, m);
    });
    for (const auto& e : report.params)
        out << std::left << std::setw(22) << e.name << " max " << std::scientific << std::setprecision(3) << e.max_rel
            << "  mean " << e.mean_rel << "\n";
    const double worst = report.max_rel();
    out << "max relative error " << std::scientific << std::setprecision(3) << worst << "\n";
    return worst < 1e-3 ? exit_ok : exit_runtime;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"nclust: neural clustering for protein structures"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    SynthFlags sf;
    auto* synth = app.add_subcommand("synth", "write a synthetic planted-motif dataset");
    synth->add_option("--out", sf.out, "output directory")->required();
    synth->add_option("--proteins", sf.proteins, "train records")->capture_default_str();
    synth->add_option("--val", sf.val, "extra validation records")->capture_default_str();
    synth->add_option("--test", sf.test, "extra test records")->capture_default_str();
    synth->add_option("--classes", sf.classes, "number of motif classes")->capture_default_str();
    synth->add_option("--motif-size", sf.motif, "residues per motif")->capture_default_str();
    synth->add_option("--chain-min", sf.chain_min, "shortest chain")->capture_default_str();
    synth->add_option("--chain-max", sf.chain_max, "longest chain")->capture_default_str();
    synth->add_option("--noise", sf.noise, "per-residue jitter of implanted motifs (angstrom)")->capture_default_str();
    synth->add_option("--seed", sf.seed, "generator seed")->capture_default_str();

    SettingFlags train_f;
    auto* train_cmd = app.add_subcommand("train", "train a model; writes checkpoint.bin, report.json, config.json");
    train_f.add_config(train_cmd);
    train_f.add(train_cmd, "data", "dataset directory");
    train_f.add(train_cmd, "out", "output directory");
    add_model_flags(train_cmd, train_f, false);
    add_train_flags(train_cmd, train_f);

    EvalFlags ef;
    SettingFlags eval_f;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint, or score a predictions file");
    eval_cmd->add_option("--checkpoint", ef.checkpoint, "checkpoint file");
    eval_cmd->add_option("--predictions", ef.predictions, "JSON with scores+truth or logits+labels");
    eval_cmd->add_option("--task", ef.task, "single_label | multi_label (with --predictions)");
    eval_cmd->add_option("--out", ef.out, "directory for eval.json and config.json");
    eval_f.add(eval_cmd, "data", "dataset directory");
    eval_f.add(eval_cmd, "split", "train | val | test");
    eval_f.add(eval_cmd, "timing", "report wall-clock per prediction");

    TraceFlags tf;
    SettingFlags trace_f;
    auto* trace_cmd = app.add_subcommand("trace", "export per-iteration nomination scores of one record");
    trace_cmd->add_option("--checkpoint", tf.checkpoint, "checkpoint file");
    trace_cmd->add_option("--record", tf.record, "record JSON file");
    trace_cmd->add_option("--id", tf.id, "record id within --data/--split (default: first)");
    trace_cmd->add_option("--out", tf.out, "output directory (default: print JSON)");
    trace_cmd->add_flag("--svg", tf.svg, "also write one SVG per iteration");
    trace_f.add(trace_cmd, "data", "dataset directory");
    trace_f.add(trace_cmd, "split", "train | val | test");

    SettingFlags sweep_f;
    auto* sweep_cmd = app.add_subcommand("sweep", "train and test one model per grid cell; prints CSV");
    sweep_f.add_config(sweep_cmd);
    sweep_f.add(sweep_cmd, "data", "dataset directory with train and test splits");
    sweep_f.add(sweep_cmd, "out", "directory for sweep.csv and config.json");
    sweep_f.add(sweep_cmd, "grid_radius", "base radii", "--radius");
    sweep_f.add(sweep_cmd, "grid_omega", "nomination fractions", "--omega");
    sweep_f.add(sweep_cmd, "grid_iterations", "iteration counts", "--iterations");
    sweep_f.add(sweep_cmd, "grid_drop", "missing-coordinate fractions u", "--drop");
    sweep_f.add(sweep_cmd, "grid_attention", "attention modes", "--attention");
    sweep_f.add(sweep_cmd, "grid_pooling", "pooling modes", "--pooling");
    sweep_f.add(sweep_cmd, "jobs", "cells run in parallel");
    add_model_flags(sweep_cmd, sweep_f, true);
    add_train_flags(sweep_cmd, sweep_f);

    GradcheckFlags gf;
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the tiny model");
    grad_cmd->add_option("--seed", gf.seed, "seed for the protein and parameters")->capture_default_str();
    grad_cmd->add_option("--nodes", gf.nodes, "residues in the random protein")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        auto settings = [](SettingFlags& f) {
            RunConfig cfg;
            const json file = f.file_settings();
            f.apply(cfg, file);
            fit_channels(cfg, f, file);
            return cfg;
        };
        if (synth->parsed()) return cmd_synth(sf, out);
        if (train_cmd->parsed()) return cmd_train(settings(train_f), out);
        if (eval_cmd->parsed()) return cmd_eval(ef, settings(eval_f), out);
        if (trace_cmd->parsed()) return cmd_trace(tf, settings(trace_f), out);
        if (sweep_cmd->parsed()) return cmd_sweep(settings(sweep_f), out);
        if (grad_cmd->parsed()) return cmd_gradcheck(gf, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const SchemaError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_usage;
    } catch (const IoError& e) {
        err << "input error: " << e.what() << "\n";
        return exit_usage;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_usage;
}

} // namespace nclust
