#include "nclust/protein.hpp"

#include "nclust/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace nclust {

using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, 20> three_letter{"ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU",
                                                        "GLY", "HIS", "ILE", "LEU", "LYS", "MET", "PHE",
                                                        "PRO", "SER", "THR", "TRP", "TYR", "VAL"};
constexpr std::string_view one_letter = "ARNDCQEGHILKMFPSTWYV";

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string_view field(std::string_view line, std::size_t first_col, std::size_t last_col) {
    // PDB columns are 1-based and inclusive.
    if (line.size() < first_col) return {};
    return line.substr(first_col - 1, std::min(line.size(), last_col) - (first_col - 1));
}

double parse_coord(std::string_view s, std::size_t line_no, const char* axis) {
    s = trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ParseError(std::string("bad ") + axis + " coordinate '" + std::string(s) + "'", line_no);
    return v;
}

int parse_int_field(std::string_view s, std::size_t line_no, const char* what) {
    s = trim(s);
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError(std::string("bad ") + what + " '" + std::string(s) + "'", line_no);
    return v;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path.string());
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

json label_to_json(const Label& l) {
    if (std::holds_alternative<std::size_t>(l)) return std::get<std::size_t>(l);
    if (const auto* v = std::get_if<std::vector<std::uint8_t>>(&l)) {
        json a = json::array();
        for (auto b : *v) a.push_back(static_cast<int>(b));
        return a;
    }
    return nullptr;
}

Label label_from_json(const json& j) {
    if (j.is_null()) return std::monostate{};
    if (j.is_number_integer()) {
        const auto v = j.get<long long>();
        if (v < 0) throw SchemaError("label: negative class index");
        return static_cast<std::size_t>(v);
    }
    if (j.is_array()) {
        std::vector<std::uint8_t> out;
        for (const auto& e : j) {
            if (!e.is_number_integer() || (e.get<int>() != 0 && e.get<int>() != 1))
                throw SchemaError("label: multi-label entries must be 0 or 1");
            out.push_back(static_cast<std::uint8_t>(e.get<int>()));
        }
        return out;
    }
    throw SchemaError("label: expected null, integer or 0/1 array");
}

template <class T>
T get_field(const json& j, const char* key) {
    if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("field '") + key + "': " + e.what());
    }
}

constexpr const char* manifest_name = "manifest.json";
constexpr const char* manifest_format = "nclust-dataset";
constexpr int manifest_version = 1;

} // namespace

int residue_index(std::string_view name) {
    name = trim(name);
    for (std::size_t i = 0; i < three_letter.size(); ++i)
        if (three_letter[i] == name) return static_cast<int>(i);
    return unknown_residue;
}

int residue_index(char c) {
    const auto pos = one_letter.find(c);
    return pos == std::string_view::npos ? unknown_residue : static_cast<int>(pos);
}

char residue_letter(int index) {
    if (index < 0 || index >= static_cast<int>(one_letter.size())) return 'X';
    return one_letter[static_cast<std::size_t>(index)];
}

std::string_view to_string(TaskKind t) { return t == TaskKind::single_label ? "single_label" : "multi_label"; }

std::string_view to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

TaskKind parse_task(std::string_view s) {
    if (s == "single_label") return TaskKind::single_label;
    if (s == "multi_label") return TaskKind::multi_label;
    throw SchemaError("unknown task kind '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw SchemaError("unknown split '" + std::string(s) + "'");
}

bool ProteinRecord::all_present() const {
    return std::all_of(present_mask.begin(), present_mask.end(), [](bool b) { return b; });
}

void ProteinRecord::validate() const {
    const std::string who = "record '" + id + "': ";
    const std::size_t n = coords.size();
    if (n == 0) throw SchemaError(who + "no nodes");
    if (aa_types.size() != n || seq_index.size() != n || present_mask.size() != n)
        throw SchemaError(who + "field lengths disagree with coords (" + std::to_string(n) + ")");
    for (std::size_t i = 0; i < n; ++i) {
        if (aa_types[i] < 0 || aa_types[i] >= num_residue_types)
            throw SchemaError(who + "aa_types[" + std::to_string(i) + "] out of range");
        if (present_mask[i])
            for (double c : coords[i])
                if (!std::isfinite(c)) throw SchemaError(who + "non-finite coordinate at node " + std::to_string(i));
        if (i > 0 && seq_index[i] <= seq_index[i - 1])
            throw SchemaError(who + "seq_index not strictly increasing at node " + std::to_string(i));
    }
    for (auto m : motif_ids)
        if (m >= n) throw SchemaError(who + "motif id out of range");
}

void ProteinRecord::validate(TaskKind task, std::size_t num_classes) const {
    validate();
    const std::string who = "record '" + id + "': ";
    if (task == TaskKind::single_label) {
        const auto* c = std::get_if<std::size_t>(&label);
        if (!c) throw SchemaError(who + "single-label task needs an integer label");
        if (*c >= num_classes)
            throw SchemaError(who + "label " + std::to_string(*c) + " out of range for " +
                              std::to_string(num_classes) + " classes");
    } else {
        const auto* v = std::get_if<std::vector<std::uint8_t>>(&label);
        if (!v) throw SchemaError(who + "multi-label task needs a 0/1 vector label");
        if (v->size() != num_classes)
            throw SchemaError(who + "label vector has length " + std::to_string(v->size()) + ", expected " +
                              std::to_string(num_classes));
    }
}

void AugmentConfig::validate() const {
    if (!(noise_std >= 0.0)) throw SchemaError("augment: noise_std must be >= 0");
    if (!(scale_min > 0.0) || !(scale_min <= scale_max))
        throw SchemaError("augment: need 0 < scale_min <= scale_max");
    if (!(drop_fraction >= 0.0 && drop_fraction < 1.0)) throw SchemaError("augment: drop_fraction must be in [0,1)");
}

PdbParseResult parse_pdb_ca(std::string_view text, std::optional<char> chain) {
    PdbParseResult out;
    ProteinRecord& rec = out.record;
    std::set<int> seen_res;
    std::optional<char> active = chain;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.rfind("ENDMDL", 0) == 0 && !rec.coords.empty()) break;
        if (line.substr(0, 4) != "ATOM") continue;
        if (line.size() < 54) throw ParseError("ATOM record shorter than 54 columns", line_no);
        if (trim(field(line, 13, 16)) != "CA") continue;
        const char chain_id = line[21];
        if (!active) active = chain_id;
        if (chain_id != *active) continue;
        const int res_seq = parse_int_field(field(line, 23, 26), line_no, "residue number");
        const Vec3 p{parse_coord(field(line, 31, 38), line_no, "x"), parse_coord(field(line, 39, 46), line_no, "y"),
                     parse_coord(field(line, 47, 54), line_no, "z")};
        if (!seen_res.insert(res_seq).second) {
            // altlocs, insertion codes and true duplicates: first seen wins
            ++out.duplicate_residues;
            continue;
        }
        if (!rec.seq_index.empty() && res_seq <= rec.seq_index.back())
            throw ParseError("residue numbers must increase along the chain", line_no);
        rec.coords.push_back(p);
        rec.aa_types.push_back(residue_index(field(line, 18, 20)));
        rec.seq_index.push_back(res_seq);
        rec.present_mask.push_back(true);
    }
    if (rec.coords.empty()) throw ParseError("no CA atoms");
    return out;
}

PdbParseResult read_pdb_ca(const std::filesystem::path& path, std::optional<char> chain) {
    auto r = parse_pdb_ca(read_text(path), chain);
    r.record.id = path.stem().string();
    return r;
}

std::string serialize_record(const ProteinRecord& rec) {
    json j;
    j["id"] = rec.id;
    json coords = json::array();
    for (std::size_t i = 0; i < rec.size(); ++i) {
        if (i < rec.present_mask.size() && !rec.present_mask[i])
            coords.push_back(nullptr);
        else
            coords.push_back({rec.coords[i][0], rec.coords[i][1], rec.coords[i][2]});
    }
    j["coords"] = std::move(coords);
    j["aa_types"] = rec.aa_types;
    j["seq_index"] = rec.seq_index;
    j["present_mask"] = std::vector<bool>(rec.present_mask.begin(), rec.present_mask.end());
    j["label"] = label_to_json(rec.label);
    j["motif_ids"] = rec.motif_ids;
    j["motif_template"] = rec.motif_template ? json(*rec.motif_template) : json(nullptr);
    return j.dump(1);
}

ProteinRecord deserialize_record(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("record JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("record JSON must be an object");
    ProteinRecord rec;
    rec.id = get_field<std::string>(j, "id");
    const json& coords = j.contains("coords") ? j.at("coords") : throw SchemaError("missing field 'coords'");
    if (!coords.is_array()) throw SchemaError("coords must be an array");
    for (const auto& row : coords) {
        if (row.is_null()) {
            rec.coords.push_back({0, 0, 0});
            continue;
        }
        if (!row.is_array() || row.size() != 3) throw SchemaError("coords rows must be [x,y,z] or null");
        Vec3 p{};
        for (int a = 0; a < 3; ++a) {
            if (!row[a].is_number()) throw SchemaError("coords entries must be numbers");
            p[a] = row[a].get<double>();
        }
        rec.coords.push_back(p);
    }
    rec.aa_types = get_field<std::vector<int>>(j, "aa_types");
    rec.seq_index = get_field<std::vector<int>>(j, "seq_index");
    if (j.contains("present_mask")) {
        const auto mask = get_field<std::vector<bool>>(j, "present_mask");
        rec.present_mask.assign(mask.begin(), mask.end());
    } else {
        rec.present_mask.assign(rec.coords.size(), true);
    }
    for (std::size_t i = 0; i < std::min(coords.size(), rec.present_mask.size()); ++i)
        if (coords[i].is_null() && rec.present_mask[i])
            throw SchemaError("record '" + rec.id + "': null coords on a present node");
    rec.label = label_from_json(j.value("label", json(nullptr)));
    if (j.contains("motif_ids")) rec.motif_ids = get_field<std::vector<std::size_t>>(j, "motif_ids");
    if (j.contains("motif_template") && !j.at("motif_template").is_null())
        rec.motif_template = get_field<int>(j, "motif_template");
    rec.validate();
    return rec;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Dataset>& splits) {
    if (splits.empty()) throw SchemaError("write_dataset: nothing to write");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    json m;
    m["format"] = manifest_format;
    m["version"] = manifest_version;
    m["task"] = std::string(to_string(splits.front().task));
    m["num_classes"] = splits.front().num_classes;
    json entries = json::array();
    std::set<std::string> ids;
    for (const auto& ds : splits) {
        if (ds.task != splits.front().task || ds.num_classes != splits.front().num_classes)
            throw SchemaError("write_dataset: splits disagree on task or num_classes");
        for (const auto& rec : ds.records) {
            rec.validate(ds.task, ds.num_classes);
            if (!ids.insert(rec.id).second) throw SchemaError("write_dataset: duplicate id '" + rec.id + "'");
            const std::string file = "records/" + rec.id + ".json";
            std::filesystem::create_directories(dir / "records", ec);
            write_text(dir / file, serialize_record(rec));
            entries.push_back({{"file", file}, {"id", rec.id}, {"split", std::string(to_string(ds.split))}});
        }
    }
    m["records"] = std::move(entries);
    write_text(dir / manifest_name, m.dump(1));
}

Dataset load_dataset(const std::filesystem::path& dir, Split split) {
    const auto mpath = dir / manifest_name;
    if (!std::filesystem::exists(mpath)) throw IoError("missing manifest " + mpath.string());
    json m;
    try {
        m = json::parse(read_text(mpath));
    } catch (const json::parse_error& e) {
        throw ParseError(mpath.string() + ": " + e.what());
    }
    if (!m.is_object()) throw SchemaError("manifest must be an object");
    if (m.contains("format") && m.at("format") != manifest_format)
        throw SchemaError("manifest format is not '" + std::string(manifest_format) + "'");
    if (m.contains("version") && m.at("version") != manifest_version)
        throw SchemaError("unsupported manifest version");
    Dataset ds;
    ds.task = parse_task(get_field<std::string>(m, "task"));
    ds.num_classes = get_field<std::size_t>(m, "num_classes");
    if (ds.num_classes == 0) throw SchemaError("num_classes must be positive");
    ds.split = split;
    if (!m.contains("records") || !m.at("records").is_array()) throw SchemaError("manifest needs a records array");

    std::map<std::string, Split> id_split;
    for (const auto& e : m.at("records")) {
        const auto id = get_field<std::string>(e, "id");
        const auto s = parse_split(get_field<std::string>(e, "split"));
        auto [it, fresh] = id_split.emplace(id, s);
        if (!fresh)
            throw SchemaError("id '" + id + "' listed twice (" + std::string(to_string(it->second)) + ", " +
                              std::string(to_string(s)) + ")");
    }
    for (const auto& e : m.at("records")) {
        if (parse_split(get_field<std::string>(e, "split")) != split) continue;
        const auto file = dir / get_field<std::string>(e, "file");
        if (!std::filesystem::exists(file)) throw IoError("missing record file " + file.string());
        ProteinRecord rec = deserialize_record(read_text(file));
        const auto id = get_field<std::string>(e, "id");
        if (rec.id != id) throw SchemaError("record file " + file.string() + " has id '" + rec.id + "', manifest says '" + id + "'");
        rec.validate(ds.task, ds.num_classes);
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

ProteinRecord augment(const ProteinRecord& rec, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    ProteinRecord out = rec;
    Vec3 s{};
    for (auto& f : s) f = cfg.scale_min == cfg.scale_max ? cfg.scale_min : rng.uniform(cfg.scale_min, cfg.scale_max);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out.present_mask[i]) continue;
        for (int a = 0; a < 3; ++a) {
            const double eps = cfg.noise_std > 0.0 ? cfg.noise_std * rng.normal() : 0.0;
            out.coords[i][a] = s[a] * rec.coords[i][a] + eps;
        }
    }
    if (cfg.drop_fraction > 0.0) out = drop_nodes(out, cfg.drop_fraction, rng);
    return out;
}

std::size_t floor_fraction(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

namespace {

ProteinRecord keep_rows(const ProteinRecord& rec, const std::vector<bool>& keep) {
    ProteinRecord out;
    out.id = rec.id;
    out.label = rec.label;
    out.motif_template = rec.motif_template;
    std::vector<std::size_t> remap(rec.size(), static_cast<std::size_t>(-1));
    for (std::size_t i = 0; i < rec.size(); ++i) {
        if (!keep[i]) continue;
        remap[i] = out.coords.size();
        out.coords.push_back(rec.coords[i]);
        out.aa_types.push_back(rec.aa_types[i]);
        out.seq_index.push_back(rec.seq_index[i]);
        out.present_mask.push_back(rec.present_mask[i]);
    }
    for (auto m : rec.motif_ids)
        if (m < remap.size() && remap[m] != static_cast<std::size_t>(-1)) out.motif_ids.push_back(remap[m]);
    return out;
}

} // namespace

ProteinRecord drop_nodes(const ProteinRecord& rec, double u, Rng& rng) {
    if (!(u >= 0.0 && u < 1.0)) throw SchemaError("drop_nodes: u must be in [0,1)");
    const std::size_t n = rec.size();
    const std::size_t remove = floor_fraction(u, n);
    if (remove >= n) throw DegenerateError("drop_nodes: u=" + std::to_string(u) + " would remove all " + std::to_string(n) + " nodes");
    if (remove == 0) return rec;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    std::vector<bool> keep(n, true);
    for (std::size_t i = 0; i < remove; ++i) keep[order[i]] = false;
    return keep_rows(rec, keep);
}

ProteinRecord compact_present(const ProteinRecord& rec) {
    if (rec.all_present()) return rec;
    const std::vector<bool> keep(rec.present_mask.begin(), rec.present_mask.end());
    if (std::none_of(keep.begin(), keep.end(), [](bool b) { return b; }))
        throw DegenerateError("record '" + rec.id + "' has no present nodes");
    return keep_rows(rec, keep);
}

} // namespace nclust
