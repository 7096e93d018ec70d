#pragma once

#include "nclust/rng.hpp"
#include "nclust/vec3.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace nclust {

/// 20 standard residues plus one shared index for anything else.
inline constexpr int num_residue_types = 21;
inline constexpr int unknown_residue = 20;

/// Index of a three-letter residue name ("ALA" → 0), unknown_residue otherwise.
int residue_index(std::string_view three_letter);
/// Index of a one-letter code ('A' → 0), unknown_residue otherwise.
int residue_index(char one_letter);
char residue_letter(int index);

enum class TaskKind { single_label, multi_label };
enum class Split { train, val, test };

std::string_view to_string(TaskKind t);
std::string_view to_string(Split s);
TaskKind parse_task(std::string_view s);
Split parse_split(std::string_view s);

/// Unlabeled, a class index (single-label), or a 0/1 vector (multi-label).
using Label = std::variant<std::monostate, std::size_t, std::vector<std::uint8_t>>;

struct ProteinRecord {
    std::string id;
    std::vector<Vec3> coords; ///< Å, CA positions; rows with present_mask=false are zero
    std::vector<int> aa_types;
    std::vector<int> seq_index; ///< strictly increasing chain positions
    Label label;
    std::vector<bool> present_mask;
    /// Synthetic-set metadata: node indices of the planted motif and its template id.
    std::vector<std::size_t> motif_ids;
    std::optional<int> motif_template;

    std::size_t size() const { return coords.size(); }
    bool all_present() const;

    /// Throws SchemaError on any structural violation; with a task given,
    /// also checks the label against it.
    void validate() const;
    void validate(TaskKind task, std::size_t num_classes) const;

    bool operator==(const ProteinRecord&) const = default;
};

struct Dataset {
    std::vector<ProteinRecord> records;
    TaskKind task = TaskKind::single_label;
    std::size_t num_classes = 0;
    Split split = Split::train;

    std::size_t size() const { return records.size(); }
};

struct AugmentConfig {
    double noise_std = 0.1;
    double scale_min = 0.9;
    double scale_max = 1.1;
    double drop_fraction = 0.0;

    void validate() const;
    bool operator==(const AugmentConfig&) const = default;
};

struct PdbParseResult {
    ProteinRecord record;
    std::size_t duplicate_residues = 0; ///< repeated residue numbers skipped (first wins)
};

/// CA-only reading of ATOM records. `chain`, when given, keeps only that
/// chain; otherwise the first chain seen is used.
PdbParseResult parse_pdb_ca(std::string_view text, std::optional<char> chain = std::nullopt);
PdbParseResult read_pdb_ca(const std::filesystem::path& path, std::optional<char> chain = std::nullopt);

std::string serialize_record(const ProteinRecord& rec);
ProteinRecord deserialize_record(std::string_view json_text);

/// Writes one JSON file per record plus manifest.json listing task,
/// num_classes and the split of every record.
void write_dataset(const std::filesystem::path& dir, const std::vector<Dataset>& splits);
/// Loads and validates the manifest in `dir`, returning the records of `split`.
Dataset load_dataset(const std::filesystem::path& dir, Split split);

/// coords' = S·coords + ε, S diagonal with per-axis factors in
/// [scale_min, scale_max], ε ~ N(0, noise_std²) per node and axis.
ProteinRecord augment(const ProteinRecord& rec, const AugmentConfig& cfg, Rng& rng);

/// Removes ⌊u·N⌋ uniformly chosen nodes, keeping survivor order and
/// remapping motif metadata.
ProteinRecord drop_nodes(const ProteinRecord& rec, double u, Rng& rng);

/// Keeps only rows with present_mask = true.
ProteinRecord compact_present(const ProteinRecord& rec);

/// ⌊fraction·n⌋ for fractions written as short decimals (0.4, 0.29): a
/// 1e-9 guard absorbs the representation error of the double.
std::size_t floor_fraction(double fraction, std::size_t n);

} // namespace nclust
