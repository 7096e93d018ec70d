#pragma once

#include "nclust/model.hpp"
#include "nclust/train.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>

namespace nclust {

inline constexpr int exit_ok = 0;
inline constexpr int exit_runtime = 1;
inline constexpr int exit_usage = 2;

/// Flat settings shared by every subcommand. Keys in a config file and
/// command-line flags use the same names (flags with '-' for '_').
struct RunConfig {
    std::string data;
    std::string out;
    std::string split = "test";
    ModelConfig model;
    TrainConfig train;
    SweepGrid grid;
    std::size_t jobs = 1;
};

/// Every key with its current value; the effective config written next to outputs.
nlohmann::json to_json(const RunConfig& cfg);
/// Applies one flat key. Unknown keys and ill-typed values throw SchemaError.
void apply_setting(RunConfig& cfg, const std::string& key, const nlohmann::json& value);
void apply_settings(RunConfig& cfg, const nlohmann::json& object);

/// Entry point of the nclust tool. Returns 0 on success, 1 on a runtime
/// failure and 2 on a usage or configuration error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace nclust
