#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace otoc::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

const std::vector<std::string>& subcommands();
const std::vector<std::string>& preset_names();

// Every field with its default; the schema of a config file.
json default_config();
// Default config with the preset's fields filled in.
json preset(const std::string& name);

// preset (or defaults) <- config file <- overrides. Unknown fields and type
// mismatches raise ValidationError. A manifest is accepted as a config.
json resolve_config(const std::string& subcommand, const std::optional<std::string>& preset_name,
                    const std::optional<json>& file_config, const json& overrides);

struct RunResult {
    std::vector<std::string> outputs;  // file names relative to output_dir
    json summary;
};

// Executes the subcommand and writes its artifacts plus manifest.json.
RunResult run(const json& resolved, std::ostream& log);

// Entry point used by the `otoc` binary.
int main_entry(int argc, char** argv);

}  // namespace otoc::cli
