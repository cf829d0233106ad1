#pragma once

#include <filesystem>
#include <string>

#include "sci/synthesizer.hpp"

namespace sci {

/// Full tool configuration: every module knob plus output/worker settings.
/// The file format is INI-style: [section] headers, key = value lines,
/// full-line comments starting with '#' or ';'. Unknown keys are rejected.
struct CliConfig {
    SynthesisConfig synth;
    double metrics_percentile = 90.0;
    int metrics_connectivity = 8;
    std::string out_root;  // empty: $SCI_OUTPUT_ROOT, then "runs"
    int workers = 1;
};

/// Parses `text` into `cfg` (keys not present keep their current values).
/// Throws ConfigError naming the offending key/section/line.
void apply_config_text(CliConfig& cfg, const std::string& text);

/// Reads and applies a config file.
void apply_config_file(CliConfig& cfg, const std::filesystem::path& path);

/// Applies one "section.key=value" override (the CLI --set form).
void apply_override(CliConfig& cfg, const std::string& assignment);

/// Canonical INI serialization: fixed section/key order, shortest
/// round-trip number formatting. parse(serialize(c)) == c.
std::string serialize_config(const CliConfig& cfg);

std::string to_string(PhaseMode m);
std::string to_string(PostInit p);

}  // namespace sci
