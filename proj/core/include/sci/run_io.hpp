#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sci/config.hpp"
#include "sci/synthesizer.hpp"

namespace sci {

/// Writes one run directory: image.pnm, pre.pnm (sci runs), trace.jsonl
/// (one JSON object per iteration), and config.ini -- the effective config
/// snapshot with resolved values appended as comments. A run directory is
/// sufficient to reproduce the run exactly.
void save_run_dir(const std::filesystem::path& dir, const RunResult& result,
                  const CliConfig& cfg, const std::string& mode_name);

/// Serialized trace, one compact JSON object per line.
std::string trace_to_jsonl(const SynthesisTrace& trace);

/// What `report` needs back from a run directory. The mode comes from the
/// directory name prefix (up to the first '_'), the class from the snapshot.
struct LoadedRun {
    std::string run_id;
    std::string mode;
    int class_id = 0;
    ImageTensor image;
};

LoadedRun load_run_dir(const std::filesystem::path& dir);

/// All run directories under root (any subdirectory with a config.ini),
/// sorted by name.
std::vector<LoadedRun> load_run_dirs(const std::filesystem::path& root);

}  // namespace sci
