#include "sci/run_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sci/errors.hpp"
#include "sci/image_io.hpp"

namespace sci {

std::string trace_to_jsonl(const SynthesisTrace& trace) {
    std::ostringstream out;
    for (const TraceRecord& r : trace.records) {
        nlohmann::ordered_json j;
        j["i"] = r.iteration;
        j["phase"] = r.phase;
        j["class"] = r.active_class;
        j["logit"] = r.logit;
        j["tv"] = r.tv;
        j["radius"] = r.radius;
        j["lr_degenerate"] = r.lr_degenerate;
        j["transform_id"] = r.transform_id;
        out << j.dump() << "\n";
    }
    return out.str();
}

void save_run_dir(const std::filesystem::path& dir, const RunResult& result,
                  const CliConfig& cfg, const std::string& mode_name) {
    std::filesystem::create_directories(dir);
    write_image(result.image, dir / "image.pnm");
    if (!result.pre_image.empty())
        write_image(result.pre_image, dir / "pre.pnm");

    {
        std::ofstream trace(dir / "trace.jsonl", std::ios::binary);
        if (!trace) throw IoError("save_run_dir: cannot write trace.jsonl");
        trace << trace_to_jsonl(result.trace);
    }

    std::ofstream snap(dir / "config.ini", std::ios::binary);
    if (!snap) throw IoError("save_run_dir: cannot write config.ini");
    snap << serialize_config(cfg);
    // Resolved values, as comments so the snapshot stays loadable.
    const SynthesisTrace& t = result.trace;
    snap << "\n# resolved: mode = " << mode_name << "\n";
    snap << "# resolved: weights_fingerprint = " << result.weights_fingerprint
         << "\n";
    snap << "# resolved: lambda1 = " << t.lambda1
         << (t.lambda1_auto ? " (auto-calibrated)" : " (configured)") << "\n";
    snap << "# resolved: iter_scale_pre = " << t.resolved.iter_scale_pre
         << ", iter_scale_post = " << t.resolved.iter_scale_post
         << ", radius_scale = " << t.resolved.radius_scale << "\n";
    snap << "# resolved: ramp_t_pre = " << t.resolved.ramp_t_pre
         << ", ramp_t_post = " << t.resolved.ramp_t_post << "\n";
    snap << "# resolved: mask_r0 = " << t.resolved.mask_schedule.r0
         << ", mask_r_max = " << t.resolved.mask_schedule.r_max
         << ", mask_ramp_iters = " << t.resolved.mask_schedule.ramp_iters
         << ", selection_radius = " << t.resolved.selection_radius << "\n";
    if (t.region_center)
        snap << "# resolved: region_center = " << t.region_center->x << ","
             << t.region_center->y << "\n";
    snap << "# resolved: initial_logit = " << result.initial_logit
         << ", final_logit = " << result.final_logit
         << ", ascent_ok = " << (result.ascent_ok ? "true" : "false") << "\n";
}

LoadedRun load_run_dir(const std::filesystem::path& dir) {
    LoadedRun run;
    run.run_id = dir.filename().string();
    const auto underscore = run.run_id.find('_');
    run.mode = run.run_id.substr(0, underscore);
    if (run.mode != "ci" && run.mode != "pre" && run.mode != "sci" &&
        run.mode != "fuse")
        throw IoError("load_run_dir: cannot infer mode from directory name '" +
                      run.run_id + "'");
    CliConfig cfg;
    apply_config_file(cfg, dir / "config.ini");
    run.class_id = cfg.synth.target_class;
    run.image = read_image(dir / "image.pnm");
    return run;
}

std::vector<LoadedRun> load_run_dirs(const std::filesystem::path& root) {
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root))
        if (entry.is_directory() &&
            std::filesystem::exists(entry.path() / "config.ini"))
            dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    std::vector<LoadedRun> runs;
    runs.reserve(dirs.size());
    for (const auto& d : dirs) runs.push_back(load_run_dir(d));
    if (runs.empty())
        throw IoError("load_run_dirs: no run directories under " +
                      root.string());
    return runs;
}

}  // namespace sci
