#include "sci/config.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "sci/errors.hpp"

namespace sci {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected a number, got '" +
                          v + "'");
    return out;
}

long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key +
                          "': expected an integer, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" +
                      v + "'");
}

struct Binding {
    std::string key;  // "section.name"
    std::function<void(CliConfig&, const std::string&)> set;
    std::function<std::string(const CliConfig&)> get;
};

// Central key table: parsing, overrides, and snapshots all go through it.
std::vector<Binding> bindings() {
    std::vector<Binding> b;
    auto add = [&b](std::string key, auto set, auto get) {
        b.push_back({std::move(key), set, get});
    };

    auto int_field = [&](std::string key, auto member) {
        add(key,
            [key, member](CliConfig& c, const std::string& v) {
                c.*member = static_cast<int>(parse_int(key, v));
            },
            [member](const CliConfig& c) { return std::to_string(c.*member); });
    };
    auto synth_int = [&](std::string key, int SynthesisConfig::* member) {
        add(key,
            [key, member](CliConfig& c, const std::string& v) {
                c.synth.*member = static_cast<int>(parse_int(key, v));
            },
            [member](const CliConfig& c) {
                return std::to_string(c.synth.*member);
            });
    };
    auto synth_double = [&](std::string key, double SynthesisConfig::* member) {
        add(key,
            [key, member](CliConfig& c, const std::string& v) {
                c.synth.*member = parse_double(key, v);
            },
            [member](const CliConfig& c) {
                return format_double(c.synth.*member);
            });
    };

    // [synth]
    synth_int("synth.target_class", &SynthesisConfig::target_class);
    synth_int("synth.iterations_pre", &SynthesisConfig::iterations_pre);
    synth_int("synth.iterations_post", &SynthesisConfig::iterations_post);
    synth_double("synth.base_step", &SynthesisConfig::base_step);
    add("synth.seed",
        [](CliConfig& c, const std::string& v) {
            c.synth.seed = static_cast<std::uint64_t>(parse_int("synth.seed", v));
        },
        [](const CliConfig& c) { return std::to_string(c.synth.seed); });
    add("synth.phase_mode",
        [](CliConfig& c, const std::string& v) {
            if (v == "ci")
                c.synth.phase_mode = PhaseMode::ci_baseline;
            else if (v == "pre")
                c.synth.phase_mode = PhaseMode::pre_only;
            else if (v == "sci")
                c.synth.phase_mode = PhaseMode::full_sci;
            else
                throw ConfigError(
                    "config key 'synth.phase_mode': expected ci|pre|sci, got '" +
                    v + "'");
        },
        [](const CliConfig& c) { return to_string(c.synth.phase_mode); });
    add("synth.post_init",
        [](CliConfig& c, const std::string& v) {
            if (v == "fresh_canvas")
                c.synth.post_init = PostInit::fresh_canvas;
            else if (v == "continue_pre")
                c.synth.post_init = PostInit::continue_pre;
            else
                throw ConfigError(
                    "config key 'synth.post_init': expected "
                    "fresh_canvas|continue_pre, got '" +
                    v + "'");
        },
        [](const CliConfig& c) { return to_string(c.synth.post_init); });
    add("synth.auto_scale",
        [](CliConfig& c, const std::string& v) {
            c.synth.auto_scale = parse_bool("synth.auto_scale", v);
        },
        [](const CliConfig& c) {
            return c.synth.auto_scale ? "true" : "false";
        });

    // [init]
    synth_double("init.noise_amplitude", &SynthesisConfig::noise_amplitude);
    add("init.mean_mode",
        [](CliConfig& c, const std::string& v) {
            if (v == "dataset")
                c.synth.mean_mode = MeanMode::dataset;
            else if (v == "constant")
                c.synth.mean_mode = MeanMode::constant;
            else
                throw ConfigError(
                    "config key 'init.mean_mode': expected dataset|constant, "
                    "got '" +
                    v + "'");
        },
        [](const CliConfig& c) {
            return c.synth.mean_mode == MeanMode::dataset ? "dataset"
                                                          : "constant";
        });
    synth_double("init.constant_fill", &SynthesisConfig::constant_fill);

    // [tv]
    add("tv.lambda1",
        [](CliConfig& c, const std::string& v) {
            if (v == "auto")
                c.synth.tv.lambda1.reset();
            else
                c.synth.tv.lambda1 = parse_double("tv.lambda1", v);
        },
        [](const CliConfig& c) {
            return c.synth.tv.lambda1 ? format_double(*c.synth.tv.lambda1)
                                      : "auto";
        });
    add("tv.period_k",
        [](CliConfig& c, const std::string& v) {
            c.synth.tv.period_k = static_cast<int>(parse_int("tv.period_k", v));
        },
        [](const CliConfig& c) { return std::to_string(c.synth.tv.period_k); });

    // [saliency]
    add("saliency.c2",
        [](CliConfig& c, const std::string& v) {
            c.synth.ramp.c2 = parse_double("saliency.c2", v);
        },
        [](const CliConfig& c) { return format_double(c.synth.ramp.c2); });
    add("saliency.ramp_t",
        [](CliConfig& c, const std::string& v) {
            c.synth.ramp.t = static_cast<int>(parse_int("saliency.ramp_t", v));
        },
        [](const CliConfig& c) { return std::to_string(c.synth.ramp.t); });
    add("saliency.accumulation_mode",
        [](CliConfig& c, const std::string& v) {
            if (v == "literal")
                c.synth.accumulation_mode = AccumulationMode::literal;
            else if (v == "running_average")
                c.synth.accumulation_mode = AccumulationMode::running_average;
            else
                throw ConfigError(
                    "config key 'saliency.accumulation_mode': expected "
                    "literal|running_average, got '" +
                    v + "'");
        },
        [](const CliConfig& c) {
            return c.synth.accumulation_mode == AccumulationMode::literal
                       ? "literal"
                       : "running_average";
        });
    add("saliency.lr_sign_mode",
        [](CliConfig& c, const std::string& v) {
            if (v == "signed")
                c.synth.lr_sign_mode = LrSignMode::signed_map;
            else if (v == "magnitude")
                c.synth.lr_sign_mode = LrSignMode::magnitude;
            else
                throw ConfigError(
                    "config key 'saliency.lr_sign_mode': expected "
                    "signed|magnitude, got '" +
                    v + "'");
        },
        [](const CliConfig& c) {
            return c.synth.lr_sign_mode == LrSignMode::signed_map ? "signed"
                                                                  : "magnitude";
        });

    // [mask]
    add("mask.r0",
        [](CliConfig& c, const std::string& v) {
            c.synth.radius.r0 = parse_double("mask.r0", v);
        },
        [](const CliConfig& c) { return format_double(c.synth.radius.r0); });
    add("mask.r_max",
        [](CliConfig& c, const std::string& v) {
            c.synth.radius.r_max = parse_double("mask.r_max", v);
        },
        [](const CliConfig& c) { return format_double(c.synth.radius.r_max); });
    add("mask.ramp_iters",
        [](CliConfig& c, const std::string& v) {
            c.synth.radius.ramp_iters =
                static_cast<int>(parse_int("mask.ramp_iters", v));
        },
        [](const CliConfig& c) {
            return std::to_string(c.synth.radius.ramp_iters);
        });
    add("mask.selection_radius",
        [](CliConfig& c, const std::string& v) {
            if (v == "auto")
                c.synth.selection_radius = -1.0;
            else
                c.synth.selection_radius =
                    parse_double("mask.selection_radius", v);
        },
        [](const CliConfig& c) {
            return c.synth.selection_radius < 0.0
                       ? "auto"
                       : format_double(c.synth.selection_radius);
        });

    // [transforms]
    add("transforms.enabled",
        [](CliConfig& c, const std::string& v) {
            c.synth.transforms.enabled = parse_bool("transforms.enabled", v);
        },
        [](const CliConfig& c) {
            return c.synth.transforms.enabled ? "true" : "false";
        });
    add("transforms.rotation_deg",
        [](CliConfig& c, const std::string& v) {
            c.synth.transforms.rotation_deg =
                parse_double("transforms.rotation_deg", v);
        },
        [](const CliConfig& c) {
            return format_double(c.synth.transforms.rotation_deg);
        });
    add("transforms.scale_min",
        [](CliConfig& c, const std::string& v) {
            c.synth.transforms.scale_min =
                parse_double("transforms.scale_min", v);
        },
        [](const CliConfig& c) {
            return format_double(c.synth.transforms.scale_min);
        });
    add("transforms.scale_max",
        [](CliConfig& c, const std::string& v) {
            c.synth.transforms.scale_max =
                parse_double("transforms.scale_max", v);
        },
        [](const CliConfig& c) {
            return format_double(c.synth.transforms.scale_max);
        });
    add("transforms.crop_pad",
        [](CliConfig& c, const std::string& v) {
            if (v == "auto")
                c.synth.transforms.crop_pad = -1;
            else
                c.synth.transforms.crop_pad =
                    static_cast<int>(parse_int("transforms.crop_pad", v));
        },
        [](const CliConfig& c) {
            return c.synth.transforms.crop_pad < 0
                       ? "auto"
                       : std::to_string(c.synth.transforms.crop_pad);
        });
    add("transforms.jitter",
        [](CliConfig& c, const std::string& v) {
            c.synth.transforms.jitter = parse_double("transforms.jitter", v);
        },
        [](const CliConfig& c) {
            return format_double(c.synth.transforms.jitter);
        });
    add("transforms.apply_probability",
        [](CliConfig& c, const std::string& v) {
            c.synth.transforms.apply_probability =
                parse_double("transforms.apply_probability", v);
        },
        [](const CliConfig& c) {
            return format_double(c.synth.transforms.apply_probability);
        });
    add("transforms.post_enabled",
        [](CliConfig& c, const std::string& v) {
            c.synth.transforms_post = parse_bool("transforms.post_enabled", v);
        },
        [](const CliConfig& c) {
            return c.synth.transforms_post ? "true" : "false";
        });

    // [fusion]
    synth_int("fusion.blocks", &SynthesisConfig::fusion_blocks);
    add("fusion.block_len_a",
        [](CliConfig& c, const std::string& v) {
            c.synth.fusion_block_len_a =
                v == "auto" ? -1
                            : static_cast<int>(parse_int("fusion.block_len_a", v));
        },
        [](const CliConfig& c) {
            return c.synth.fusion_block_len_a < 0
                       ? "auto"
                       : std::to_string(c.synth.fusion_block_len_a);
        });
    add("fusion.block_len_b",
        [](CliConfig& c, const std::string& v) {
            c.synth.fusion_block_len_b =
                v == "auto" ? -1
                            : static_cast<int>(parse_int("fusion.block_len_b", v));
        },
        [](const CliConfig& c) {
            return c.synth.fusion_block_len_b < 0
                       ? "auto"
                       : std::to_string(c.synth.fusion_block_len_b);
        });

    // [metrics]
    add("metrics.percentile",
        [](CliConfig& c, const std::string& v) {
            c.metrics_percentile = parse_double("metrics.percentile", v);
        },
        [](const CliConfig& c) { return format_double(c.metrics_percentile); });
    int_field("metrics.connectivity", &CliConfig::metrics_connectivity);

    // [run]
    add("run.out_root",
        [](CliConfig& c, const std::string& v) { c.out_root = v; },
        [](const CliConfig& c) { return c.out_root; });
    int_field("run.workers", &CliConfig::workers);

    return b;
}

}  // namespace

std::string to_string(PhaseMode m) {
    switch (m) {
        case PhaseMode::ci_baseline:
            return "ci";
        case PhaseMode::pre_only:
            return "pre";
        case PhaseMode::full_sci:
            return "sci";
    }
    return "sci";
}

std::string to_string(PostInit p) {
    return p == PostInit::fresh_canvas ? "fresh_canvas" : "continue_pre";
}

void apply_config_text(CliConfig& cfg, const std::string& text) {
    const std::vector<Binding> table = bindings();
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": malformed section header '" + t + "'");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key = value, got '" + t + "'");
        const std::string key =
            (section.empty() ? "" : section + ".") + trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        bool found = false;
        for (const Binding& b : table) {
            if (b.key == key) {
                b.set(cfg, value);
                found = true;
                break;
            }
        }
        if (!found)
            throw ConfigError("unknown config key '" + key + "' (line " +
                              std::to_string(line_no) + ")");
    }
}

void apply_config_file(CliConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str());
}

void apply_override(CliConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + assignment +
                          "': expected section.key=value");
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    for (const Binding& b : bindings()) {
        if (b.key == key) {
            b.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::string serialize_config(const CliConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const Binding& b : bindings()) {
        const auto dot = b.key.find('.');
        const std::string sec = b.key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out << "\n";
            out << "[" << sec << "]\n";
            section = sec;
        }
        out << b.key.substr(dot + 1) << " = " << b.get(cfg) << "\n";
    }
    return out.str();
}

}  // namespace sci
