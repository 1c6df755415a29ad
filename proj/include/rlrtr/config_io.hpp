#pragma once
// Textual run configuration. A small INI dialect with two sections, [solver]
// and [synth], whose keys mirror the fields of SolverConfig and SynthConfig;
// range-pair fields split into *_min / *_max keys. Unknown sections, unknown
// keys, duplicate keys, and malformed values are rejected with the offending
// line named. Parsing also validates the resulting structs, so a loaded
// configuration is always usable as-is.

#include <rlrtr/errors.hpp>
#include <rlrtr/solver.hpp>
#include <rlrtr/synth.hpp>

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>

namespace rlrtr {

struct RunConfig {
    SolverConfig solver;
    SynthConfig synth;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

struct ConfigCursor {
    std::string origin;
    int line = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError(what + " (line " + std::to_string(line) + " of " +
                          origin + ")");
    }

    double number(const std::string& key, const std::string& value) const {
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (value.empty() || end != value.c_str() + value.size())
            fail("bad numeric value for \"" + key + "\": \"" + value + "\"");
        return v;
    }

    int integer(const std::string& key, const std::string& value) const {
        char* end = nullptr;
        const long v = std::strtol(value.c_str(), &end, 10);
        if (value.empty() || end != value.c_str() + value.size() ||
            v < -(1l << 31) || v > (1l << 31) - 1)
            fail("bad integer value for \"" + key + "\": \"" + value + "\"");
        return static_cast<int>(v);
    }

    std::uint64_t unsigned_integer(const std::string& key,
                                   const std::string& value) const {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
        if (value.empty() || value[0] == '-' ||
            end != value.c_str() + value.size())
            fail("bad unsigned value for \"" + key + "\": \"" + value + "\"");
        return v;
    }

    bool boolean(const std::string& key, const std::string& value) const {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        fail("bad boolean value for \"" + key + "\": \"" + value +
             "\" (expected true or false)");
    }
};

inline bool apply_solver_key(SolverConfig& cfg, const std::string& key,
                             const std::string& value,
                             const ConfigCursor& at) {
    if (key == "mu") {
        if (value == "auto") {
            cfg.mu = -1.0;
        } else {
            cfg.mu = at.number(key, value);
            if (cfg.mu < 0.0)
                at.fail("\"mu\" must be \"auto\" or a nonnegative number, got "
                        "\"" + value + "\"");
        }
    } else if (key == "omega") {
        cfg.omega = at.number(key, value);
    } else if (key == "gamma") {
        cfg.gamma = at.number(key, value);
    } else if (key == "lambda_global") {
        cfg.lambda_global = at.number(key, value);
    } else if (key == "d_max") {
        cfg.d_max = at.integer(key, value);
    } else if (key == "patch") {
        cfg.patch = at.integer(key, value);
    } else if (key == "group") {
        cfg.group = at.integer(key, value);
    } else if (key == "stride") {
        cfg.stride = at.integer(key, value);
    } else if (key == "search_radius") {
        cfg.search_radius = at.integer(key, value);
    } else if (key == "outer_max") {
        cfg.outer_max = at.integer(key, value);
    } else if (key == "outer_tol") {
        cfg.outer_tol = at.number(key, value);
    } else if (key == "admm_rho") {
        cfg.admm_rho = at.number(key, value);
    } else if (key == "admm_max") {
        cfg.admm_max = at.integer(key, value);
    } else if (key == "cg_tol") {
        cfg.cg_tol = at.number(key, value);
    } else if (key == "cg_max") {
        cfg.cg_max = at.integer(key, value);
    } else if (key == "enable_subspace") {
        cfg.enable_subspace = at.boolean(key, value);
    } else if (key == "enable_affine") {
        cfg.enable_affine = at.boolean(key, value);
    } else if (key == "recluster_every") {
        cfg.recluster_every = at.integer(key, value);
    } else {
        return false;
    }
    return true;
}

inline bool apply_synth_key(SynthConfig& cfg, const std::string& key,
                            const std::string& value, const ConfigCursor& at) {
    if (key == "background_kind") {
        try {
            cfg.background_kind = background_kind_from_string(value);
        } catch (const ArgumentError& e) {
            at.fail(e.what());
        }
    } else if (key == "background_file") {
        cfg.background_file = value;
    } else if (key == "height") {
        cfg.height = at.integer(key, value);
    } else if (key == "width") {
        cfg.width = at.integer(key, value);
    } else if (key == "frames") {
        cfg.frames = at.integer(key, value);
    } else if (key == "streak_density") {
        cfg.streak_density = at.number(key, value);
    } else if (key == "streak_angle_min") {
        cfg.streak_angle_range.first = at.number(key, value);
    } else if (key == "streak_angle_max") {
        cfg.streak_angle_range.second = at.number(key, value);
    } else if (key == "streak_length_min") {
        cfg.streak_length_range.first = at.number(key, value);
    } else if (key == "streak_length_max") {
        cfg.streak_length_range.second = at.number(key, value);
    } else if (key == "streak_width") {
        cfg.streak_width = at.number(key, value);
    } else if (key == "streak_intensity_min") {
        cfg.streak_intensity_range.first = at.number(key, value);
    } else if (key == "streak_intensity_max") {
        cfg.streak_intensity_range.second = at.number(key, value);
    } else if (key == "splash_density") {
        cfg.splash_density = at.number(key, value);
    } else if (key == "jitter_max") {
        cfg.jitter_max = at.number(key, value);
    } else if (key == "noise_sigma") {
        cfg.noise_sigma = at.number(key, value);
    } else if (key == "seed") {
        cfg.seed = at.unsigned_integer(key, value);
    } else {
        return false;
    }
    return true;
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text,
                                  const std::string& origin = "<string>") {
    RunConfig rc;
    detail::ConfigCursor at{origin, 0};
    std::string section;
    std::set<std::string> seen;  // "section/key", for duplicate detection

    std::istringstream stream(text);
    std::string raw;
    while (std::getline(stream, raw)) {
        ++at.line;
        const std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                at.fail("unterminated section header \"" + line + "\"");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section != "solver" && section != "synth")
                at.fail("unknown section \"[" + section +
                        "]\" (expected [solver] or [synth])");
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            at.fail("expected key = value, got \"" + line + "\"");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) at.fail("empty key before \"=\"");
        if (section.empty())
            at.fail("key \"" + key +
                    "\" appears before any [solver] or [synth] section");
        if (!seen.insert(section + "/" + key).second)
            at.fail("duplicate key \"" + key + "\" in [" + section + "]");

        const bool known =
            section == "solver"
                ? detail::apply_solver_key(rc.solver, key, value, at)
                : detail::apply_synth_key(rc.synth, key, value, at);
        if (!known) at.fail("unknown key \"" + key + "\" in [" + section + "]");
    }

    // a parsed configuration must be directly usable
    try {
        detail::check_solver_config(rc.solver);
        detail::check_synth(rc.synth);
    } catch (const ArgumentError& e) {
        throw ConfigError(std::string(e.what()) + " (from " + origin + ")");
    }
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("cannot read config file: " + path);
    return parse_run_config(buf.str(), path);
}

// Serializes every field, so parse(format(rc)) reproduces rc exactly.
inline std::string format_run_config(const RunConfig& rc) {
    const auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    const auto onoff = [](bool v) { return v ? "true" : "false"; };
    std::ostringstream out;
    const SolverConfig& s = rc.solver;
    out << "[solver]\n"
        << "mu = " << (s.mu < 0.0 ? std::string("auto") : num(s.mu)) << "\n"
        << "omega = " << num(s.omega) << "\n"
        << "gamma = " << num(s.gamma) << "\n"
        << "lambda_global = " << num(s.lambda_global) << "\n"
        << "d_max = " << s.d_max << "\n"
        << "patch = " << s.patch << "\n"
        << "group = " << s.group << "\n"
        << "stride = " << s.stride << "\n"
        << "search_radius = " << s.search_radius << "\n"
        << "outer_max = " << s.outer_max << "\n"
        << "outer_tol = " << num(s.outer_tol) << "\n"
        << "admm_rho = " << num(s.admm_rho) << "\n"
        << "admm_max = " << s.admm_max << "\n"
        << "cg_tol = " << num(s.cg_tol) << "\n"
        << "cg_max = " << s.cg_max << "\n"
        << "enable_subspace = " << onoff(s.enable_subspace) << "\n"
        << "enable_affine = " << onoff(s.enable_affine) << "\n"
        << "recluster_every = " << s.recluster_every << "\n";
    const SynthConfig& g = rc.synth;
    out << "\n[synth]\n"
        << "height = " << g.height << "\n"
        << "width = " << g.width << "\n"
        << "frames = " << g.frames << "\n"
        << "background_kind = " << to_string(g.background_kind) << "\n";
    if (!g.background_file.empty())
        out << "background_file = " << g.background_file << "\n";
    out << "streak_density = " << num(g.streak_density) << "\n"
        << "streak_angle_min = " << num(g.streak_angle_range.first) << "\n"
        << "streak_angle_max = " << num(g.streak_angle_range.second) << "\n"
        << "streak_length_min = " << num(g.streak_length_range.first) << "\n"
        << "streak_length_max = " << num(g.streak_length_range.second) << "\n"
        << "streak_width = " << num(g.streak_width) << "\n"
        << "streak_intensity_min = " << num(g.streak_intensity_range.first)
        << "\n"
        << "streak_intensity_max = " << num(g.streak_intensity_range.second)
        << "\n"
        << "splash_density = " << num(g.splash_density) << "\n"
        << "jitter_max = " << num(g.jitter_max) << "\n"
        << "noise_sigma = " << num(g.noise_sigma) << "\n"
        << "seed = " << g.seed << "\n";
    return out.str();
}

}  // namespace rlrtr
