// quopt: simulate, demodulate and reconstruct undetected-photon projection
// tomography data sets.
//
//   quopt phantom     --out phantom.qvol
//   quopt simulate    --phantom phantom.qvol --out stacks/
//   quopt extract     --in stacks/ --out vis/
//   quopt reconstruct --in vis/ --out recon/
//   quopt roundtrip   [--out report/]
//
// Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "quopt/quopt.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace quopt;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 2;
constexpr int exit_data = 3;
constexpr int exit_numeric = 4;

std::string indexed(const char* prefix, std::size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04zu%s", prefix, i, ext);
    return buf;
}

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& prefix, const std::string& ext) {
    require(fs::is_directory(dir), ErrorCode::IoError, "not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.starts_with(prefix) && entry.path().extension() == ext)
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::IoError, "cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
    io::write_file(path, io::Bytes(text.begin(), text.end()));
}

std::vector<double> angle_list(std::size_t count, double step_deg) {
    require(count > 0, ErrorCode::InvalidArgument, "angle count must be positive");
    require(step_deg > 0, ErrorCode::InvalidArgument, "angle step must be positive");
    return default_angles(count, step_deg);
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + io::format_double(values[i]);
    return out;
}

std::vector<double> split_doubles(const std::string& text, const char* key) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto piece = io::trim(std::string_view(text).substr(start, comma - start));
        if (!piece.empty()) out.push_back(io::parse_double(piece, key));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

/// Scan-config flags shared by simulate and roundtrip; unset flags keep the
/// value from the config file.
struct ScanFlags {
    std::string config_path;
    std::optional<std::size_t> steps;
    std::optional<double> n0;
    std::optional<double> v_sys;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> noise;
    std::optional<double> read_sigma;
    std::optional<double> psf_fwhm;
    std::optional<std::string> exponent;
    std::optional<double> periods;
    std::optional<std::size_t> angle_count;
    std::optional<double> angle_step_deg;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value scan configuration file")->check(CLI::ExistingFile);
        cmd->add_option("--steps", steps, "phase steps per scan (M)");
        cmd->add_option("--periods", periods, "fringe periods per scan (sets fringe_period_um)");
        cmd->add_option("--n0", n0, "mean counts per pixel per frame");
        cmd->add_option("--v-sys", v_sys, "system visibility ceiling");
        cmd->add_option("--seed", seed, "noise seed");
        cmd->add_option("--noise", noise, "none | poisson | poisson+gaussian")
            ->check(CLI::IsMember({"none", "poisson", "poisson+gaussian"}));
        cmd->add_option("--read-sigma", read_sigma, "gaussian read noise sigma (counts)");
        cmd->add_option("--psf-fwhm", psf_fwhm, "gaussian blur FWHM in mm (0 = off)");
        cmd->add_option("--exponent", exponent, "amplitude | intensity")->check(CLI::IsMember({"amplitude", "intensity"}));
        cmd->add_option("--angles", angle_count, "number of rotation angles (default 180)");
        cmd->add_option("--angle-step", angle_step_deg, "rotation step in degrees (default 1)");
    }

    [[nodiscard]] ScanConfig resolve(std::vector<double>& angles) const {
        ScanConfig cfg;
        std::size_t count = 180;
        double step = 1.0;
        if (!config_path.empty()) {
            io::KeyValues kv = io::read_key_values(config_path);
            io::take_scan_config(kv, cfg);
            if (auto it = kv.find("angles"); it != kv.end()) {
                count = io::parse_uint(it->second, "angles");
                kv.erase(it);
            }
            if (auto it = kv.find("angle_step_deg"); it != kv.end()) {
                step = io::parse_double(it->second, "angle_step_deg");
                kv.erase(it);
            }
            io::reject_unknown(kv, config_path);
        }
        if (steps) cfg.n_steps = *steps;
        if (n0) cfg.n0 = *n0;
        if (v_sys) cfg.v_sys = *v_sys;
        if (seed) cfg.seed = *seed;
        if (noise) cfg.noise = io::parse_noise(*noise);
        if (read_sigma) cfg.read_sigma = *read_sigma;
        if (psf_fwhm) cfg.psf_fwhm_mm = *psf_fwhm;
        if (exponent) cfg.transmission_exponent = io::parse_exponent(*exponent);
        if (periods) {
            require(*periods > 0, ErrorCode::InvalidArgument, "--periods must be positive");
            cfg.fringe_period_um = cfg.scan_length_um() / *periods;
        }
        if (angle_count) count = *angle_count;
        if (angle_step_deg) step = *angle_step_deg;
        validate(cfg);
        angles = angle_list(count, step);
        return cfg;
    }
};

json config_json(const ScanConfig& cfg) {
    json j = json::object();
    for (const auto& [k, v] : io::scan_config_entries(cfg)) j[k] = v;
    return j;
}

ScanConfig config_from_json(const json& j) {
    io::KeyValues kv;
    for (const auto& [k, v] : j.items()) kv[k] = v.get<std::string>();
    ScanConfig cfg;
    io::take_scan_config(kv, cfg);
    io::reject_unknown(kv, "manifest config");
    validate(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------

struct PhantomCmd {
    std::string out;
    std::string kind = "figurine";
    std::size_t grid = 128;
    double pitch = 0.05;
    double height = 5.0;
    double wire_radius = 0.15;
    double radius = 1.0;
    double mu0 = 2.0;

    int run(int jobs) const {
        const GridSpec g{grid, grid, grid, pitch};
        Phantom ph;
        if (kind == "figurine") {
            ph = wire_figurine(height, wire_radius, g, mu0, jobs);
        } else {
            AnalyticShape s;
            if (kind == "sphere") s = AnalyticShape::sphere({}, radius, mu0);
            else if (kind == "disk") s = AnalyticShape::disk({}, radius, 0.25 * height, mu0);
            else if (kind == "helix")
                s = AnalyticShape::helix({}, radius, 0.25 * height, 3.0, wire_radius, 0.0, mu0);
            else fail(ErrorCode::InvalidArgument, "unknown phantom kind " + kind);
            const std::vector shapes{s};
            ph = rasterize(shapes, grid, grid, grid, pitch, jobs);
        }
        io::write_phantom(out, ph);
        std::size_t nonzero = 0;
        for (double v : ph.mu.values()) nonzero += v > 0 ? 1 : 0;
        std::cout << "wrote " << out << " (" << grid << "^3, pitch " << pitch << " mm, " << nonzero
                  << " nonzero voxels)\n";
        return exit_ok;
    }
};

struct SimulateCmd {
    std::string phantom;
    std::string out;
    std::string manifest;
    ScanFlags flags;

    int run(int jobs) const {
        std::vector<double> angles;
        ScanConfig cfg;
        std::string phantom_path = phantom;
        if (!manifest.empty()) {
            const io::Bytes raw = io::read_file(manifest);
            json m;
            try {
                m = json::parse(raw.begin(), raw.end());
                cfg = config_from_json(m.at("config"));
                angles = m.at("angles_rad").get<std::vector<double>>();
                if (phantom_path.empty()) phantom_path = m.at("phantom").get<std::string>();
            } catch (const json::exception& e) {
                fail(ErrorCode::FormatError, "manifest " + manifest + ": " + e.what());
            }
        } else {
            cfg = flags.resolve(angles);
        }
        require(!phantom_path.empty(), ErrorCode::InvalidArgument, "--phantom is required");
        check_angles(angles);

        StageTimings timings;
        StageTimer timer(timings);
        const Phantom ph = io::read_phantom(phantom_path);
        const Detector det = matched_detector(ph);
        detail::check_coverage(ph, det);
        const Grid2<double> phase = default_phase_map(det.rows, det.cols, cfg);
        timer.mark("load");
        ensure_dir(out);
        std::vector<std::string> names(angles.size());
        parallel_for(angles.size(), jobs, [&](std::size_t a) {
            names[a] = indexed("stack", a, ".qstk");
            io::write_qstk(fs::path(out) / names[a], simulate_angle(ph, cfg, angles[a], det, phase));
        });
        timer.mark("simulate");

        json m;
        m["format_versions"] = {{"qstk", io::format_version}, {"qvol", io::format_version}};
        m["phantom"] = phantom_path;
        m["config"] = config_json(cfg);
        m["seed"] = cfg.seed;
        m["angles_rad"] = angles;
        m["detector"] = {{"rows", det.rows}, {"cols", det.cols}, {"pixel_pitch_mm", det.pixel_pitch}};
        m["outputs"] = names;
        m["timings_s"] = timings;
        write_text(fs::path(out) / "manifest.json", m.dump(2) + "\n");
        std::cout << "wrote " << angles.size() << " stacks to " << out << "\n";
        return exit_ok;
    }
};

struct ExtractCmd {
    std::string in;
    std::string out;
    std::string method = "fft";
    std::string bin = "auto";
    std::string window = "none";

    int run(int jobs) const {
        DemodOptions opts;
        if (method == "fft") opts.method = DemodMethod::fft;
        else if (method == "minmax") opts.method = DemodMethod::minmax;
        else fail(ErrorCode::InvalidArgument, "--method must be fft or minmax");
        if (window == "hann") opts.window = Window::hann;
        else require(window == "none", ErrorCode::InvalidArgument, "--window must be none or hann");
        if (bin != "auto") opts.bin = io::parse_uint(bin, "--bin");

        const auto files = sorted_files(in, "stack_", ".qstk");
        require(!files.empty(), ErrorCode::IoError, "no stack_*.qstk files in " + in);
        ensure_dir(out);
        std::vector<double> angles(files.size());
        std::vector<std::size_t> bins(files.size());
        std::vector<ScanConfig> configs(files.size());
        std::vector<double> pitches(files.size());
        std::vector<std::uint8_t> leakage(files.size());
        parallel_for(files.size(), jobs, [&](std::size_t i) {
            const FringeStack stack = io::read_qstk(files[i]);
            const VisibilityImage v = demodulate_stack(stack, opts);
            angles[i] = stack.angle;
            bins[i] = v.bin_used;
            configs[i] = stack.config;
            pitches[i] = stack.pixel_pitch;
            leakage[i] = v.leakage_warning;
            io::write_pfm(fs::path(out) / indexed("vis", i, ".pfm"), v.visibility);
            io::write_pfm(fs::path(out) / indexed("amp", i, ".pfm"), v.amplitude);
            io::write_pfm(fs::path(out) / indexed("phase", i, ".pfm"), v.phase);
            double hi = 0;
            for (double x : v.visibility.values()) hi = std::max(hi, x);
            io::write_pgm(fs::path(out) / indexed("vis", i, ".pgm"), io::quantize(v.visibility, 0.0, hi));
        });
        for (std::size_t i = 1; i < configs.size(); ++i)
            require(configs[i] == configs[0] && pitches[i] == pitches[0], ErrorCode::ConfigMismatch,
                    "stacks were acquired with different configurations");
        if (std::any_of(leakage.begin(), leakage.end(), [](auto f) { return f != 0; }))
            std::cerr << "warning: LeakageWarning: scan is not an integer number of fringe periods\n";

        auto entries = io::scan_config_entries(configs[0]);
        entries.emplace_back("pixel_pitch_mm", io::format_double(pitches[0]));
        entries.emplace_back("method", method);
        entries.emplace_back("bin", std::to_string(bins[0]));
        entries.emplace_back("count", std::to_string(files.size()));
        entries.emplace_back("angles_rad", join_doubles(angles));
        write_text(fs::path(out) / "extract.txt", io::format_key_values(entries));
        std::cout << "extracted " << files.size() << " visibility images (" << method << ", bin " << bins[0]
                  << ") to " << out << "\n";
        return exit_ok;
    }
};

struct ReconstructCmd {
    std::string in;
    std::string out;
    std::string mode = "log";
    std::string filter = "ramp";
    std::string cor = "auto";
    std::optional<double> vref;
    std::string vref_map;
    std::optional<double> fov;

    int run(int jobs) const {
        io::KeyValues kv = io::read_key_values(fs::path(in) / "extract.txt");
        ScanConfig cfg;
        io::take_scan_config(kv, cfg);
        const double pitch = io::parse_double(kv.at("pixel_pitch_mm"), "pixel_pitch_mm");
        const auto angles = split_doubles(kv.at("angles_rad"), "angles_rad");
        const std::size_t count = io::parse_uint(kv.at("count"), "count");
        require(angles.size() == count, ErrorCode::FormatError, "extract.txt: angle count mismatch");

        std::vector<VisibilityImage> vis(count);
        for (std::size_t i = 0; i < count; ++i) {
            Grid2<double> v = io::read_pfm(fs::path(in) / indexed("vis", i, ".pfm"));
            vis[i] = VisibilityImage(v.rows(), v.cols(), angles[i]);
            vis[i].visibility = std::move(v);
        }

        ReconstructOptions opts;
        if (mode == "log") opts.mode = OpacityMode::log;
        else if (mode == "linear") opts.mode = OpacityMode::linear;
        else fail(ErrorCode::InvalidArgument, "--mode must be log or linear");
        if (filter == "ramp") opts.filter = Filter::ramp;
        else if (filter == "shepp-logan") opts.filter = Filter::shepp_logan;
        else if (filter == "hann") opts.filter = Filter::hann;
        else fail(ErrorCode::InvalidArgument, "--filter must be ramp, shepp-logan or hann");
        if (cor != "auto") opts.cor_offset = io::parse_double(cor, "--cor");
        opts.v_ref = vref;
        opts.fov_radius_px = fov;

        Volume vol;
        if (!vref_map.empty()) {
            // Per-pixel empty-scene reference replaces the scalar one.
            PreprocessOptions pre;
            pre.mode = opts.mode;
            pre.v_ref = io::read_pfm(vref_map);
            pre.pathlen_fraction = pathlen_fraction(cfg.transmission_exponent);
            double offset = opts.cor_offset ? *opts.cor_offset : estimate_cor(preprocess(vis, pre, pitch));
            pre.cor_offset = offset;
            pre.fov_radius_px = opts.fov_radius_px.value_or(default_fov_radius(vis.front().cols));
            vol = reconstruct_volume(preprocess(vis, pre, pitch), opts.filter, std::nullopt, jobs);
        } else {
            vol = reconstruct_from_visibility(vis, cfg, pitch, opts, jobs);
        }

        ensure_dir(fs::path(out) / "slices");
        io::write_qvol(fs::path(out) / "volume.qvol", vol.data, vol.pitch);
        double lo = 0;
        double hi = 0;
        for (double v : vol.data.values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        for (std::size_t k = 0; k < vol.data.nz(); ++k) {
            const auto slice = io::volume_slice(vol.data, k);
            io::write_pgm(fs::path(out) / "slices" / indexed("slice", k, ".pgm"), io::quantize(slice, std::max(lo, 0.0), hi));
            io::write_pfm(fs::path(out) / "slices" / indexed("slice", k, ".pfm"), slice);
        }
        write_text(fs::path(out) / "reconstruct.txt",
                   io::format_key_values({{"mode", std::string(to_string(vol.mode))},
                                          {"filter", std::string(to_string(vol.filter))},
                                          {"cor_offset_px", io::format_double(vol.cor_offset)},
                                          {"pitch_mm", io::format_double(vol.pitch)},
                                          {"nx", std::to_string(vol.data.nx())},
                                          {"ny", std::to_string(vol.data.ny())},
                                          {"nz", std::to_string(vol.data.nz())}}));
        std::cout << "reconstructed " << vol.data.nx() << "x" << vol.data.ny() << "x" << vol.data.nz()
                  << " volume (cor offset " << vol.cor_offset << " px) to " << out << "\n";
        return exit_ok;
    }
};

struct RoundtripCmd {
    std::string phantom;
    std::string out;
    std::size_t grid = 128;
    double pitch = 0.05;
    double height = 5.0;
    double wire_radius = 0.15;
    std::string filter = "ramp";
    ScanFlags flags;

    int run(int jobs) const {
        RoundtripOptions opts;
        opts.scan = flags.resolve(opts.angles);
        if (filter == "shepp-logan") opts.recon.filter = Filter::shepp_logan;
        else if (filter == "hann") opts.recon.filter = Filter::hann;
        else require(filter == "ramp", ErrorCode::InvalidArgument, "--filter must be ramp, shepp-logan or hann");
        const Phantom ph = phantom.empty() ? wire_figurine(height, wire_radius, GridSpec{grid, grid, grid, pitch})
                                           : io::read_phantom(phantom);
        Volume vol;
        const RoundtripReport rep = run_roundtrip(ph, opts, &vol, jobs);
        json report = {
            {"nrmse", rep.nrmse},
            {"support_iou", rep.support_iou},
            {"otsu_threshold", rep.otsu_threshold},
            {"peak_position_error_px", rep.peak_position_error_px},
            {"cor_offset_px", rep.cor_offset},
            {"fringe_bin", rep.fringe_bin},
            {"thresholds", {{"nrmse_below", RoundtripReport::max_nrmse}, {"iou_above", RoundtripReport::min_iou}}},
            {"passed", rep.passed()},
            {"timings_s", rep.timings},
            {"config", config_json(opts.scan)},
            {"angles", opts.angles.size()},
        };
        if (!out.empty()) {
            ensure_dir(out);
            write_text(fs::path(out) / "report.json", report.dump(2) + "\n");
            io::write_qvol(fs::path(out) / "volume.qvol", vol.data, vol.pitch);
            io::write_phantom(fs::path(out) / "phantom.qvol", ph);
        }
        std::cout << report.dump(2) << "\n";
        return rep.passed() ? exit_ok : exit_numeric;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Undetected-photon optical projection tomography: simulate, demodulate, reconstruct"};
    app.require_subcommand(1);
    app.fallthrough();
    int jobs = default_jobs();
    app.add_option("--jobs,-j", jobs, "worker threads (default: $QUOPT_JOBS or 1)")->check(CLI::PositiveNumber);

    PhantomCmd phantom;
    auto* ph = app.add_subcommand("phantom", "write a voxel phantom (QVOL)");
    ph->add_option("--out,-o", phantom.out, "output .qvol")->required();
    ph->add_option("--kind", phantom.kind, "figurine | sphere | disk | helix")
        ->capture_default_str()
        ->check(CLI::IsMember({"figurine", "sphere", "disk", "helix"}));
    ph->add_option("--grid", phantom.grid, "voxels per side")->capture_default_str();
    ph->add_option("--pitch", phantom.pitch, "voxel pitch in mm")->capture_default_str();
    ph->add_option("--height", phantom.height, "figurine height in mm")->capture_default_str();
    ph->add_option("--wire-radius", phantom.wire_radius, "wire radius in mm")->capture_default_str();
    ph->add_option("--radius", phantom.radius, "sphere/disk/helix radius in mm")->capture_default_str();
    ph->add_option("--mu0", phantom.mu0, "attenuation in 1/mm")->capture_default_str();

    SimulateCmd simulate;
    auto* sim = app.add_subcommand("simulate", "synthesize fringe visibility scans (QSTK) for every angle");
    sim->add_option("--phantom,-p", simulate.phantom, "input .qvol phantom");
    sim->add_option("--out,-o", simulate.out, "output directory")->required();
    sim->add_option("--manifest", simulate.manifest, "re-run from a previous manifest.json")->check(CLI::ExistingFile);
    simulate.flags.attach(sim);

    ExtractCmd extract;
    auto* ext = app.add_subcommand("extract", "demodulate stacks into visibility images (PFM)");
    ext->add_option("--in,-i", extract.in, "directory of stack_*.qstk")->required();
    ext->add_option("--out,-o", extract.out, "output directory")->required();
    ext->add_option("--method", extract.method, "fft | minmax")->capture_default_str()->check(CLI::IsMember({"fft", "minmax"}));
    ext->add_option("--bin", extract.bin, "auto | N")->capture_default_str();
    ext->add_option("--window", extract.window, "none | hann")->capture_default_str()->check(CLI::IsMember({"none", "hann"}));

    ReconstructCmd recon;
    auto* rec = app.add_subcommand("reconstruct", "filtered back-projection of extracted visibility images");
    rec->add_option("--in,-i", recon.in, "extract output directory")->required();
    rec->add_option("--out,-o", recon.out, "output directory")->required();
    rec->add_option("--mode", recon.mode, "log | linear")->capture_default_str()->check(CLI::IsMember({"log", "linear"}));
    rec->add_option("--filter", recon.filter, "ramp | shepp-logan | hann")
        ->capture_default_str()
        ->check(CLI::IsMember({"ramp", "shepp-logan", "hann"}));
    rec->add_option("--cor", recon.cor, "auto | OFFSET (pixels)")->capture_default_str();
    rec->add_option("--vref", recon.vref, "visibility of the empty scene (default: v_sys)");
    rec->add_option("--vref-map", recon.vref_map, "per-pixel empty-scene visibility (PFM)")->check(CLI::ExistingFile);
    rec->add_option("--fov", recon.fov, "field-of-view radius in pixels");

    RoundtripCmd roundtrip;
    auto* rt = app.add_subcommand("roundtrip", "simulate and reconstruct a phantom, report fidelity metrics");
    rt->add_option("--phantom,-p", roundtrip.phantom, "input .qvol (default: wire figurine)");
    rt->add_option("--out,-o", roundtrip.out, "directory for report.json and volumes");
    rt->add_option("--grid", roundtrip.grid, "figurine grid size")->capture_default_str();
    rt->add_option("--pitch", roundtrip.pitch, "figurine voxel pitch in mm")->capture_default_str();
    rt->add_option("--height", roundtrip.height, "figurine height in mm")->capture_default_str();
    rt->add_option("--wire-radius", roundtrip.wire_radius, "figurine wire radius in mm")->capture_default_str();
    rt->add_option("--filter", roundtrip.filter, "ramp | shepp-logan | hann")
        ->capture_default_str()
        ->check(CLI::IsMember({"ramp", "shepp-logan", "hann"}));
    roundtrip.flags.attach(rt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        if (ph->parsed()) return phantom.run(jobs);
        if (sim->parsed()) return simulate.run(jobs);
        if (ext->parsed()) return extract.run(jobs);
        if (rec->parsed()) return recon.run(jobs);
        if (rt->parsed()) return roundtrip.run(jobs);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_numeric_failure(e.code()) ? exit_numeric : exit_data;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: FormatError: missing key in metadata file\n";
        return exit_data;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_data;
    }
    return exit_usage;
}
