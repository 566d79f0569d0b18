#pragma once

// Binary and text formats:
//   QVOL  "QVOL" u32 version=1, u32 nx, ny, nz, f64 pitch_mm, f32 voxels (x fastest)
//   QSTK  "QSTK" u32 version=1, u32 M, rows, cols, f64 angle_rad,
//         u32 length + key=value config text, f32 counts (phase step slowest)
//   PFM   "Pf" greyscale, scale -1.0 (little-endian), bottom row first
//   PGM   binary P5, maxval 255, top row first
// All multi-byte values are little-endian.

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "quopt/error.hpp"
#include "quopt/grid.hpp"
#include "quopt/interferometer.hpp"
#include "quopt/phantom.hpp"
#include "quopt/tomo.hpp"

namespace quopt::io {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t format_version = 1;

// ---------------------------------------------------------------------------
// Byte-level helpers

class Writer {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    [[nodiscard]] Bytes take() && { return std::move(buf_); }

private:
    Bytes buf_;
};

class Reader {
public:
    Reader(const Bytes& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

    std::string_view bytes(std::size_t n) {
        need(n);
        std::string_view s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    [[nodiscard]] std::size_t remaining() const noexcept { return buf_.size() - pos_; }
    void expect_end() const {
        require(pos_ == buf_.size(), ErrorCode::FormatError, what_ + ": trailing bytes after payload");
    }

private:
    void need(std::size_t n) const {
        require(buf_.size() - pos_ >= n, ErrorCode::FormatError, what_ + ": file truncated");
    }
    const Bytes& buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path.string());
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline void write_file(const std::filesystem::path& path, const Bytes& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path.string());
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
    require(v <= 0xffffffffu, ErrorCode::InvalidArgument, std::string(what) + " does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

// ---------------------------------------------------------------------------
// key=value text

/// Shortest text that parses back to exactly the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    require(ec == std::errc{}, ErrorCode::InvalidArgument, "cannot format number");
    return {buf, end};
}

inline double parse_double(std::string_view text, std::string_view key) {
    double v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    require(ec == std::errc{} && ptr == text.data() + text.size(), ErrorCode::FormatError,
            "value of '" + std::string(key) + "' is not a number: " + std::string(text));
    return v;
}

inline std::uint64_t parse_uint(std::string_view text, std::string_view key) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    require(ec == std::errc{} && ptr == text.data() + text.size(), ErrorCode::FormatError,
            "value of '" + std::string(key) + "' is not an unsigned integer: " + std::string(text));
    return v;
}

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

using KeyValues = std::map<std::string, std::string>;

/// Flat key=value lines; '#' starts a comment, blank lines are ignored.
inline KeyValues parse_key_values(std::string_view text, std::string_view source = "config") {
    KeyValues kv;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string_view::npos, ErrorCode::FormatError,
                std::string(source) + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key(trim(line.substr(0, eq)));
        require(!key.empty(), ErrorCode::FormatError, std::string(source) + ":" + std::to_string(line_no) + ": empty key");
        require(!kv.contains(key), ErrorCode::FormatError, std::string(source) + ": duplicate key '" + key + "'");
        kv[key] = std::string(trim(line.substr(eq + 1)));
    }
    return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
    const Bytes data = read_file(path);
    return parse_key_values(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()), path.string());
}

inline std::string format_key_values(const std::vector<std::pair<std::string, std::string>>& entries) {
    std::string out;
    for (const auto& [k, v] : entries) out += k + "=" + v + "\n";
    return out;
}

inline std::string_view to_string(TransmissionExponent e) {
    return e == TransmissionExponent::amplitude ? "amplitude" : "intensity";
}
inline std::string_view to_string(NoiseModel n) {
    switch (n) {
        case NoiseModel::none: return "none";
        case NoiseModel::poisson: return "poisson";
        case NoiseModel::poisson_gaussian: return "poisson+gaussian";
    }
    return "none";
}

inline TransmissionExponent parse_exponent(std::string_view s) {
    if (s == "amplitude") return TransmissionExponent::amplitude;
    if (s == "intensity") return TransmissionExponent::intensity;
    fail(ErrorCode::FormatError, "transmission_exponent must be amplitude or intensity, got " + std::string(s));
}
inline NoiseModel parse_noise(std::string_view s) {
    if (s == "none") return NoiseModel::none;
    if (s == "poisson") return NoiseModel::poisson;
    if (s == "poisson+gaussian") return NoiseModel::poisson_gaussian;
    fail(ErrorCode::FormatError, "noise must be none, poisson or poisson+gaussian, got " + std::string(s));
}

inline std::vector<std::pair<std::string, std::string>> scan_config_entries(const ScanConfig& c) {
    return {
        {"lambda_pump_nm", format_double(c.lambda_pump_nm)},
        {"lambda_signal_nm", format_double(c.lambda_signal_nm)},
        {"lambda_idler_nm", format_double(c.lambda_idler_nm)},
        {"n_steps", std::to_string(c.n_steps)},
        {"step_size_um", format_double(c.step_size_um)},
        {"fringe_period_um", format_double(c.fringe_period_um)},
        {"v_sys", format_double(c.v_sys)},
        {"n0", format_double(c.n0)},
        {"transmission_exponent", std::string(to_string(c.transmission_exponent))},
        {"noise", std::string(to_string(c.noise))},
        {"read_sigma", format_double(c.read_sigma)},
        {"seed", std::to_string(c.seed)},
        {"psf_fwhm_mm", format_double(c.psf_fwhm_mm)},
        {"phase_tilt_x", format_double(c.phase_tilt_x)},
        {"phase_tilt_y", format_double(c.phase_tilt_y)},
        {"phase_curvature", format_double(c.phase_curvature)},
    };
}

/// Moves every ScanConfig key found in `kv` into `cfg`, erasing it from `kv`.
inline void take_scan_config(KeyValues& kv, ScanConfig& cfg) {
    const auto take = [&](const char* key, auto&& apply) {
        if (const auto it = kv.find(key); it != kv.end()) {
            apply(it->second, key);
            kv.erase(it);
        }
    };
    take("lambda_pump_nm", [&](const std::string& v, auto k) { cfg.lambda_pump_nm = parse_double(v, k); });
    take("lambda_signal_nm", [&](const std::string& v, auto k) { cfg.lambda_signal_nm = parse_double(v, k); });
    take("lambda_idler_nm", [&](const std::string& v, auto k) { cfg.lambda_idler_nm = parse_double(v, k); });
    take("n_steps", [&](const std::string& v, auto k) { cfg.n_steps = parse_uint(v, k); });
    take("step_size_um", [&](const std::string& v, auto k) { cfg.step_size_um = parse_double(v, k); });
    take("fringe_period_um", [&](const std::string& v, auto k) { cfg.fringe_period_um = parse_double(v, k); });
    take("v_sys", [&](const std::string& v, auto k) { cfg.v_sys = parse_double(v, k); });
    take("n0", [&](const std::string& v, auto k) { cfg.n0 = parse_double(v, k); });
    take("transmission_exponent", [&](const std::string& v, auto) { cfg.transmission_exponent = parse_exponent(v); });
    take("noise", [&](const std::string& v, auto) { cfg.noise = parse_noise(v); });
    take("read_sigma", [&](const std::string& v, auto k) { cfg.read_sigma = parse_double(v, k); });
    take("seed", [&](const std::string& v, auto k) { cfg.seed = parse_uint(v, k); });
    take("psf_fwhm_mm", [&](const std::string& v, auto k) { cfg.psf_fwhm_mm = parse_double(v, k); });
    take("phase_tilt_x", [&](const std::string& v, auto k) { cfg.phase_tilt_x = parse_double(v, k); });
    take("phase_tilt_y", [&](const std::string& v, auto k) { cfg.phase_tilt_y = parse_double(v, k); });
    take("phase_curvature", [&](const std::string& v, auto k) { cfg.phase_curvature = parse_double(v, k); });
}

inline void reject_unknown(const KeyValues& kv, std::string_view source) {
    if (kv.empty()) return;
    fail(ErrorCode::FormatError, std::string(source) + ": unknown key '" + kv.begin()->first + "'");
}

// ---------------------------------------------------------------------------
// QVOL

inline Bytes encode_qvol(const Grid3<double>& data, double pitch) {
    Writer w;
    w.bytes("QVOL");
    w.u32(format_version);
    w.u32(checked_u32(data.nx(), "nx"));
    w.u32(checked_u32(data.ny(), "ny"));
    w.u32(checked_u32(data.nz(), "nz"));
    w.f64(pitch);
    for (double v : data.values()) w.f32(static_cast<float>(v));
    return std::move(w).take();
}

struct QvolData {
    Grid3<double> data;
    double pitch = 1.0;
};

inline QvolData decode_qvol(const Bytes& buf) {
    Reader r(buf, "QVOL");
    require(r.bytes(4) == "QVOL", ErrorCode::FormatError, "QVOL: bad magic");
    const std::uint32_t version = r.u32();
    require(version == format_version, ErrorCode::FormatError, "QVOL: unsupported version " + std::to_string(version));
    const std::size_t nx = r.u32();
    const std::size_t ny = r.u32();
    const std::size_t nz = r.u32();
    const double pitch = r.f64();
    require(nx > 0 && ny > 0 && nz > 0, ErrorCode::FormatError, "QVOL: zero dimension");
    require(r.remaining() == nx * ny * nz * 4, ErrorCode::FormatError, "QVOL: payload size does not match header");
    QvolData out{Grid3<double>(nx, ny, nz), pitch};
    for (auto& v : out.data.values()) v = r.f32();
    r.expect_end();
    return out;
}

inline void write_qvol(const std::filesystem::path& path, const Grid3<double>& data, double pitch) {
    write_file(path, encode_qvol(data, pitch));
}
inline QvolData read_qvol(const std::filesystem::path& path) { return decode_qvol(read_file(path)); }

inline void write_phantom(const std::filesystem::path& path, const Phantom& ph) { write_qvol(path, ph.mu, ph.pitch); }

/// Loads a QVOL file as a phantom and checks the phantom invariants.
inline Phantom read_phantom(const std::filesystem::path& path) {
    QvolData q = read_qvol(path);
    Phantom ph{std::move(q.data), q.pitch};
    validate(ph);
    return ph;
}

// ---------------------------------------------------------------------------
// QSTK

inline Bytes encode_qstk(const FringeStack& s) {
    require(s.counts.size() == s.steps * s.frame_size(), ErrorCode::ConfigMismatch, "stack size mismatch");
    Writer w;
    w.bytes("QSTK");
    w.u32(format_version);
    w.u32(checked_u32(s.steps, "M"));
    w.u32(checked_u32(s.rows, "rows"));
    w.u32(checked_u32(s.cols, "cols"));
    w.f64(s.angle);
    auto entries = scan_config_entries(s.config);
    entries.emplace_back("pixel_pitch_mm", format_double(s.pixel_pitch));
    const std::string block = format_key_values(entries);
    w.u32(checked_u32(block.size(), "config block"));
    w.bytes(block);
    for (double v : s.counts) w.f32(static_cast<float>(v));
    return std::move(w).take();
}

inline FringeStack decode_qstk(const Bytes& buf) {
    Reader r(buf, "QSTK");
    require(r.bytes(4) == "QSTK", ErrorCode::FormatError, "QSTK: bad magic");
    const std::uint32_t version = r.u32();
    require(version == format_version, ErrorCode::FormatError, "QSTK: unsupported version " + std::to_string(version));
    const std::size_t m = r.u32();
    const std::size_t rows = r.u32();
    const std::size_t cols = r.u32();
    const double angle = r.f64();
    const std::uint32_t block_len = r.u32();
    KeyValues kv = parse_key_values(r.bytes(block_len), "QSTK config");
    ScanConfig cfg;
    take_scan_config(kv, cfg);
    double pitch = 1.0;
    if (const auto it = kv.find("pixel_pitch_mm"); it != kv.end()) {
        pitch = parse_double(it->second, "pixel_pitch_mm");
        kv.erase(it);
    }
    reject_unknown(kv, "QSTK config");
    require(cfg.n_steps == m, ErrorCode::FormatError, "QSTK: n_steps in config disagrees with header");
    require(r.remaining() == m * rows * cols * 4, ErrorCode::FormatError, "QSTK: payload size does not match header");
    FringeStack s(m, rows, cols, angle, cfg);
    s.pixel_pitch = pitch;
    for (auto& v : s.counts) v = r.f32();
    r.expect_end();
    return s;
}

inline void write_qstk(const std::filesystem::path& path, const FringeStack& s) { write_file(path, encode_qstk(s)); }
inline FringeStack read_qstk(const std::filesystem::path& path) { return decode_qstk(read_file(path)); }

// ---------------------------------------------------------------------------
// PFM / PGM

inline Bytes encode_pfm(const Grid2<double>& img) {
    Writer w;
    w.bytes("Pf\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n-1.0\n");
    // Our row 0 is the bottom of the image, which PFM stores first.
    for (double v : img.values()) w.f32(static_cast<float>(v));
    return std::move(w).take();
}

namespace detail {

/// Reads whitespace-separated header tokens of a Netpbm-style file.
inline std::vector<std::string> header_tokens(const Bytes& buf, std::size_t count, std::size_t& pos) {
    std::vector<std::string> tokens;
    while (tokens.size() < count) {
        while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
        if (pos < buf.size() && buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
            continue;
        }
        std::string tok;
        while (pos < buf.size() && !std::isspace(buf[pos])) tok += static_cast<char>(buf[pos++]);
        require(!tok.empty(), ErrorCode::FormatError, "image header truncated");
        tokens.push_back(std::move(tok));
    }
    require(pos < buf.size() && std::isspace(buf[pos]), ErrorCode::FormatError, "image header truncated");
    ++pos;  // single whitespace before the raster
    return tokens;
}

}  // namespace detail

inline Grid2<double> decode_pfm(const Bytes& buf) {
    std::size_t pos = 0;
    const auto tok = detail::header_tokens(buf, 4, pos);
    require(tok[0] == "Pf", ErrorCode::FormatError, "PFM: only greyscale 'Pf' files are supported");
    const std::size_t cols = parse_uint(tok[1], "width");
    const std::size_t rows = parse_uint(tok[2], "height");
    const double scale = parse_double(tok[3], "scale");
    require(scale != 0, ErrorCode::FormatError, "PFM: zero scale");
    require(buf.size() - pos == rows * cols * 4, ErrorCode::FormatError, "PFM: raster size does not match header");
    Grid2<double> img(rows, cols);
    const bool little = scale < 0;
    for (std::size_t i = 0; i < rows * cols; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            const std::uint32_t byte = buf[pos + 4 * i + static_cast<std::size_t>(b)];
            bits |= little ? byte << (8 * b) : byte << (8 * (3 - b));
        }
        img.values()[i] = std::bit_cast<float>(bits);
    }
    return img;
}

inline void write_pfm(const std::filesystem::path& path, const Grid2<double>& img) { write_file(path, encode_pfm(img)); }
inline Grid2<double> read_pfm(const std::filesystem::path& path) { return decode_pfm(read_file(path)); }

/// Linear map of [lo, hi] onto 0..255, clamped.
inline Grid2<std::uint8_t> quantize(const Grid2<double>& img, double lo, double hi) {
    Grid2<std::uint8_t> out(img.rows(), img.cols());
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double t = std::clamp((img.values()[i] - lo) / span, 0.0, 1.0);
        out.values()[i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
    }
    return out;
}

inline Bytes encode_pgm(const Grid2<std::uint8_t>& img) {
    Writer w;
    w.bytes("P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n255\n");
    Bytes out = std::move(w).take();
    for (std::size_t r = img.rows(); r-- > 0;) {
        const auto row = img.row(r);
        out.insert(out.end(), row.begin(), row.end());
    }
    return out;
}

inline Grid2<std::uint8_t> decode_pgm(const Bytes& buf) {
    std::size_t pos = 0;
    const auto tok = detail::header_tokens(buf, 4, pos);
    require(tok[0] == "P5", ErrorCode::FormatError, "PGM: only binary P5 files are supported");
    const std::size_t cols = parse_uint(tok[1], "width");
    const std::size_t rows = parse_uint(tok[2], "height");
    require(tok[3] == "255", ErrorCode::FormatError, "PGM: only maxval 255 is supported");
    require(buf.size() - pos == rows * cols, ErrorCode::FormatError, "PGM: raster size does not match header");
    Grid2<std::uint8_t> img(rows, cols);
    for (std::size_t r = rows; r-- > 0;) {
        auto row = img.row(r);
        std::copy_n(buf.begin() + static_cast<long>(pos), cols, row.begin());
        pos += cols;
    }
    return img;
}

inline void write_pgm(const std::filesystem::path& path, const Grid2<std::uint8_t>& img) {
    write_file(path, encode_pgm(img));
}
inline Grid2<std::uint8_t> read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

/// z-slice k of a volume as a 2D image (row = y index, col = x index).
inline Grid2<double> volume_slice(const Grid3<double>& vol, std::size_t k) {
    Grid2<double> img(vol.ny(), vol.nx());
    const auto src = vol.slice(k);
    std::copy(src.begin(), src.end(), img.values().begin());
    return img;
}

}  // namespace quopt::io
