#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "zaps/errors.hpp"
#include "zaps/params.hpp"
#include "zaps/sampler.hpp"

namespace zaps {

enum class Task {
    gaussian_deblur,
    motion_deblur,
    inpaint_random,
    inpaint_box,
    super_resolution
};

inline std::string_view task_name(Task t) {
    switch (t) {
        case Task::gaussian_deblur: return "gaussian_deblur";
        case Task::motion_deblur: return "motion_deblur";
        case Task::inpaint_random: return "inpaint_random";
        case Task::inpaint_box: return "inpaint_box";
        case Task::super_resolution: return "super_resolution";
    }
    return "?";
}

inline Task parse_task(std::string_view s) {
    if (s == "gaussian_deblur") return Task::gaussian_deblur;
    if (s == "motion_deblur") return Task::motion_deblur;
    if (s == "inpaint_random") return Task::inpaint_random;
    if (s == "inpaint_box") return Task::inpaint_box;
    if (s == "super_resolution") return Task::super_resolution;
    throw config_error("unknown task '" + std::string(s) + "'");
}

inline TaskKind task_kind(Task t) {
    switch (t) {
        case Task::gaussian_deblur: return TaskKind::gaussian_blur;
        case Task::motion_deblur: return TaskKind::motion_blur;
        case Task::inpaint_random:
        case Task::inpaint_box: return TaskKind::inpaint;
        case Task::super_resolution: return TaskKind::super_resolution;
    }
    return TaskKind::inpaint;
}

// Flat key=value experiment description. Every knob has a default; the
// effective set is echoed into the output directory.
struct ExperimentConfig {
    Task task = Task::gaussian_deblur;
    GuidanceMethod method = GuidanceMethod::zaps;

    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::string schedule = "15,10,5";
    std::string schedule_kind = "irregular";  // irregular | uniform

    int epochs = 10;
    double sigma_y = 0.05;
    std::uint64_t seed = 1;
    std::string out = "out";

    int channels = 1;
    int height = 32;
    int width = 32;
    std::string image = "sample_prior";  // sample_prior | smooth | const:<v> | file:<path>

    std::string prior = "gaussian";      // gaussian | gmm
    std::string prior_mean = "smooth";   // smooth | const:<v> | file:<path>
    double prior_var = 0.04;
    std::string prior_cov = "scalar";    // scalar | wavelet
    double prior_cov_decay = 4.0;        // wavelet covariance: var * decay^depth
    std::string prior_file;              // gmm spec path

    std::string wavelet = "db4";
    int levels = 2;

    std::string jacobian_mode = "identity";  // identity | wavelet_diag | exact_oracle
    double zeta = 1.0;                        // baseline constant weight
    std::string zeta_init = "auto";           // auto | <value>
    double diag_init = 0.2;
    double lr = 1e-3;
    std::string noise_policy = "fixed_bank";  // fixed_bank | resample_per_epoch
    bool shared_zeta = false;
    bool shared_diag = false;
    bool shared_diag_channels = false;
    bool grad_check = false;
    bool normalize_residual = false;
    std::string ddim_eta = "ddpm";  // ddpm | <eta in [0,1]>
    std::string r_sq_rule = "snr";  // snr | const:<v>

    int blur_kernel_size = 9;
    double blur_sigma = 1.5;
    std::string motion_kernel;  // text matrix path
    double keep_fraction = 0.3;
    int box_top = 12;
    int box_left = 12;
    int box_size = 8;
    int sr_factor = 4;
    std::string sr_kernel = "block";  // block | bicubic

    int ssim_window = 11;
    double cg_tol = 1e-10;
    int cg_max_iters = 1000;
    bool save_trajectory = false;

    Shape shape() const { return Shape{channels, height, width}; }

    SubSchedule build_subschedule() const {
        const std::vector<int> counts = parse_segment_spec(schedule);
        if (schedule_kind == "uniform") {
            int S = 0;
            for (int c : counts) S += c;
            return build_uniform_subschedule(T, S);
        }
        if (schedule_kind != "irregular")
            throw config_error("schedule_kind must be irregular or uniform");
        return build_irregular_subschedule(T, counts);
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw config_error("");
        return d;
    } catch (...) {
        throw config_error("config: bad numeric value for " + key + ": '" + v + "'");
    }
}

inline int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long d = std::stol(v, &pos);
        if (pos != v.size()) throw config_error("");
        return static_cast<int>(d);
    } catch (...) {
        throw config_error("config: bad integer value for " + key + ": '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long d = std::stoull(v, &pos);
        if (pos != v.size()) throw config_error("");
        return d;
    } catch (...) {
        throw config_error("config: bad seed value for " + key + ": '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw config_error("config: bad boolean for " + key + ": '" + v + "'");
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void apply_config_entry(ExperimentConfig& c, const std::string& key,
                               const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;
    using detail::parse_u64;
    if (key == "task") c.task = parse_task(value);
    else if (key == "method") c.method = parse_guidance_method(value);
    else if (key == "T") c.T = parse_int(key, value);
    else if (key == "beta_start") c.beta_start = parse_double(key, value);
    else if (key == "beta_end") c.beta_end = parse_double(key, value);
    else if (key == "schedule") c.schedule = value;
    else if (key == "schedule_kind") c.schedule_kind = value;
    else if (key == "epochs") c.epochs = parse_int(key, value);
    else if (key == "sigma_y") c.sigma_y = parse_double(key, value);
    else if (key == "seed") c.seed = parse_u64(key, value);
    else if (key == "out") c.out = value;
    else if (key == "channels") c.channels = parse_int(key, value);
    else if (key == "height") c.height = parse_int(key, value);
    else if (key == "width") c.width = parse_int(key, value);
    else if (key == "image") c.image = value;
    else if (key == "prior") c.prior = value;
    else if (key == "prior_mean") c.prior_mean = value;
    else if (key == "prior_var") c.prior_var = parse_double(key, value);
    else if (key == "prior_cov") c.prior_cov = value;
    else if (key == "prior_cov_decay") c.prior_cov_decay = parse_double(key, value);
    else if (key == "prior_file") c.prior_file = value;
    else if (key == "wavelet") c.wavelet = value;
    else if (key == "levels") c.levels = parse_int(key, value);
    else if (key == "jacobian_mode") c.jacobian_mode = value;
    else if (key == "zeta") c.zeta = parse_double(key, value);
    else if (key == "zeta_init") c.zeta_init = value;
    else if (key == "diag_init") c.diag_init = parse_double(key, value);
    else if (key == "lr") c.lr = parse_double(key, value);
    else if (key == "noise_policy") c.noise_policy = value;
    else if (key == "shared_zeta") c.shared_zeta = parse_bool(key, value);
    else if (key == "shared_diag") c.shared_diag = parse_bool(key, value);
    else if (key == "shared_diag_channels") c.shared_diag_channels = parse_bool(key, value);
    else if (key == "grad_check") c.grad_check = parse_bool(key, value);
    else if (key == "normalize_residual") c.normalize_residual = parse_bool(key, value);
    else if (key == "ddim_eta") c.ddim_eta = value;
    else if (key == "r_sq_rule") c.r_sq_rule = value;
    else if (key == "blur_kernel_size") c.blur_kernel_size = parse_int(key, value);
    else if (key == "blur_sigma") c.blur_sigma = parse_double(key, value);
    else if (key == "motion_kernel") c.motion_kernel = value;
    else if (key == "keep_fraction") c.keep_fraction = parse_double(key, value);
    else if (key == "box_top") c.box_top = parse_int(key, value);
    else if (key == "box_left") c.box_left = parse_int(key, value);
    else if (key == "box_size") c.box_size = parse_int(key, value);
    else if (key == "sr_factor") c.sr_factor = parse_int(key, value);
    else if (key == "sr_kernel") c.sr_kernel = value;
    else if (key == "ssim_window") c.ssim_window = parse_int(key, value);
    else if (key == "cg_tol") c.cg_tol = parse_double(key, value);
    else if (key == "cg_max_iters") c.cg_max_iters = parse_int(key, value);
    else if (key == "save_trajectory") c.save_trajectory = parse_bool(key, value);
    else throw config_error("config: unknown key '" + key + "'");
}

inline void validate_config(const ExperimentConfig& c) {
    if (c.epochs < 1) throw config_error("config: epochs must be >= 1");
    if (c.T < 2) throw config_error("config: T must be >= 2");
    if (c.sigma_y < 0.0) throw config_error("config: sigma_y must be >= 0");
    if (c.channels < 1 || c.height < 1 || c.width < 1)
        throw config_error("config: bad image shape");
    if (c.lr <= 0.0) throw config_error("config: lr must be > 0");
    if (c.levels < 1) throw config_error("config: levels must be >= 1");
    if (c.ssim_window > std::min(c.height, c.width))
        throw config_error("config: ssim_window larger than image");
    if (c.ddim_eta != "ddpm") {
        const double eta = detail::parse_double("ddim_eta", c.ddim_eta);
        if (eta < 0.0 || eta > 1.0) throw config_error("config: ddim_eta must be in [0,1]");
    }
    if (c.jacobian_mode != "identity" && c.jacobian_mode != "wavelet_diag" &&
        c.jacobian_mode != "exact_oracle")
        throw config_error("config: bad jacobian_mode '" + c.jacobian_mode + "'");
    if (c.noise_policy != "fixed_bank" && c.noise_policy != "resample_per_epoch")
        throw config_error("config: bad noise_policy '" + c.noise_policy + "'");
    (void)parse_segment_spec(c.schedule);
    (void)parse_wavelet_family(c.wavelet);
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(lineno) +
                               ": expected key=value, got '" + stripped + "'");
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        try {
            apply_config_entry(c, key, value);
        } catch (const config_error& e) {
            throw config_error("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    validate_config(c);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

// Full effective configuration, sorted, for provenance echoing.
inline std::vector<std::pair<std::string, std::string>> config_key_values(
    const ExperimentConfig& c) {
    using detail::fmt_double;
    std::vector<std::pair<std::string, std::string>> kv = {
        {"task", std::string(task_name(c.task))},
        {"method", std::string(guidance_method_name(c.method))},
        {"T", std::to_string(c.T)},
        {"beta_start", fmt_double(c.beta_start)},
        {"beta_end", fmt_double(c.beta_end)},
        {"schedule", c.schedule},
        {"schedule_kind", c.schedule_kind},
        {"epochs", std::to_string(c.epochs)},
        {"sigma_y", fmt_double(c.sigma_y)},
        {"seed", std::to_string(c.seed)},
        {"out", c.out},
        {"channels", std::to_string(c.channels)},
        {"height", std::to_string(c.height)},
        {"width", std::to_string(c.width)},
        {"image", c.image},
        {"prior", c.prior},
        {"prior_mean", c.prior_mean},
        {"prior_var", fmt_double(c.prior_var)},
        {"prior_cov", c.prior_cov},
        {"prior_cov_decay", fmt_double(c.prior_cov_decay)},
        {"prior_file", c.prior_file},
        {"wavelet", c.wavelet},
        {"levels", std::to_string(c.levels)},
        {"jacobian_mode", c.jacobian_mode},
        {"zeta", fmt_double(c.zeta)},
        {"zeta_init", c.zeta_init},
        {"diag_init", fmt_double(c.diag_init)},
        {"lr", fmt_double(c.lr)},
        {"noise_policy", c.noise_policy},
        {"shared_zeta", c.shared_zeta ? "1" : "0"},
        {"shared_diag", c.shared_diag ? "1" : "0"},
        {"shared_diag_channels", c.shared_diag_channels ? "1" : "0"},
        {"grad_check", c.grad_check ? "1" : "0"},
        {"normalize_residual", c.normalize_residual ? "1" : "0"},
        {"ddim_eta", c.ddim_eta},
        {"r_sq_rule", c.r_sq_rule},
        {"blur_kernel_size", std::to_string(c.blur_kernel_size)},
        {"blur_sigma", fmt_double(c.blur_sigma)},
        {"motion_kernel", c.motion_kernel},
        {"keep_fraction", fmt_double(c.keep_fraction)},
        {"box_top", std::to_string(c.box_top)},
        {"box_left", std::to_string(c.box_left)},
        {"box_size", std::to_string(c.box_size)},
        {"sr_factor", std::to_string(c.sr_factor)},
        {"sr_kernel", c.sr_kernel},
        {"ssim_window", std::to_string(c.ssim_window)},
        {"cg_tol", fmt_double(c.cg_tol)},
        {"cg_max_iters", std::to_string(c.cg_max_iters)},
        {"save_trajectory", c.save_trajectory ? "1" : "0"},
    };
    std::sort(kv.begin(), kv.end());
    return kv;
}

}  // namespace zaps
