#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "zaps/errors.hpp"

namespace zaps {

enum class TaskKind { gaussian_blur, motion_blur, inpaint, super_resolution };

inline std::string_view task_kind_name(TaskKind t) {
    switch (t) {
        case TaskKind::gaussian_blur: return "gaussian_blur";
        case TaskKind::motion_blur: return "motion_blur";
        case TaskKind::inpaint: return "inpaint";
        case TaskKind::super_resolution: return "super_resolution";
    }
    return "?";
}

// Learnable per-step log-likelihood weights and wavelet-domain diagonals.
// Shared flags collapse the respective table to a single row that every step
// reads; shared_diag_channels ties diagonal entries across channels instead.
struct ZapsParams {
    int steps = 0;
    int n = 0;  // image size = channels * pixels
    int channels = 1;
    bool shared_zeta = false;
    bool shared_diag = false;
    bool shared_diag_channels = false;

    std::vector<double> zetas;               // size 1 if shared_zeta else steps
    std::vector<std::vector<double>> diags;  // 1 row if shared_diag else steps rows

    double zeta(int i) const {  // i in [1, steps]
        return zetas[shared_zeta ? 0 : static_cast<std::size_t>(i - 1)];
    }
    const std::vector<double>& diag(int i) const {
        return diags[shared_diag ? 0 : static_cast<std::size_t>(i - 1)];
    }

    int zeta_rows() const { return shared_zeta ? 1 : steps; }
    int diag_rows() const { return shared_diag ? 1 : steps; }
    long parameter_count() const {
        return static_cast<long>(zeta_rows()) + static_cast<long>(diag_rows()) * n;
    }
};

inline double default_zeta_init(TaskKind task) {
    switch (task) {
        case TaskKind::gaussian_blur:
        case TaskKind::motion_blur: return 0.2;
        case TaskKind::inpaint:
        case TaskKind::super_resolution: return 0.1;
    }
    return 0.1;
}

inline constexpr double kDefaultDiagInit = 0.2;

inline ZapsParams init_params(TaskKind task, int S, int n, int channels = 1,
                              bool shared_zeta = false, bool shared_diag = false,
                              bool shared_diag_channels = false,
                              double zeta_init = -1.0, double diag_init = kDefaultDiagInit) {
    if (S < 1 || n < 1) throw config_error("init_params: S and n must be positive");
    if (channels < 1 || n % channels != 0)
        throw config_error("init_params: channels must divide n");
    ZapsParams p;
    p.steps = S;
    p.n = n;
    p.channels = channels;
    p.shared_zeta = shared_zeta;
    p.shared_diag = shared_diag;
    p.shared_diag_channels = shared_diag_channels;
    const double z0 = zeta_init < 0.0 ? default_zeta_init(task) : zeta_init;
    p.zetas.assign(static_cast<std::size_t>(p.zeta_rows()), z0);
    p.diags.assign(static_cast<std::size_t>(p.diag_rows()),
                   std::vector<double>(static_cast<std::size_t>(n), diag_init));
    return p;
}

}  // namespace zaps
