#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "zaps/config.hpp"
#include "zaps/errors.hpp"
#include "zaps/image.hpp"
#include "zaps/params.hpp"
#include "zaps/prior.hpp"

namespace zaps::io {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// --- raw image format: little-endian float32 planar payload plus a text
// sidecar "<path>.hdr" holding "channels height width".

inline void write_raw_image(const std::string& path, const ImageTensor& img) {
    {
        std::ofstream hdr(path + ".hdr");
        if (!hdr) throw config_error("io: cannot write header for '" + path + "'");
        hdr << img.shape().channels << " " << img.shape().height << " "
            << img.shape().width << "\n";
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("io: cannot write '" + path + "'");
    for (double v : img.flat()) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, sizeof(bits));
        const unsigned char b[4] = {
            static_cast<unsigned char>(bits & 0xff),
            static_cast<unsigned char>((bits >> 8) & 0xff),
            static_cast<unsigned char>((bits >> 16) & 0xff),
            static_cast<unsigned char>((bits >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
}

inline ImageTensor read_raw_image(const std::string& path) {
    std::ifstream hdr(path + ".hdr");
    if (!hdr) throw config_error("io: missing header '" + path + ".hdr'");
    Shape shape;
    if (!(hdr >> shape.channels >> shape.height >> shape.width))
        throw config_error("io: malformed header '" + path + ".hdr'");
    if (shape.channels < 1 || shape.height < 1 || shape.width < 1)
        throw config_error("io: bad shape in header '" + path + ".hdr'");

    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("io: cannot open '" + path + "'");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<long>(in.tellg());
    in.seekg(0, std::ios::beg);
    if (bytes != static_cast<long>(shape.size()) * 4)
        throw config_error("io: payload of '" + path + "' is " + std::to_string(bytes) +
                           " bytes, header says " + std::to_string(shape.size() * 4));

    ImageTensor img(shape);
    auto flat = img.flat();
    std::vector<unsigned char> buf(static_cast<std::size_t>(bytes));
    in.read(reinterpret_cast<char*>(buf.data()), bytes);
    for (std::size_t k = 0; k < flat.size(); ++k) {
        const std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * k]) |
                                   (static_cast<std::uint32_t>(buf[4 * k + 1]) << 8) |
                                   (static_cast<std::uint32_t>(buf[4 * k + 2]) << 16) |
                                   (static_cast<std::uint32_t>(buf[4 * k + 3]) << 24);
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        flat[k] = static_cast<double>(f);
    }
    return img;
}

// 16-bit binary PGM snapshot of one channel, values clamped to [0,1] and
// quantized as round(v * 65535).
inline void write_pgm16(const std::string& path, const ImageTensor& img, int channel = 0) {
    const Shape sh = img.shape();
    if (channel < 0 || channel >= sh.channels)
        throw std::invalid_argument("pgm: channel out of range");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("io: cannot write '" + path + "'");
    out << "P5\n" << sh.width << " " << sh.height << "\n65535\n";
    for (int i = 0; i < sh.height; ++i)
        for (int j = 0; j < sh.width; ++j) {
            double v = img(channel, i, j);
            v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
            const unsigned char b[2] = {static_cast<unsigned char>(q >> 8),
                                        static_cast<unsigned char>(q & 0xff)};
            out.write(reinterpret_cast<const char*>(b), 2);
        }
}

// Plain-text kernel matrix: one row per line, whitespace-separated reals.
inline std::vector<std::vector<double>> read_kernel_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("io: cannot open kernel '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof() && ls.fail())
            throw config_error("io: bad kernel row in '" + path + "'");
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw config_error("io: empty kernel file '" + path + "'");
    return rows;
}

// --- learned parameter file: header (S, n, channels, flags), then one row
// per zeta entry and one row per diagonal.

inline void write_params(const std::string& path, const ZapsParams& p) {
    std::ofstream out(path);
    if (!out) throw config_error("io: cannot write '" + path + "'");
    out << "S " << p.steps << "\n";
    out << "n " << p.n << "\n";
    out << "channels " << p.channels << "\n";
    out << "shared_zeta " << (p.shared_zeta ? 1 : 0) << "\n";
    out << "shared_diag " << (p.shared_diag ? 1 : 0) << "\n";
    out << "shared_diag_channels " << (p.shared_diag_channels ? 1 : 0) << "\n";
    for (std::size_t i = 0; i < p.zetas.size(); ++i)
        out << "zeta " << i << " " << fmt(p.zetas[i]) << "\n";
    for (std::size_t i = 0; i < p.diags.size(); ++i) {
        out << "diag " << i;
        for (double v : p.diags[i]) out << " " << fmt(v);
        out << "\n";
    }
}

inline ZapsParams read_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("io: cannot open params '" + path + "'");
    ZapsParams p;
    std::string key;
    int flag = 0;
    auto expect = [&](const char* name, auto& dst) {
        if (!(in >> key) || key != name || !(in >> dst))
            throw config_error("io: params header: expected '" + std::string(name) + "'");
    };
    expect("S", p.steps);
    expect("n", p.n);
    expect("channels", p.channels);
    expect("shared_zeta", flag);
    p.shared_zeta = flag != 0;
    expect("shared_diag", flag);
    p.shared_diag = flag != 0;
    expect("shared_diag_channels", flag);
    p.shared_diag_channels = flag != 0;
    p.zetas.resize(static_cast<std::size_t>(p.shared_zeta ? 1 : p.steps));
    for (std::size_t i = 0; i < p.zetas.size(); ++i) {
        std::size_t idx;
        if (!(in >> key >> idx >> p.zetas[i]) || key != "zeta" || idx != i)
            throw config_error("io: params: bad zeta row " + std::to_string(i));
    }
    p.diags.assign(static_cast<std::size_t>(p.shared_diag ? 1 : p.steps),
                   std::vector<double>(static_cast<std::size_t>(p.n)));
    for (std::size_t i = 0; i < p.diags.size(); ++i) {
        std::size_t idx;
        if (!(in >> key >> idx) || key != "diag" || idx != i)
            throw config_error("io: params: bad diag row " + std::to_string(i));
        for (std::size_t j = 0; j < p.diags[i].size(); ++j)
            if (!(in >> p.diags[i][j]))
                throw config_error("io: params: short diag row " + std::to_string(i));
    }
    return p;
}

// --- GMM prior spec, plain text:
//   K <count>
//   [wavelet <family>] [levels <n>]
//   then per component:
//     weight <w>
//     mean const <v> | mean file <path>
//     cov scalar <var> | cov wavelet const <v> | cov wavelet file <path>
inline GaussianMixturePrior load_gmm_spec(const std::string& path, Shape shape) {
    std::ifstream in(path);
    if (!in) throw config_error("io: cannot open gmm spec '" + path + "'");

    WaveletFamily family = WaveletFamily::db4;
    int levels = 2;
    int K = -1;
    std::vector<GmmComponent> comps;

    double weight = -1.0;
    ImageTensor mean;
    bool have_mean = false;

    std::string tok;
    auto base_dir = std::filesystem::path(path).parent_path();
    while (in >> tok) {
        if (tok == "#") {
            std::string rest;
            std::getline(in, rest);
        } else if (tok == "K") {
            if (!(in >> K) || K < 1) throw config_error("gmm spec: bad K");
        } else if (tok == "wavelet") {
            std::string name;
            in >> name;
            family = parse_wavelet_family(name);
        } else if (tok == "levels") {
            if (!(in >> levels) || levels < 1) throw config_error("gmm spec: bad levels");
        } else if (tok == "weight") {
            if (!(in >> weight)) throw config_error("gmm spec: bad weight");
        } else if (tok == "mean") {
            std::string kind;
            in >> kind;
            if (kind == "const") {
                double v;
                if (!(in >> v)) throw config_error("gmm spec: bad mean const");
                mean = ImageTensor(shape, v);
            } else if (kind == "file") {
                std::string p;
                in >> p;
                mean = read_raw_image((base_dir / p).string());
                if (!(mean.shape() == shape))
                    throw config_error("gmm spec: mean shape mismatch");
            } else {
                throw config_error("gmm spec: bad mean kind '" + kind + "'");
            }
            have_mean = true;
        } else if (tok == "cov") {
            if (weight <= 0.0 || !have_mean)
                throw config_error("gmm spec: cov before weight/mean");
            std::string kind;
            in >> kind;
            GmmCovariance cov = GmmCovariance::scalar(1.0);
            if (kind == "scalar") {
                double v;
                if (!(in >> v)) throw config_error("gmm spec: bad scalar variance");
                cov = GmmCovariance::scalar(v);
            } else if (kind == "wavelet") {
                std::string dk;
                in >> dk;
                std::vector<double> diag(static_cast<std::size_t>(shape.size()));
                if (dk == "const") {
                    double v;
                    if (!(in >> v)) throw config_error("gmm spec: bad diag const");
                    for (double& d : diag) d = v;
                } else if (dk == "file") {
                    std::string p;
                    in >> p;
                    std::ifstream din((base_dir / p).string());
                    if (!din) throw config_error("gmm spec: cannot open diag file");
                    for (double& d : diag)
                        if (!(din >> d)) throw config_error("gmm spec: short diag file");
                } else {
                    throw config_error("gmm spec: bad diag kind '" + dk + "'");
                }
                cov = GmmCovariance::wavelet_diagonal(WaveletBasis(family, levels),
                                                      std::move(diag));
            } else {
                throw config_error("gmm spec: bad cov kind '" + kind + "'");
            }
            comps.push_back(GmmComponent{weight, std::move(mean), std::move(cov)});
            weight = -1.0;
            have_mean = false;
        } else {
            throw config_error("gmm spec: unexpected token '" + tok + "'");
        }
    }
    if (K != static_cast<int>(comps.size()))
        throw config_error("gmm spec: K=" + std::to_string(K) + " but found " +
                           std::to_string(comps.size()) + " components");
    return GaussianMixturePrior(shape, std::move(comps));
}

// --- CSV emission (epoch rows and suite summaries)

inline std::string csv_cell(double v) { return fmt(v); }

inline void write_epoch_csv(const std::string& path, const std::vector<EpochRow>& rows) {
    std::ofstream out(path);
    if (!out) throw config_error("io: cannot write '" + path + "'");
    out << "epoch,loss,psnr,ssim\n";
    for (const auto& r : rows)
        out << r.epoch << "," << csv_cell(r.loss) << "," << csv_cell(r.psnr) << ","
            << csv_cell(r.ssim) << "\n";
}

inline void write_key_values(const std::string& path,
                             const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream out(path);
    if (!out) throw config_error("io: cannot write '" + path + "'");
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

}  // namespace zaps::io
