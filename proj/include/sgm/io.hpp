// SPDX-License-Identifier: Apache-2.0
//
// Artifact files: sample blocks with JSON sidecars, JSON and CSV writers, and
// the git-style content hash used for provenance.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "sgm/error.hpp"
#include "sgm/numerics/bytes.hpp"
#include "sgm/numerics/linalg.hpp"
#include "sgm/sampler.hpp"
#include "sgm/trainer.hpp"

namespace sgm {

/// SHA-1 of "blob <size>\0" + content, as `git hash-object` computes it.
inline std::string git_blob_hash(const std::vector<unsigned char>& content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw Error(ErrorCode::Io, "EVP_MD_CTX_new failed");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, md, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw Error(ErrorCode::Io, "SHA-1 digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

inline std::string git_blob_hash(const std::string& content) {
    return git_blob_hash(std::vector<unsigned char>(content.begin(), content.end()));
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << text;
    if (!out) throw Error(ErrorCode::Io, "short write to " + path);
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "file not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const std::string& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::Io, path + ": " + e.what());
    }
}

inline nlohmann::json provenance_json(const Provenance& p) {
    return {{"config_hash", p.config_hash}, {"seed", p.seed},       {"stream", p.stream},
            {"n_paths", p.n_paths},         {"n_steps", p.n_steps}, {"integrator", p.integrator},
            {"profile", p.profile},         {"t_low", p.t_low},     {"t_high", p.t_high}};
}

/// Raw row-major little-endian float64 block plus a sidecar `<path>.json`
/// (or the given sidecar path) with shape and provenance.
inline void write_samples_bin(const std::string& path, const std::string& sidecar, const Matrix& xs,
                              const Provenance& prov) {
    ByteWriter w;
    for (double v : xs.data()) w.f64(v);
    write_file_bytes(path, w.bytes());
    nlohmann::json j = provenance_json(prov);
    j["d"] = xs.cols();
    j["n_paths"] = xs.rows();
    j["format"] = "float64-le row-major";
    j["content_hash"] = git_blob_hash(w.bytes());
    write_json(sidecar, j);
}

inline Matrix read_samples_bin(const std::string& path, const std::string& sidecar) {
    const nlohmann::json j = read_json(sidecar);
    const auto rows = j.at("n_paths").get<std::size_t>();
    const auto cols = j.at("d").get<std::size_t>();
    const auto bytes = read_file_bytes(path);
    if (bytes.size() != rows * cols * 8)
        throw Error(ErrorCode::SizeMismatch, path + ": size does not match the sidecar shape");
    if (j.contains("content_hash") && j["content_hash"].get<std::string>() != git_blob_hash(bytes))
        throw Error(ErrorCode::CorruptChecksum, path + ": content hash mismatch");
    ByteReader r(bytes.data(), bytes.size());
    Matrix xs(rows, cols);
    for (double& v : xs.data()) v = r.f64();
    return xs;
}

/// One row per sample, round-trip precision.
inline void write_samples_csv(const std::string& path, const Matrix& xs) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t j = 0; j < xs.cols(); ++j) os << (j ? "," : "") << "x" << j;
    os << "\n";
    for (std::size_t i = 0; i < xs.rows(); ++i) {
        for (std::size_t j = 0; j < xs.cols(); ++j) os << (j ? "," : "") << xs(i, j);
        os << "\n";
    }
    write_text(path, os.str());
}

inline void write_train_log_csv(const std::string& path, const std::vector<IntervalLog>& logs) {
    std::ostringstream os;
    os.precision(10);
    os << "flat,k,j,iteration,dsm_loss,penalty,lambda_max,wall_s\n";
    for (const auto& l : logs)
        for (const auto& r : l.rows)
            os << l.flat << "," << l.k << "," << l.j << "," << r.iteration << "," << r.dsm_loss << "," << r.penalty
               << "," << r.lambda_max << "," << r.wall_s << "\n";
    write_text(path, os.str());
}

inline nlohmann::json train_summary_json(const std::vector<IntervalLog>& logs, std::size_t total_parameters) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : logs)
        arr.push_back({{"flat", l.flat}, {"k", l.k}, {"j", l.j}, {"final_loss", l.final_loss},
                       {"refit_scale", l.refit_scale}, {"lambda_hat", l.lambda_hat}, {"vp_cap", l.vp_cap},
                       {"rescaled", l.rescaled}, {"param_movement", l.param_movement}, {"iterations", l.iterations}});
    return {{"total_parameters", total_parameters}, {"intervals", arr}};
}

inline void ensure_directory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create directory " + dir + ": " + ec.message());
}

}  // namespace sgm
