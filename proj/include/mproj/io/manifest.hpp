#pragma once

#include <openssl/evp.h>

#include <json.hpp>
#include <string>

#include "mproj/io/framestack_io.hpp"
#include "mproj/util/errors.hpp"

namespace mproj::io {

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw io_error("sha256 digest failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

inline std::string hash_file(const std::string& path) { return sha256_hex(read_file(path)); }

/// Run manifest: config snapshot, seed, and per-stage content hashes of every
/// produced artifact. Stages validate their inputs against these hashes and
/// refuse silently modified files.
class RunManifest {
  public:
    static constexpr const char* filename = "manifest.json";

    RunManifest() {
        data_["tool_version"] = "0.1.0";
        data_["stages"] = nlohmann::json::object();
    }

    static RunManifest load(const std::string& out_dir) {
        RunManifest m;
        m.data_ = nlohmann::json::parse(read_file(out_dir + "/" + filename));
        return m;
    }

    void set_run(const std::string& config_text, uint64_t seed) {
        data_["config"] = config_text;
        data_["seed"] = seed;
    }

    void record_output(const std::string& stage, const std::string& out_dir,
                       const std::string& rel_path) {
        data_["stages"][stage]["outputs"][rel_path] = hash_file(out_dir + "/" + rel_path);
    }
    void record_input(const std::string& stage, const std::string& rel_path,
                      const std::string& hash) {
        data_["stages"][stage]["inputs"][rel_path] = hash;
    }
    void record_diagnostic(const std::string& stage, const std::string& rel_path) {
        // listed but unhashed: diagnostics (e.g. the timing log) may legally
        // differ between reruns of an otherwise deterministic pipeline
        data_["stages"][stage]["diagnostics"].push_back(rel_path);
    }

    /// Verify a file this stage consumes against the hash its producer
    /// recorded; returns the hash so the consumer can list it as an input.
    std::string verify_input(const std::string& producer_stage, const std::string& out_dir,
                             const std::string& rel_path) const {
        const std::string full = out_dir + "/" + rel_path;
        if (!std::filesystem::exists(full))
            throw stage_error("missing dependency: '" + rel_path + "' (run the " + producer_stage +
                              " stage first)");
        const auto& stages = data_.at("stages");
        if (!stages.contains(producer_stage) ||
            !stages.at(producer_stage).value("outputs", nlohmann::json::object()).contains(rel_path))
            throw stage_error("manifest has no record of '" + rel_path + "' from stage " +
                              producer_stage);
        const std::string expected =
            stages.at(producer_stage).at("outputs").at(rel_path).get<std::string>();
        const std::string actual = hash_file(full);
        if (actual != expected)
            throw stage_error("input hash mismatch for '" + rel_path + "': manifest " + expected +
                              " vs file " + actual);
        return actual;
    }

    bool has_stage(const std::string& stage) const { return data_.at("stages").contains(stage); }
    uint64_t seed() const { return data_.value("seed", uint64_t{0}); }
    std::string config_text() const { return data_.value("config", std::string{}); }

    void save(const std::string& out_dir) const {
        write_file_atomic(out_dir + "/" + filename, data_.dump(2) + "\n");
    }

    const nlohmann::json& json() const { return data_; }

  private:
    nlohmann::json data_;
};

}  // namespace mproj::io
