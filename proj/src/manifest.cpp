#include "deanchor/manifest.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iterator>
#include <memory>

#include "deanchor/error.hpp"

namespace deanchor {

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        fail(ErrorKind::State, "SHA-256 computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Data, "cannot read " + path.string());
    return sha256_hex(std::string(std::istreambuf_iterator<char>(in), {}));
}

void RunManifest::add_input(const std::filesystem::path& p) { inputs.push_back({p, sha256_file(p)}); }

void RunManifest::add_output(const std::filesystem::path& p) { outputs.push_back({p, sha256_file(p)}); }

Json RunManifest::to_json() const {
    Json doc = make_document("run_manifest");
    doc["subcommand"] = subcommand;
    doc["tool_version"] = kToolVersion;
    doc["seed"] = seed;
    doc["config"] = config;
    auto list = [](const std::vector<FileDigest>& files) {
        Json a = Json::array();
        for (const auto& f : files) a.push_back({{"path", f.path.string()}, {"sha256", f.sha256}});
        return a;
    };
    doc["inputs"] = list(inputs);
    doc["outputs"] = list(outputs);
    doc["wall_seconds"] = wall_seconds;
    return doc;
}

std::vector<std::string> verify_manifest(const Json& manifest) {
    check_document(manifest, "run_manifest");
    std::vector<std::string> bad;
    for (const char* key : {"inputs", "outputs"}) {
        for (const auto& f : require(manifest, key)) {
            const auto path = require_as<std::string>(f, "path");
            if (!std::filesystem::exists(path) || sha256_file(path) != require_as<std::string>(f, "sha256")) {
                bad.push_back(path);
            }
        }
    }
    return bad;
}

}  // namespace deanchor
