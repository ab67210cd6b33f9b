#include "bmdal/bench.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace bmdal {

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::filesystem::path default_cache_dir() {
    if (const char* env = std::getenv("BMAL_CACHE"); env && *env) return env;
    if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg)
        return std::filesystem::path(xdg) / "bmal";
    if (const char* home = std::getenv("HOME"); home && *home)
        return std::filesystem::path(home) / ".cache" / "bmal";
    return std::filesystem::temp_directory_path() / "bmal-cache";
}

std::filesystem::path fetch_dataset(const std::string& url, const std::filesystem::path& cache_dir) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("URL without scheme: " + url);
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme: " + scheme);

    std::filesystem::create_directories(cache_dir);
    const auto target = cache_dir / (sha256_hex(url) + ".csv");
    std::error_code ec;
    if (std::filesystem::exists(target, ec) && std::filesystem::file_size(target, ec) > 0) return target;

    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client cli(origin);
    cli.set_follow_location(true);
    cli.set_connection_timeout(30);
    cli.set_read_timeout(300);
    auto res = cli.Get(path);
    if (!res) throw DataError("download failed for " + url + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw DataError("download failed for " + url + ": HTTP " + std::to_string(res->status));
    if (res->body.empty()) throw DataError("empty response body for " + url);

    auto tmp = target;
    tmp += ".part";
    {
        std::ofstream out(tmp, std::ios::binary);
        out.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
        if (!out) throw DataError("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
    return target;
}

}  // namespace bmdal
