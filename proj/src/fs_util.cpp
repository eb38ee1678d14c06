#include "synthpipe/fs_util.hpp"

#include <zlib.h>

#include <fstream>
#include <sstream>

#include "synthpipe/error.hpp"

namespace synthpipe {

namespace fs = std::filesystem;

bool has_gz_suffix(const fs::path& path) {
    return path.extension() == ".gz";
}

namespace {

std::string gunzip_file(const fs::path& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) fail(ErrorCode::UnreadableFile, "cannot open " + path.string());
    std::string out;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool bad = n < 0;
    gzclose(f);
    if (bad) fail(ErrorCode::UnreadableFile, "corrupt gzip stream in " + path.string());
    return out;
}

std::string gzip_bytes(std::string_view data) {
    z_stream zs{};
    // 15 + 16 selects the gzip wrapper; zlib writes a zero mtime, so output is reproducible.
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        fail(ErrorCode::IoFailure, "deflateInit2 failed");
    std::string out;
    out.resize(deflateBound(&zs, static_cast<uLong>(data.size())) + 32);
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) fail(ErrorCode::IoFailure, "gzip compression failed");
    out.resize(zs.total_out);
    return out;
}

}  // namespace

std::string read_file(const fs::path& path) {
    if (!fs::is_regular_file(path)) fail(ErrorCode::UnreadableFile, "cannot read " + path.string());
    if (has_gz_suffix(path)) return gunzip_file(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::UnreadableFile, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::IoFailure, "cannot write " + tmp.string());
        if (has_gz_suffix(path)) {
            const std::string packed = gzip_bytes(content);
            out.write(packed.data(), static_cast<std::streamsize>(packed.size()));
        } else {
            out.write(content.data(), static_cast<std::streamsize>(content.size()));
        }
        if (!out) fail(ErrorCode::IoFailure, "short write to " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::IoFailure, "rename to " + path.string() + " failed: " + ec.message());
}

std::vector<std::string_view> split_lines(std::string_view content) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        std::string_view line = content.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = nl + 1;
    }
    return lines;
}

}  // namespace synthpipe
