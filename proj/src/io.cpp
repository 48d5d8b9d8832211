#include "hicolora/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "hicolora/error.hpp"

namespace hicolora::io {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, [&] { return "cannot open '" + path + "'"; });
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), ErrorKind::Io, [&] { return "cannot write '" + tmp.string() + "'"; });
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        require(out.good(), ErrorKind::Io, [&] { return "write failed for '" + tmp.string() + "'"; });
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        fail(ErrorKind::Io, "cannot rename into '" + path + "': " + ec.message());
    }
}

}  // namespace hicolora::io
