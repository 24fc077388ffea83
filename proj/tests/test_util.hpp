#pragma once

#include <filesystem>
#include <fstream>
#include <string>

namespace testutil {

inline std::filesystem::path tmp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("csiid_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path write_file(const std::filesystem::path& path,
                                        const std::string& content) {
    std::ofstream out(path);
    out << content;
    return path;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

}  // namespace testutil
