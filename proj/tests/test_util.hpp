#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "oneedit/kg.hpp"

namespace testutil {

inline oneedit::RelationSchema functional(const std::string& name) { return {name, false, std::nullopt, true}; }
inline oneedit::RelationSchema multi(const std::string& name) { return {name, false, std::nullopt, false}; }
inline oneedit::RelationSchema reversible(const std::string& name, const std::string& inverse) {
    return {name, true, inverse, true};
}

inline oneedit::Triple T(const std::string& s, const std::string& r, const std::string& o) { return {s, r, o}; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() /
               ("oneedit_" + name + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
