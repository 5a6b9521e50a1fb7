#pragma once

#include "mmsim/scenario.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#ifndef MMSIM_SOURCE_DIR
#define MMSIM_SOURCE_DIR "."
#endif

namespace fixtures {

inline std::string source_path(const std::string& rel) { return std::string(MMSIM_SOURCE_DIR) + "/" + rel; }

inline std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline mmsim::ScenarioSpec scenario(const std::string& name)
{
    auto res = mmsim::load_scenario(read_text(source_path("scenarios/" + name)));
    if (!res.ok()) {
        std::string msg = "scenario " + name + " failed to load";
        for (const auto& d : res.diagnostics) msg += "\n  " + d.message;
        throw std::runtime_error(msg);
    }
    return *res.spec;
}

}  // namespace fixtures
