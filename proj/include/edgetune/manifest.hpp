// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0
//
// Run manifests: every CLI invocation records its tool version, full
// effective argument list, input-file fingerprints and output paths, so any
// artifact can be reproduced byte for byte from its manifest. Writes are
// atomic (temp file + rename).

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "edgetune/hash.hpp"

namespace edgetune {

constexpr const char* kToolVersion = "0.1.0";

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string sha256_file(const std::string& path) {
    const std::string body = read_file(path);
    return sha256_hex(body);
}

inline void atomic_write_file(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write to '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

struct RunManifest {
    std::string subcommand;
    std::vector<std::string> argv;              // args as given, minus the program name
    nlohmann::json effective;                   // every parameter that shaped the result
    std::map<std::string, std::string> inputs;  // path -> sha256
    std::vector<std::string> outputs;

    void add_input(const std::string& path) { inputs[path] = sha256_file(path); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema_version"] = 1;
        j["tool"] = "edgetune";
        j["version"] = kToolVersion;
        j["subcommand"] = subcommand;
        j["argv"] = argv;
        j["effective"] = effective;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        return j;
    }

    void write(const std::string& path) const { atomic_write_file(path, to_json().dump(2) + "\n"); }
};

inline RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path + "'");
    nlohmann::json j;
    in >> j;
    RunManifest m;
    m.subcommand = j.at("subcommand").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.effective = j.value("effective", nlohmann::json::object());
    if (j.contains("inputs"))
        m.inputs = j["inputs"].get<std::map<std::string, std::string>>();
    if (j.contains("outputs")) m.outputs = j["outputs"].get<std::vector<std::string>>();
    return m;
}

}  // namespace edgetune
