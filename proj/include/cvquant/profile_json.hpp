#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvquant/equivalence.hpp"

namespace cvquant {

inline constexpr int kProfileVersion = 1;
inline constexpr const char* kProfileFormat = "cvquant-profile";

namespace detail {

inline nlohmann::ordered_json tensor_json(std::vector<std::size_t> shape, const double* data,
                                          std::size_t count) {
    nlohmann::ordered_json t;
    t["shape"] = shape;
    t["data"] = std::vector<double>(data, data + count);
    return t;
}

inline std::vector<double> tensor_data(const nlohmann::ordered_json& t,
                                       const std::vector<std::size_t>& shape, const char* name) {
    if (!t.is_object() || !t.contains("shape") || !t.contains("data")) {
        throw std::runtime_error(std::string("profile: ") + name + " must have shape and data");
    }
    if (t.at("shape").get<std::vector<std::size_t>>() != shape) {
        throw std::runtime_error(std::string("profile: unexpected shape for ") + name);
    }
    std::size_t expect = 1;
    for (auto s : shape) expect *= s;
    auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != expect) {
        throw std::runtime_error(std::string("profile: shape/data mismatch for ") + name);
    }
    return data;
}

}  // namespace detail

inline nlohmann::ordered_json profile_to_json(const EquivalenceFunction& f) {
    nlohmann::ordered_json j;
    j["format"] = kProfileFormat;
    j["version"] = kProfileVersion;
    j["kind"] = std::string(to_string(f.kind()));
    j["epsilon"] = f.epsilon;
    if (f.kind() == TransformKind::linear) {
        const auto& t = std::get<LinearTransform>(f.transform);
        j["seed"] = 0;
        j["matrix"] = detail::tensor_json({3, 3}, t.m.data(), 9);
    } else {
        const auto& t = std::get<NonlinearTransform>(f.transform);
        j["seed"] = t.seed;
        j["hidden_units"] = t.hidden;
        j["hidden_weights"] = detail::tensor_json({3, std::size_t(t.hidden)}, t.w1.data(), t.w1.size());
        j["hidden_bias"] = detail::tensor_json({std::size_t(t.hidden)}, t.b1.data(), t.b1.size());
        j["output_weights"] = detail::tensor_json({std::size_t(t.hidden), 3}, t.w2.data(), t.w2.size());
        j["output_bias"] = detail::tensor_json({3}, t.b2.data(), t.b2.size());
    }
    return j;
}

inline EquivalenceFunction profile_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_object() || j.value("format", std::string()) != kProfileFormat) {
        throw std::runtime_error("profile: not a cvquant-profile document");
    }
    if (j.value("version", 0) != kProfileVersion) {
        throw std::runtime_error("profile: unsupported version " + std::to_string(j.value("version", 0)));
    }

    EquivalenceFunction f;
    f.epsilon = j.at("epsilon").get<double>();
    const auto kind = transform_kind_from_string(j.at("kind").get<std::string>());
    if (kind == TransformKind::linear) {
        LinearTransform t;
        const auto m = detail::tensor_data(j.at("matrix"), {3, 3}, "matrix");
        std::copy(m.begin(), m.end(), t.m.begin());
        f.transform = t;
    } else {
        NonlinearTransform t;
        t.hidden = j.at("hidden_units").get<int>();
        if (t.hidden < 1) throw std::runtime_error("profile: hidden_units must be >= 1");
        t.seed = j.at("seed").get<std::uint64_t>();
        const auto h = std::size_t(t.hidden);
        t.w1 = detail::tensor_data(j.at("hidden_weights"), {3, h}, "hidden_weights");
        t.b1 = detail::tensor_data(j.at("hidden_bias"), {h}, "hidden_bias");
        t.w2 = detail::tensor_data(j.at("output_weights"), {h, 3}, "output_weights");
        t.b2 = detail::tensor_data(j.at("output_bias"), {3}, "output_bias");
        f.transform = t;
    }
    return f;
}

inline std::string profile_to_string(const EquivalenceFunction& f) {
    return profile_to_json(f).dump(2) + "\n";
}

inline void save_profile(const std::filesystem::path& path, const EquivalenceFunction& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("profile: cannot open " + path.string() + " for writing");
    out << profile_to_string(f);
    if (!out) throw std::runtime_error("profile: write to " + path.string() + " failed");
}

inline EquivalenceFunction load_profile(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("profile: cannot open " + path.string());
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("profile: " + path.string() + ": " + e.what());
    }
    return profile_from_json(j);
}

}  // namespace cvquant
