#pragma once

#include "rbmdc/neural/mlp.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace rbmdc {

/// Checkpoint layout (JSON):
///   {"format": "rbmdc-mlp", "version": 1, "activation": "elu",
///    "layer_dims": [in, h1, ..., out],
///    "params": [...]}
/// `params` is the flat parameter vector: for each layer, the out x in weight
/// matrix in row-major order followed by the bias. Doubles are written in
/// shortest round-trip form, so save/load is bit-exact.
inline nlohmann::json mlp_to_json(const Mlp& net) {
    nlohmann::json j;
    j["format"] = "rbmdc-mlp";
    j["version"] = 1;
    j["activation"] = "elu";
    j["layer_dims"] = net.layer_dims();
    j["params"] = std::vector<double>(net.params().data(), net.params().data() + net.num_params());
    return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    try {
        require(j.value("format", "") == "rbmdc-mlp", "not an rbmdc-mlp checkpoint");
        require(j.value("version", 0) == 1, "unsupported checkpoint version");
        require(j.value("activation", "") == "elu", "unsupported activation in checkpoint");
        Mlp net(j.at("layer_dims").get<std::vector<Eigen::Index>>());
        const auto params = j.at("params").get<std::vector<double>>();
        require(static_cast<Eigen::Index>(params.size()) == net.num_params(),
                "checkpoint parameter count does not match layer_dims");
        net.mutable_params() = Eigen::Map<const Vector>(params.data(), net.num_params());
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed network checkpoint: ") + e.what());
    }
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed JSON in '" + path + "': " + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << j.dump(1) << '\n';
}

inline void save_mlp(const Mlp& net, const std::string& path) { write_json_file(path, mlp_to_json(net)); }
inline Mlp load_mlp(const std::string& path) { return mlp_from_json(read_json_file(path)); }

}  // namespace rbmdc
