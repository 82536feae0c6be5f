#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "hiernet/nnet.hpp"

namespace hiernet::nnet {

inline constexpr int kNetworkFormatVersion = 1;

/// {format_version, group_boundaries, layers: [spec...], parameters: [[...]...]}
///
/// Parameter arrays are flat, row-major, one per tensor in
/// `Network::parameters()` order. Doubles are written in shortest
/// round-trip decimal, so a load reproduces every bit.
nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& doc);

std::string serialize_network(const Network& net);
Network deserialize_network(const std::string& text);

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace hiernet::nnet
