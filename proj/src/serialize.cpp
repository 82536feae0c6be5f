#include "hiernet/serialize.hpp"

#include <string>

#include "hiernet/error.hpp"
#include "hiernet/io.hpp"

namespace hiernet::nnet {

using nlohmann::json;

namespace {

json layer_spec(const Layer& layer) {
  json spec;
  spec["type"] = layer_name(layer);
  if (const auto* d = std::get_if<Dense>(&layer)) {
    spec["in"] = d->in_dim();
    spec["out"] = d->out_dim();
  } else if (const auto* drop = std::get_if<Dropout>(&layer)) {
    spec["p"] = drop->p;
  } else if (const auto* block = std::get_if<AggResidualBlock>(&layer)) {
    spec["dim"] = block->dim();
    spec["cardinality"] = block->cardinality();
    spec["branch_width"] = block->branch_width();
  } else if (const auto* s = std::get_if<SoftmaxOutput>(&layer)) {
    spec["classes"] = s->num_classes;
  }
  return spec;
}

Dense empty_dense(std::size_t in, std::size_t out) { return Dense{Tensor(in, out), Tensor(1, out)}; }

Layer layer_from_spec(const json& spec) {
  const auto type = spec.at("type").get<std::string>();
  if (type == "dense") return empty_dense(spec.at("in").get<std::size_t>(), spec.at("out").get<std::size_t>());
  if (type == "relu") return ReLU{};
  if (type == "dropout") return Dropout{spec.at("p").get<double>()};
  if (type == "agg_block") {
    const auto dim = spec.at("dim").get<std::size_t>();
    const auto card = spec.at("cardinality").get<std::size_t>();
    const auto width = spec.at("branch_width").get<std::size_t>();
    AggResidualBlock block;
    for (std::size_t c = 0; c < card; ++c) block.branches.push_back({empty_dense(dim, width), empty_dense(width, dim)});
    return block;
  }
  if (type == "softmax") return SoftmaxOutput{spec.at("classes").get<std::size_t>()};
  throw DataError("unknown layer type '" + type + "'");
}

}  // namespace

json network_to_json(const Network& net) {
  json doc;
  doc["format_version"] = kNetworkFormatVersion;
  doc["group_boundaries"] = {net.first_end(), net.middle_end()};
  json layers = json::array();
  for (const auto& layer : net.layers()) layers.push_back(layer_spec(layer));
  doc["layers"] = std::move(layers);
  json params = json::array();
  for (const auto& ref : net.parameters()) {
    auto values = ref.tensor->values();
    params.push_back(json(std::vector<double>(values.begin(), values.end())));
  }
  doc["parameters"] = std::move(params);
  return doc;
}

Network network_from_json(const json& doc) {
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kNetworkFormatVersion) {
      throw DataError("unsupported network format_version " + std::to_string(version));
    }
    std::vector<Layer> layers;
    for (const auto& spec : doc.at("layers")) layers.push_back(layer_from_spec(spec));
    const auto& bounds = doc.at("group_boundaries");
    Network net(std::move(layers), bounds.at(0).get<std::size_t>(), bounds.at(1).get<std::size_t>());

    const auto& params = doc.at("parameters");
    auto refs = net.parameters();
    if (params.size() != refs.size()) {
      throw DataError("network file has " + std::to_string(params.size()) +
                      " parameter arrays, layers need " + std::to_string(refs.size()));
    }
    for (std::size_t p = 0; p < refs.size(); ++p) {
      auto values = params[p].get<std::vector<double>>();
      Tensor& t = *refs[p].tensor;
      if (values.size() != t.size()) {
        throw DataError("parameter array " + std::to_string(p) + " has " +
                        std::to_string(values.size()) + " values, expected " + std::to_string(t.size()));
      }
      std::copy(values.begin(), values.end(), t.values().begin());
    }
    net.set_mode(Mode::Eval);
    return net;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed network document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid network document: ") + e.what());
  }
}

std::string serialize_network(const Network& net) { return network_to_json(net).dump(); }

Network deserialize_network(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("network file is not valid JSON: ") + e.what());
  }
  return network_from_json(doc);
}

void save_network(const Network& net, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_network(net) + "\n");
}

Network load_network(const std::filesystem::path& path) {
  return deserialize_network(io::read_file(path));
}

}  // namespace hiernet::nnet
