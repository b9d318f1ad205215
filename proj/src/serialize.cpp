#include "pvcmc/serialize.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace pvcmc {

namespace {

using nlohmann::json;

std::string format_full(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

json tensor_to_json(const std::string& name, const Mat& m) {
  json t;
  t["name"] = name;
  t["rows"] = m.rows();
  t["cols"] = m.cols();
  json data = json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  t["data"] = std::move(data);
  return t;
}

Mat tensor_from_json(const json& t) {
  const Index rows = t.at("rows").get<Index>();
  const Index cols = t.at("cols").get<Index>();
  const auto& data = t.at("data");
  require(static_cast<Index>(data.size()) == rows * cols,
          "checkpoint: data length does not match the tagged shape");
  Mat m(rows, cols);
  Index flat = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = data[static_cast<std::size_t>(flat++)].get<double>();
  return m;
}

json net_to_json(const Mlp<double>& net, const std::string& prefix) {
  json layers = json::array();
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    json layer;
    layer["weight"] = tensor_to_json(prefix + ".layer" + std::to_string(l) + ".weight",
                                     net.layers[l].weight);
    layer["bias"] =
        tensor_to_json(prefix + ".layer" + std::to_string(l) + ".bias", net.layers[l].bias);
    layer["activation"] = net.layers[l].activation == Activation::kRelu ? "relu" : "identity";
    layers.push_back(std::move(layer));
  }
  return layers;
}

Mlp<double> net_from_json(const json& layers, NetRole role) {
  Mlp<double> net;
  net.role = role;
  for (const auto& layer_json : layers) {
    Layer<double> layer;
    layer.weight = tensor_from_json(layer_json.at("weight"));
    layer.bias = tensor_from_json(layer_json.at("bias"));
    layer.activation = layer_json.at("activation").get<std::string>() == "relu"
                           ? Activation::kRelu
                           : Activation::kIdentity;
    net.layers.push_back(std::move(layer));
  }
  require(!net.layers.empty(), "checkpoint: network with no layers");
  return net;
}

}  // namespace

void save_checkpoint(const TrainResult& result, const std::filesystem::path& path) {
  json j;
  j["format"] = "pvcmc-checkpoint-v1";
  j["encoders"] = json::array();
  j["decoders"] = json::array();
  for (std::size_t v = 0; v < result.params.encoders.size(); ++v)
    j["encoders"].push_back(net_to_json(result.params.encoders[v], "encoder" + std::to_string(v)));
  for (std::size_t v = 0; v < result.params.decoders.size(); ++v)
    j["decoders"].push_back(net_to_json(result.params.decoders[v], "decoder" + std::to_string(v)));
  j["cluster_head"] = net_to_json(result.params.cluster_head, "cluster_head");
  j["self_expression_z"] = tensor_to_json("self_expression_z", result.z);
  j["metadata"] = result.metadata;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ComputeError("cannot write checkpoint " + path.string());
  out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("checkpoint " + path.string() + ": " + e.what());
  }
  require(j.value("format", std::string()) == "pvcmc-checkpoint-v1",
          "checkpoint: unknown format tag");
  Checkpoint checkpoint;
  for (const auto& net : j.at("encoders"))
    checkpoint.params.encoders.push_back(net_from_json(net, NetRole::kEncoder));
  for (const auto& net : j.at("decoders"))
    checkpoint.params.decoders.push_back(net_from_json(net, NetRole::kDecoder));
  checkpoint.params.cluster_head = net_from_json(j.at("cluster_head"), NetRole::kClusterHead);
  checkpoint.z = tensor_from_json(j.at("self_expression_z"));
  return checkpoint;
}

std::string history_csv(const TrainResult& result) {
  std::ostringstream out;
  const int n_views = result.history.empty()
                          ? 0
                          : static_cast<int>(result.history.front().per_view_losses.size());
  out << "epoch,phase,re,se,mcl,F,C,R,total";
  for (int v = 0; v < n_views; ++v) out << ",loss_view" << v;
  for (int v = 0; v < n_views; ++v) out << ",weight" << v;
  out << "\n";
  for (const auto& record : result.history) {
    out << record.epoch << ',' << record.phase << ',' << format_full(record.losses.re) << ','
        << format_full(record.losses.se) << ',' << format_full(record.losses.mcl) << ','
        << format_full(record.losses.feature_align) << ','
        << format_full(record.losses.prob_align) << ','
        << format_full(record.losses.entropy_reg) << ',' << format_full(record.losses.total);
    for (int v = 0; v < n_views; ++v) out << ',' << format_full(record.per_view_losses[v]);
    for (int v = 0; v < n_views; ++v) out << ',' << format_full(record.weights[v]);
    out << "\n";
  }
  return out.str();
}

std::string imputation_csv(const TrainResult& result) {
  std::ostringstream out;
  out << "sample_id,missing_view,neighbor_ids\n";
  for (const auto& record : result.imputation_records) {
    out << record.sample << ',' << record.missing_view << ',';
    for (std::size_t i = 0; i < record.neighbors.size(); ++i) {
      if (i > 0) out << ';';
      out << record.neighbors[i];
    }
    out << "\n";
  }
  return out.str();
}

std::string spectral_csv(const EigenPairs<double>& pairs) {
  std::ostringstream out;
  out << "eigenvalue\n";
  for (Index j = 0; j < pairs.values.size(); ++j) out << format_full(pairs.values[j]) << "\n";
  out << "\nembedding\n";
  out << matrix_csv(pairs.vectors);
  return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ComputeError("cannot write " + path.string());
  out << content;
}

std::string matrix_csv(const Mat& m) {
  std::ostringstream out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      out << format_full(m(i, j));
      if (j + 1 < m.cols()) out << ',';
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace pvcmc
