#include "ignn/model_config.hpp"

#include <json.hpp>

namespace ignn::model {

using nlohmann::json;

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::gcn: return "gcn";
    case Scheme::rgcn: return "rgcn";
    case Scheme::mpnn: return "mpnn";
    case Scheme::ignn: return "ignn";
  }
  return "?";
}

std::string to_string(ReadoutKind r) { return r == ReadoutKind::sum ? "sum" : "set2set"; }
std::string to_string(TaskKind t) { return t == TaskKind::graph ? "graph" : "node"; }
std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Scheme scheme_from_string(const std::string& s) {
  if (s == "gcn") return Scheme::gcn;
  if (s == "rgcn") return Scheme::rgcn;
  if (s == "mpnn") return Scheme::mpnn;
  if (s == "ignn") return Scheme::ignn;
  throw Error(Errc::invalid_argument, "unknown scheme '" + s + "'");
}

ReadoutKind readout_from_string(const std::string& s) {
  if (s == "sum") return ReadoutKind::sum;
  if (s == "set2set") return ReadoutKind::set2set;
  throw Error(Errc::invalid_argument, "unknown readout '" + s + "'");
}

TaskKind task_from_string(const std::string& s) {
  if (s == "graph") return TaskKind::graph;
  if (s == "node") return TaskKind::node;
  throw Error(Errc::invalid_argument, "unknown task '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw Error(Errc::invalid_argument, "unknown activation '" + s + "'");
}

ModelConfig ModelConfig::resolved() const {
  ModelConfig c = *this;
  if (c.head_hidden <= 0) c.head_hidden = c.hidden_dim;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(Errc::invalid_argument, "model config: " + msg); };
  if (input_dim <= 0) fail("input_dim must be positive");
  if (hidden_dim <= 0) fail("hidden_dim must be positive");
  if (num_layers < 0) fail("num_layers must be nonnegative");
  if (target_arity <= 0) fail("target_arity must be positive");
  if (uses_edge_network() || has_decoder()) {
    if (edge_dim <= 0) fail("edge_dim must be positive for mpnn/ignn");
  }
  if (scheme == Scheme::rgcn && num_relations < 1) fail("rgcn needs num_relations >= 1");
  if (readout == ReadoutKind::set2set && set2set_steps < 1) fail("set2set_steps must be >= 1");
  if (identity_embed && input_dim != hidden_dim)
    fail("identity embedding requires input_dim == hidden_dim");
  for (int64_t w : edge_net_hidden)
    if (w <= 0) fail("edge_net_hidden widths must be positive");
  for (int64_t w : decoder_hidden)
    if (w <= 0) fail("decoder_hidden widths must be positive");
}

std::string ModelConfig::to_json() const {
  const ModelConfig c = resolved();
  json j;
  j["scheme"] = to_string(c.scheme);
  j["input_dim"] = c.input_dim;
  j["edge_dim"] = c.edge_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["num_layers"] = c.num_layers;
  j["num_relations"] = c.num_relations;
  j["edge_net_hidden"] = c.edge_net_hidden;
  j["decoder_hidden"] = c.decoder_hidden;
  j["set2set_steps"] = c.set2set_steps;
  j["readout"] = to_string(c.readout);
  j["task"] = to_string(c.task);
  j["target_arity"] = c.target_arity;
  j["head_hidden"] = c.head_hidden;
  j["identity_embed"] = c.identity_embed;
  j["li_detach_f"] = c.li_detach_f;
  j["activation"] = to_string(c.activation);
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::data, std::string("model config JSON: ") + e.what());
  }
  ModelConfig c;
  try {
    c.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    c.input_dim = j.at("input_dim").get<int64_t>();
    c.edge_dim = j.at("edge_dim").get<int64_t>();
    c.hidden_dim = j.at("hidden_dim").get<int64_t>();
    c.num_layers = j.at("num_layers").get<int64_t>();
    c.num_relations = j.at("num_relations").get<int64_t>();
    c.edge_net_hidden = j.at("edge_net_hidden").get<std::vector<int64_t>>();
    c.decoder_hidden = j.at("decoder_hidden").get<std::vector<int64_t>>();
    c.set2set_steps = j.at("set2set_steps").get<int64_t>();
    c.readout = readout_from_string(j.at("readout").get<std::string>());
    c.task = task_from_string(j.at("task").get<std::string>());
    c.target_arity = j.at("target_arity").get<int64_t>();
    c.head_hidden = j.at("head_hidden").get<int64_t>();
    c.identity_embed = j.at("identity_embed").get<bool>();
    c.li_detach_f = j.at("li_detach_f").get<bool>();
    c.activation = activation_from_string(j.at("activation").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(Errc::data, std::string("model config JSON: ") + e.what());
  }
  return c;
}

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t ModelConfig::hash() const { return fnv1a64(to_json()); }

}  // namespace ignn::model
