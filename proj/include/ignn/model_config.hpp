#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ignn/error.hpp"

namespace ignn::model {

enum class Scheme { gcn, rgcn, mpnn, ignn };
enum class ReadoutKind { sum, set2set };
enum class TaskKind { graph, node };
enum class Activation { relu, identity };  // identity exists for linear-algebra unit tests

std::string to_string(Scheme s);
std::string to_string(ReadoutKind r);
std::string to_string(TaskKind t);
std::string to_string(Activation a);
Scheme scheme_from_string(const std::string& s);
ReadoutKind readout_from_string(const std::string& s);
TaskKind task_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

struct ModelConfig {
  Scheme scheme = Scheme::ignn;
  int64_t input_dim = 0;    // node feature width
  int64_t edge_dim = 0;     // edge feature width
  int64_t hidden_dim = 64;  // node state width d
  int64_t num_layers = 3;
  int64_t num_relations = 1;              // rgcn only
  std::vector<int64_t> edge_net_hidden;   // empty = single linear layer
  std::vector<int64_t> decoder_hidden;    // empty = single linear layer
  int64_t set2set_steps = 3;
  ReadoutKind readout = ReadoutKind::set2set;
  TaskKind task = TaskKind::graph;
  int64_t target_arity = 1;
  int64_t head_hidden = 0;      // 0 = use hidden_dim (resolved())
  bool identity_embed = false;  // h0 = x, requires input_dim == hidden_dim
  bool li_detach_f = false;     // stop decoder gradient from flowing into f
  Activation activation = Activation::relu;

  // Copy with defaults filled in; hashing/serialization always go through this.
  ModelConfig resolved() const;
  void validate() const;  // throws on inconsistent fields

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  uint64_t hash() const;

  // default widths used by the CLI when the flags are left unset
  static std::vector<int64_t> default_edge_hidden(int64_t d) { return {2 * d}; }
  static std::vector<int64_t> default_decoder_hidden(int64_t d) {
    return {std::max<int64_t>(d * d / 2, 1)};
  }

  bool uses_edge_network() const { return scheme == Scheme::mpnn || scheme == Scheme::ignn; }
  bool has_decoder() const { return scheme == Scheme::ignn; }
  int64_t readout_width() const {
    return readout == ReadoutKind::set2set ? 2 * hidden_dim : hidden_dim;
  }
};

uint64_t fnv1a64(const std::string& text);

}  // namespace ignn::model
