#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tscx/layers.hpp"
#include "tscx/rng.hpp"
#include "tscx/tensor.hpp"

namespace tscx {

enum class LayerKind {
  FC,
  Conv,
  RnnCell,
  GruCell,
  LstmCell,
  ResBlock,
  AvgPool,
  MaxPool,
  Flatten,
  Concat,
  Dropout,
  Activation,
};

struct LayerSpec {
  LayerKind kind;
  int width = 0;
  int kernel = 0;  // 0 = family default
  int repeat = 1;
  // ResBlock body lives in branches[0]; Concat uses one entry per branch.
  std::vector<std::vector<LayerSpec>> branches;
};

/// Parses architecture notation: spec := unit ("-" unit)*;
/// unit := KIND "(" int ")" | "Resblock(" spec ")*" int
///       | "(concatenate" spec ("," spec)* ")".
/// Whitespace-insensitive. Tolerates the two malformed published rows:
/// a bare "*" closes an open Resblock, end-of-input closes an open
/// concatenate group, and CNN is an alias of CONV.
std::vector<LayerSpec> parse_arch(const std::string& text);

/// Canonical textual form; render(parse(s)) is a fixed point.
std::string render(const std::vector<LayerSpec>& layers);

enum class ModelName { MLP, CNN, ResNet, RNN, GRU, LSTM, Autoencoder, TimeCNN, MCNN };

std::string to_string(ModelName name);
ModelName model_name_from(const std::string& s);  // case-insensitive; "ae" ok

/// Default architecture string for each named model.
std::string default_arch(ModelName name);

/// Expands a hidden-width list into an architecture string for the model
/// family (used by the robustness sweeps). For ResNet, maximal equal-width
/// runs become repeated two-conv residual blocks with a transition conv on
/// width changes.
std::string arch_from_widths(ModelName name, const std::vector<int>& widths);

struct BuildOptions {
  std::string arch;       // override string; empty = named default
  int kernel = 0;         // override the family conv kernel (0 = default)
  int width_divisor = 1;  // scales hidden widths down for small runs
};

struct ParamBlob {
  std::string name;
  Shape shape;
  std::shared_ptr<std::vector<float>> data;
};

namespace detail {
struct PlanStep;
}

/// A built model: lowered execution plan plus parameter blobs in declared
/// order. Parameters are mutated in place by the optimizer; forward() binds
/// them onto the caller's tape as leaves.
class Model {
 public:
  /// Runs the network. `bound`, when given, receives the parameter leaf
  /// tensors in declared order (for gradient lookup after backward()).
  /// Dropout applies only when train && rate > 0 && rng != nullptr.
  Tensor forward(Tape& t, const Tensor& x, bool train = false, Rng* rng = nullptr,
                 float dropout_rate = 0.0f, std::vector<Tensor>* bound = nullptr) const;

  size_t param_count() const;
  std::vector<ParamBlob>& params() { return params_; }
  const std::vector<ParamBlob>& params() const { return params_; }

  ModelName name() const { return name_; }
  const std::string& arch() const { return arch_; }
  int input_len() const { return input_len_; }
  int input_ch() const { return input_ch_; }
  uint64_t seed() const { return seed_; }

  /// Writes a JSON manifest at `json_path` and the raw float32 parameter
  /// blobs (declared order, little-endian) at the same path with a ".bin"
  /// extension.
  void save(const std::string& json_path) const;
  static Model load(const std::string& json_path);

 private:
  friend Model build_model(ModelName, int, int, uint64_t, const BuildOptions&);

  ModelName name_;
  std::string arch_;
  int input_len_ = 0, input_ch_ = 0;
  uint64_t seed_ = 0;
  int kernel_opt_ = 0;
  int width_div_ = 1;
  std::vector<ParamBlob> params_;
  std::shared_ptr<const std::vector<detail::PlanStep>> plan_;
};

Model build_model(ModelName name, int input_len, int input_ch, uint64_t seed,
                  const BuildOptions& opt = {});

}  // namespace tscx
