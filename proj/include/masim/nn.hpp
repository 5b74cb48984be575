#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "masim/errors.hpp"
#include "masim/rng.hpp"

namespace masim {

// Dense 64-bit float parameter block with a same-shape gradient buffer.
// Vectors (biases) use rows == 1.
struct ParamTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<double> grad;

  ParamTensor() = default;
  ParamTensor(std::size_t r, std::size_t c);

  std::size_t size() const { return rows * cols; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  void zero_grad();
};

// Weight init: uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from a dedicated
// stream; fan_in is the row (input) dimension. Biases stay zero via the
// ParamTensor constructor.
ParamTensor init_params(std::size_t rows, std::size_t cols, std::uint64_t seed);

enum class Activation { Identity, Tanh, Relu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct MLPParams {
  struct Layer {
    ParamTensor weight;  // (in, out): applied as row-vector times matrix
    ParamTensor bias;    // (1, out)
    Activation act = Activation::Identity;
  };
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.cols; }
  void validate() const;  // dimension chaining

  // Hidden layers use Tanh, the final layer Identity. Weights seeded from
  // `seed`; set `zero_final` to zero the last layer (uniform initial policy).
  static MLPParams make(std::size_t in, const std::vector<int>& hidden, std::size_t out,
                        std::uint64_t seed, bool zero_final = false);
};

// Numerically stable softmax: shifts by max before exponentiating.
// Throws NumericError on empty or non-finite input.
std::vector<double> softmax_stable(std::span<const double> v);

// Plain (non-recording) forward pass.
std::vector<double> mlp_forward(const MLPParams& params, std::span<const double> input);

// -------------------------------------------------------------------------
// Reverse-mode tape. Nodes are created in topological order; backward() walks
// them in reverse. Param nodes reference the ParamTensor in place: the tensor
// must outlive the graph and keep its values unchanged while the graph is
// alive. Param gradients accumulate across backward() calls; call
// zero_grad() on the tensors to reset.
class Graph {
 public:
  using NodeId = std::size_t;

  NodeId input(std::vector<double> v);
  NodeId param(ParamTensor& p);
  // Row-vector x (n) times matrix w (n, k) plus bias b (1, k) -> (k).
  NodeId linear(NodeId x, NodeId w, NodeId b);
  NodeId activation(NodeId x, Activation a);
  NodeId softmax(NodeId x);
  NodeId log(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId scale(NodeId x, double c);
  NodeId sum(NodeId x);                 // -> length 1
  NodeId pick(NodeId x, std::size_t i); // -> length 1
  NodeId concat(const std::vector<NodeId>& xs);

  const std::vector<double>& value(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  // Root must be scalar (length 1). Internal node grads are reset per call;
  // gradients flowing into param leaves are added onto ParamTensor::grad.
  void backward(NodeId root);

  void clear();  // drop all nodes, keep buffer capacity

 private:
  enum class Op {
    Input, Param, Linear, Activation, Softmax, Log, Add, Sub, Mul, Scale, Sum, Pick, Concat
  };
  struct Node {
    Op op;
    Activation act = Activation::Identity;
    double c = 0.0;
    std::size_t index = 0;
    ParamTensor* sink = nullptr;
    std::vector<NodeId> ins;
    std::vector<double> val;
    std::vector<double> grd;
  };

  const std::vector<double>& val_of(const Node& n) const {
    return n.op == Op::Param ? n.sink->values : n.val;
  }
  NodeId push(Node n);

  std::vector<Node> nodes_;
};

// -------------------------------------------------------------------------
// Adam with bias correction over an ordered set of tensors.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  void init_like(const std::vector<ParamTensor*>& tensors);
  bool initialized() const { return !first_moment.empty(); }
};

// Applies one Adam update from the tensors' grad buffers, then zeroes them.
void adam_step(const std::vector<ParamTensor*>& tensors, AdamState& state);

// Global-norm gradient clipping; returns the pre-clip norm.
double clip_grad_norm(const std::vector<ParamTensor*>& tensors, double max_norm);

// -------------------------------------------------------------------------
// Checkpoint file: 8-byte magic, u32 little-endian manifest length, manifest
// JSON (shapes, activation tags, Adam hyperparameters, step count, plus
// caller metadata), then all tensors as little-endian doubles in row-major
// order. Round-trips bitwise.
inline constexpr char kCheckpointMagic[8] = {'M', 'A', 'S', 'I', 'M', 'C', 'K', '1'};
inline constexpr int kCheckpointFormatVersion = 1;

void write_checkpoint(const std::string& path, const std::string& manifest_json,
                      const std::vector<const ParamTensor*>& tensors);

struct CheckpointData {
  std::string manifest_json;
  std::vector<ParamTensor> tensors;  // shapes from the manifest "tensors" array
};
CheckpointData read_checkpoint(const std::string& path);

}  // namespace masim
