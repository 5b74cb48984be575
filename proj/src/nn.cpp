#include "masim/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace masim {

ParamTensor::ParamTensor(std::size_t r, std::size_t c) : rows(r), cols(c) {
  if (r == 0 || c == 0) {
    throw ShapeError("ParamTensor dimensions must be positive");
  }
  values.assign(r * c, 0.0);
  grad.assign(r * c, 0.0);
}

void ParamTensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

ParamTensor init_params(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  ParamTensor t(rows, cols);
  Rng rng(mix_seed(seed));
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  for (double& v : t.values) {
    v = rng.uniform(-bound, bound);
  }
  return t;
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("unknown activation tag: " + name);
}

void MLPParams::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.bias.rows != 1 || l.bias.cols != l.weight.cols) {
      throw ShapeError("layer bias shape does not match weight columns");
    }
    if (i > 0 && layers[i - 1].weight.cols != l.weight.rows) {
      throw ShapeError("consecutive layer dimensions do not chain");
    }
  }
}

MLPParams MLPParams::make(std::size_t in, const std::vector<int>& hidden, std::size_t out,
                          std::uint64_t seed, bool zero_final) {
  MLPParams mlp;
  std::size_t prev = in;
  std::uint64_t salt = 0;
  for (int h : hidden) {
    if (h <= 0) throw ConfigError("hidden layer width must be positive");
    Layer l;
    l.weight = init_params(prev, static_cast<std::size_t>(h), derive_seed(seed, ++salt));
    l.bias = ParamTensor(1, static_cast<std::size_t>(h));
    l.act = Activation::Tanh;
    prev = static_cast<std::size_t>(h);
    mlp.layers.push_back(std::move(l));
  }
  Layer final_layer;
  final_layer.weight = zero_final ? ParamTensor(prev, out)
                                  : init_params(prev, out, derive_seed(seed, ++salt));
  final_layer.bias = ParamTensor(1, out);
  final_layer.act = Activation::Identity;
  mlp.layers.push_back(std::move(final_layer));
  mlp.validate();
  return mlp;
}

std::vector<double> softmax_stable(std::span<const double> v) {
  if (v.empty()) throw NumericError("softmax of empty vector");
  double mx = v[0];
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("softmax of non-finite input");
    mx = std::max(mx, x);
  }
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

namespace {

double apply_act(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

}  // namespace

std::vector<double> mlp_forward(const MLPParams& params, std::span<const double> input) {
  if (params.layers.empty() || input.size() != params.input_dim()) {
    throw ShapeError("mlp_forward: input length does not match first layer");
  }
  std::vector<double> x(input.begin(), input.end());
  std::vector<double> y;
  for (const MLPParams::Layer& l : params.layers) {
    const std::size_t n = l.weight.rows, k = l.weight.cols;
    y.assign(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = x[i];
      const double* wrow = &l.weight.values[i * k];
      for (std::size_t j = 0; j < k; ++j) y[j] += xi * wrow[j];
    }
    for (std::size_t j = 0; j < k; ++j) y[j] = apply_act(l.act, y[j] + l.bias.values[j]);
    x.swap(y);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Graph

Graph::NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Graph::NodeId Graph::input(std::vector<double> v) {
  Node n;
  n.op = Op::Input;
  n.val = std::move(v);
  return push(std::move(n));
}

Graph::NodeId Graph::param(ParamTensor& p) {
  Node n;
  n.op = Op::Param;
  n.sink = &p;
  return push(std::move(n));
}

Graph::NodeId Graph::linear(NodeId x, NodeId w, NodeId b) {
  const auto& xv = value(x);
  const auto& wv = value(w);
  const auto& bv = value(b);
  const std::size_t n = xv.size(), k = bv.size();
  if (wv.size() != n * k) throw ShapeError("linear: weight shape mismatch");
  Node out;
  out.op = Op::Linear;
  out.ins = {x, w, b};
  out.val.assign(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = xv[i];
    const double* wrow = &wv[i * k];
    for (std::size_t j = 0; j < k; ++j) out.val[j] += xi * wrow[j];
  }
  for (std::size_t j = 0; j < k; ++j) out.val[j] += bv[j];
  return push(std::move(out));
}

Graph::NodeId Graph::activation(NodeId x, Activation a) {
  const auto& xv = value(x);
  Node out;
  out.op = Op::Activation;
  out.act = a;
  out.ins = {x};
  out.val.resize(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out.val[i] = apply_act(a, xv[i]);
  return push(std::move(out));
}

Graph::NodeId Graph::softmax(NodeId x) {
  Node out;
  out.op = Op::Softmax;
  out.ins = {x};
  out.val = softmax_stable(value(x));
  return push(std::move(out));
}

Graph::NodeId Graph::log(NodeId x) {
  const auto& xv = value(x);
  Node out;
  out.op = Op::Log;
  out.ins = {x};
  out.val.resize(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out.val[i] = std::log(xv[i]);
  return push(std::move(out));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.size() != bv.size()) throw ShapeError("add: length mismatch");
  Node out;
  out.op = Op::Add;
  out.ins = {a, b};
  out.val.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out.val[i] = av[i] + bv[i];
  return push(std::move(out));
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.size() != bv.size()) throw ShapeError("sub: length mismatch");
  Node out;
  out.op = Op::Sub;
  out.ins = {a, b};
  out.val.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out.val[i] = av[i] - bv[i];
  return push(std::move(out));
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.size() != bv.size()) throw ShapeError("mul: length mismatch");
  Node out;
  out.op = Op::Mul;
  out.ins = {a, b};
  out.val.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out.val[i] = av[i] * bv[i];
  return push(std::move(out));
}

Graph::NodeId Graph::scale(NodeId x, double c) {
  const auto& xv = value(x);
  Node out;
  out.op = Op::Scale;
  out.c = c;
  out.ins = {x};
  out.val.resize(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out.val[i] = c * xv[i];
  return push(std::move(out));
}

Graph::NodeId Graph::sum(NodeId x) {
  const auto& xv = value(x);
  Node out;
  out.op = Op::Sum;
  out.ins = {x};
  double s = 0.0;
  for (double v : xv) s += v;
  out.val = {s};
  return push(std::move(out));
}

Graph::NodeId Graph::pick(NodeId x, std::size_t i) {
  const auto& xv = value(x);
  if (i >= xv.size()) throw ShapeError("pick: index out of range");
  Node out;
  out.op = Op::Pick;
  out.index = i;
  out.ins = {x};
  out.val = {xv[i]};
  return push(std::move(out));
}

Graph::NodeId Graph::concat(const std::vector<NodeId>& xs) {
  Node out;
  out.op = Op::Concat;
  out.ins = xs;
  for (NodeId id : xs) {
    const auto& v = value(id);
    out.val.insert(out.val.end(), v.begin(), v.end());
  }
  return push(std::move(out));
}

const std::vector<double>& Graph::value(NodeId id) const { return val_of(nodes_.at(id)); }

void Graph::backward(NodeId root) {
  if (value(root).size() != 1) {
    throw ShapeError("backward: root must be a scalar node");
  }
  for (Node& n : nodes_) {
    n.grd.assign(val_of(n).size(), 0.0);
  }
  nodes_[root].grd[0] = 1.0;

  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    Node& n = nodes_[idx];
    const std::vector<double>& go = n.grd;
    switch (n.op) {
      case Op::Input:
        break;
      case Op::Param:
        for (std::size_t i = 0; i < go.size(); ++i) n.sink->grad[i] += go[i];
        break;
      case Op::Linear: {
        Node& x = nodes_[n.ins[0]];
        Node& w = nodes_[n.ins[1]];
        Node& b = nodes_[n.ins[2]];
        const auto& xv = val_of(x);
        const auto& wv = val_of(w);
        const std::size_t nn = xv.size(), k = go.size();
        for (std::size_t i = 0; i < nn; ++i) {
          const double* wrow = &wv[i * k];
          double* gwrow = &w.grd[i * k];
          double gx = 0.0;
          for (std::size_t j = 0; j < k; ++j) {
            gx += go[j] * wrow[j];
            gwrow[j] += xv[i] * go[j];
          }
          x.grd[i] += gx;
        }
        for (std::size_t j = 0; j < k; ++j) b.grd[j] += go[j];
        break;
      }
      case Op::Activation: {
        Node& x = nodes_[n.ins[0]];
        const auto& xv = val_of(x);
        for (std::size_t i = 0; i < go.size(); ++i) {
          switch (n.act) {
            case Activation::Identity: x.grd[i] += go[i]; break;
            case Activation::Tanh: x.grd[i] += go[i] * (1.0 - n.val[i] * n.val[i]); break;
            case Activation::Relu: x.grd[i] += xv[i] > 0.0 ? go[i] : 0.0; break;
          }
        }
        break;
      }
      case Op::Softmax: {
        Node& x = nodes_[n.ins[0]];
        double dot = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) dot += go[i] * n.val[i];
        for (std::size_t i = 0; i < go.size(); ++i) {
          x.grd[i] += n.val[i] * (go[i] - dot);
        }
        break;
      }
      case Op::Log: {
        Node& x = nodes_[n.ins[0]];
        const auto& xv = val_of(x);
        for (std::size_t i = 0; i < go.size(); ++i) x.grd[i] += go[i] / xv[i];
        break;
      }
      case Op::Add: {
        Node& a = nodes_[n.ins[0]];
        Node& b = nodes_[n.ins[1]];
        for (std::size_t i = 0; i < go.size(); ++i) {
          a.grd[i] += go[i];
          b.grd[i] += go[i];
        }
        break;
      }
      case Op::Sub: {
        Node& a = nodes_[n.ins[0]];
        Node& b = nodes_[n.ins[1]];
        for (std::size_t i = 0; i < go.size(); ++i) {
          a.grd[i] += go[i];
          b.grd[i] -= go[i];
        }
        break;
      }
      case Op::Mul: {
        Node& a = nodes_[n.ins[0]];
        Node& b = nodes_[n.ins[1]];
        const auto& av = val_of(a);
        const auto& bv = val_of(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
          a.grd[i] += go[i] * bv[i];
          b.grd[i] += go[i] * av[i];
        }
        break;
      }
      case Op::Scale: {
        Node& x = nodes_[n.ins[0]];
        for (std::size_t i = 0; i < go.size(); ++i) x.grd[i] += n.c * go[i];
        break;
      }
      case Op::Sum: {
        Node& x = nodes_[n.ins[0]];
        for (double& g : x.grd) g += go[0];
        break;
      }
      case Op::Pick: {
        nodes_[n.ins[0]].grd[n.index] += go[0];
        break;
      }
      case Op::Concat: {
        std::size_t off = 0;
        for (NodeId id : n.ins) {
          Node& x = nodes_[id];
          const std::size_t len = val_of(x).size();
          for (std::size_t i = 0; i < len; ++i) x.grd[i] += go[off + i];
          off += len;
        }
        break;
      }
    }
  }
}

void Graph::clear() { nodes_.clear(); }

// ---------------------------------------------------------------------------
// Adam

void AdamState::init_like(const std::vector<ParamTensor*>& tensors) {
  first_moment.clear();
  second_moment.clear();
  for (const ParamTensor* t : tensors) {
    first_moment.emplace_back(t->size(), 0.0);
    second_moment.emplace_back(t->size(), 0.0);
  }
}

void adam_step(const std::vector<ParamTensor*>& tensors, AdamState& state) {
  if (!state.initialized()) state.init_like(tensors);
  if (state.first_moment.size() != tensors.size()) {
    throw ShapeError("adam_step: moment count does not match tensor count");
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    ParamTensor& p = *tensors[ti];
    std::vector<double>& m = state.first_moment[ti];
    std::vector<double>& v = state.second_moment[ti];
    if (m.size() != p.size()) throw ShapeError("adam_step: moment shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    p.zero_grad();
  }
}

double clip_grad_norm(const std::vector<ParamTensor*>& tensors, double max_norm) {
  double sq = 0.0;
  for (const ParamTensor* t : tensors) {
    for (double g : t->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (ParamTensor* t : tensors) {
      for (double& g : t->grad) g *= s;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

void write_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_doubles_le(std::ostream& os, const std::vector<double>& v) {
  for (double d : v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

void read_doubles_le(std::istream& is, std::vector<double>& v) {
  for (double& d : v) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    d = std::bit_cast<double>(bits);
  }
}

}  // namespace

void write_checkpoint(const std::string& path, const std::string& manifest_json,
                      const std::vector<const ParamTensor*>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw StateError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u32_le(os, static_cast<std::uint32_t>(manifest_json.size()));
  os.write(manifest_json.data(), static_cast<std::streamsize>(manifest_json.size()));
  for (const ParamTensor* t : tensors) write_doubles_le(os, t->values);
  if (!os) throw StateError("checkpoint write failed: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StateError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw StateError("bad checkpoint magic: " + path);
  }
  const std::uint32_t mlen = read_u32_le(is);
  CheckpointData data;
  data.manifest_json.resize(mlen);
  is.read(data.manifest_json.data(), mlen);
  if (!is) throw StateError("truncated checkpoint manifest: " + path);

  const nlohmann::json manifest = nlohmann::json::parse(data.manifest_json);
  if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw StateError("unsupported checkpoint format version");
  }
  for (const auto& tj : manifest.at("tensors")) {
    ParamTensor t(tj.at("rows").get<std::size_t>(), tj.at("cols").get<std::size_t>());
    read_doubles_le(is, t.values);
    data.tensors.push_back(std::move(t));
  }
  if (!is) throw StateError("truncated checkpoint tensor data: " + path);
  return data;
}

}  // namespace masim
