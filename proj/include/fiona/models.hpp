#pragma once

// Downstream heads over pooled foundation-model embeddings.
//
//   FCN            Dense(128)-ReLU-Drop, Dense(64)-ReLU-Drop, Dense(32)-ReLU-Drop, Dense(2)-softmax
//   CNN            [d x 1] Conv(16,k3)-ReLU-Pool2, Conv(32,k3)-ReLU-Pool2, Flatten, Drop,
//                  Dense(50)-ReLU, Dense(2)-softmax
//   ConcatFusion   two CNN trunks up to Flatten, concat, Drop, Dense(50)-ReLU, Dense(2)-softmax
//   Fiona          two CNN trunks up to Flatten, each gated (f * sigmoid(Dense_W(f))) and
//                  linearly projected to projection_dim; the projections are concatenated
//                  into the ConcatFusion head and are what the CKA term aligns.
//
// Activations the source architecture leaves unstated are ReLU. Weights are
// Glorot-uniform, biases zero.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fiona/autodiff.hpp"
#include "fiona/error.hpp"
#include "fiona/rng.hpp"
#include "fiona/tensor.hpp"

namespace fiona {

enum class Architecture : std::uint32_t { fcn = 1, cnn = 2, concat_fusion = 3, fiona = 4 };

inline std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::fcn: return "fcn";
    case Architecture::cnn: return "cnn";
    case Architecture::concat_fusion: return "concat";
    case Architecture::fiona: return "fiona";
  }
  return "unknown";
}

inline Architecture parse_architecture(std::string_view s) {
  if (s == "fcn") return Architecture::fcn;
  if (s == "cnn") return Architecture::cnn;
  if (s == "concat") return Architecture::concat_fusion;
  if (s == "fiona") return Architecture::fiona;
  throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

inline bool is_fusion(Architecture a) {
  return a == Architecture::concat_fusion || a == Architecture::fiona;
}

inline constexpr std::size_t kCnnMinInputDim = 10;
inline constexpr std::size_t kDefaultProjectionDim = 120;
inline constexpr double kDefaultDropout = 0.3;

struct ModelConfig {
  Architecture arch = Architecture::cnn;
  std::vector<std::size_t> input_dims;
  std::size_t projection_dim = kDefaultProjectionDim;
  double dropout = kDefaultDropout;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Parameter {
  std::string name;
  Tensor value;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

// Per-branch intermediate features of a fusion model.
struct BranchOutputs {
  std::array<Var, 2> flattened;
  std::optional<std::array<Var, 2>> gated;      // Fiona only
  std::optional<std::array<Var, 2>> projected;  // Fiona only
};

struct ForwardResult {
  Var probs;                             // [n x 2]
  std::vector<Var> params;               // leaves, same order as Model::parameters()
  std::optional<BranchOutputs> branches;  // fusion models
};

// Length of the flattened CNN trunk output for an input of width d.
inline std::size_t cnn_flatten_width(std::size_t d) {
  if (d < kCnnMinInputDim) return 0;
  return ((d - 2) / 2 - 2) / 2 * 32;
}

class Model {
 public:
  Model(ModelConfig config, std::vector<Parameter> params)
      : config_(std::move(config)), params_(std::move(params)) {
    validate(config_);
  }

  const ModelConfig& config() const noexcept { return config_; }
  Architecture arch() const noexcept { return config_.arch; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  const Parameter& parameter(std::string_view name) const {
    for (const auto& p : params_)
      if (p.name == name) return p;
    throw ContractError("no parameter named '" + std::string(name) + "'");
  }

  std::size_t branch_count() const { return config_.input_dims.size(); }

  // inputs[b] is the [n x d_b] batch for branch b.
  ForwardResult forward(Graph& g, std::span<const Tensor> inputs, bool training, Rng& rng) const {
    if (inputs.size() != branch_count()) {
      throw DimensionError("model '" + std::string(to_string(arch())) + "' expects " +
                           std::to_string(branch_count()) + " input(s), got " +
                           std::to_string(inputs.size()));
    }
    std::size_t n = 0;
    for (std::size_t b = 0; b < inputs.size(); ++b) {
      const Tensor& x = inputs[b];
      if (x.rank() != 2 || x.dim(1) != config_.input_dims[b]) {
        throw DimensionError("branch " + std::to_string(b) + ": expected width " +
                             std::to_string(config_.input_dims[b]) + ", got input shape " +
                             to_string(x.shape()));
      }
      if (b == 0) n = x.dim(0);
      if (x.dim(0) != n) throw DimensionError("branch batches have different sample counts");
    }
    if (arch() == Architecture::fiona && n < 2) {
      throw DegenerateInputError("fiona forward needs at least 2 samples per batch");
    }

    ForwardResult out;
    std::size_t cursor = 0;
    out.params.reserve(params_.size());
    for (const auto& p : params_) out.params.push_back(g.leaf(p.value, true));
    auto next = [&]() { return out.params.at(cursor++); };
    auto dense_layer = [&](Var x) {
      const Var w = next();
      const Var b = next();
      return dense(x, w, b);
    };
    auto trunk = [&](const Tensor& x) {
      Var h = g.constant(x.reshaped({x.dim(0), x.dim(1), 1}));
      for (int stage = 0; stage < 2; ++stage) {
        const Var w = next();
        const Var b = next();
        h = maxpool1d(relu(conv1d(h, w, b)));
      }
      return flatten(h);
    };
    auto head = [&](Var features) {
      Var h = dropout(features, config_.dropout, training, rng);
      h = relu(dense_layer(h));
      return softmax(dense_layer(h));
    };

    switch (arch()) {
      case Architecture::fcn: {
        Var h = g.constant(inputs[0]);
        for (int layer = 0; layer < 3; ++layer)
          h = dropout(relu(dense_layer(h)), config_.dropout, training, rng);
        out.probs = softmax(dense_layer(h));
        break;
      }
      case Architecture::cnn:
        out.probs = head(trunk(inputs[0]));
        break;
      case Architecture::concat_fusion: {
        BranchOutputs br;
        br.flattened[0] = trunk(inputs[0]);
        br.flattened[1] = trunk(inputs[1]);
        out.probs = head(concat(br.flattened[0], br.flattened[1]));
        out.branches = br;
        break;
      }
      case Architecture::fiona: {
        BranchOutputs br;
        std::array<Var, 2> gated{}, projected{};
        for (std::size_t b = 0; b < 2; ++b) {
          br.flattened[b] = trunk(inputs[b]);
          gated[b] = mul(br.flattened[b], sigmoid(dense_layer(br.flattened[b])));
          projected[b] = dense_layer(gated[b]);
        }
        br.gated = gated;
        br.projected = projected;
        out.probs = head(concat(projected[0], projected[1]));
        out.branches = br;
        break;
      }
    }
    return out;
  }

  static void validate(const ModelConfig& c) {
    const std::size_t want = is_fusion(c.arch) ? 2 : 1;
    if (c.input_dims.size() != want) {
      throw ConfigError("architecture '" + std::string(to_string(c.arch)) + "' takes " +
                        std::to_string(want) + " input dim(s)");
    }
    for (auto d : c.input_dims) {
      if (d == 0) throw ConfigError("input dimension must be positive");
      if (c.arch != Architecture::fcn && d < kCnnMinInputDim) {
        throw DegenerateInputError("CNN trunk needs input width >= " +
                                   std::to_string(kCnnMinInputDim) + ", got " + std::to_string(d));
      }
    }
    if (c.arch == Architecture::fiona && c.projection_dim == 0) {
      throw ConfigError("projection_dim must be positive");
    }
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) {
      throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(c.dropout));
    }
  }

 private:
  ModelConfig config_;
  std::vector<Parameter> params_;
};

namespace detail {

class ParamBuilder {
 public:
  explicit ParamBuilder(Rng rng) : rng_(std::move(rng)) {}

  void dense(const std::string& prefix, std::size_t in, std::size_t out) {
    add(prefix + ".weight", {in, out}, in, out);
    params_.push_back({prefix + ".bias", Tensor::zeros({out})});
  }

  void conv(const std::string& prefix, std::size_t k, std::size_t cin, std::size_t cout) {
    add(prefix + ".weight", {k, cin, cout}, k * cin, k * cout);
    params_.push_back({prefix + ".bias", Tensor::zeros({cout})});
  }

  void trunk(const std::string& prefix) {
    conv(prefix + ".conv1", 3, 1, 16);
    conv(prefix + ".conv2", 3, 16, 32);
  }

  std::vector<Parameter> take() { return std::move(params_); }

 private:
  void add(std::string name, Shape shape, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng_.uniform(-limit, limit);
    params_.push_back({std::move(name), std::move(t)});
  }

  Rng rng_;
  std::vector<Parameter> params_;
};

}  // namespace detail

// Parameter order matches the consumption order inside Model::forward.
inline Model build_model(const ModelConfig& config, std::uint64_t seed) {
  Model::validate(config);
  detail::ParamBuilder pb(Rng(seed).split("init"));
  switch (config.arch) {
    case Architecture::fcn: {
      const std::size_t widths[] = {config.input_dims[0], 128, 64, 32, 2};
      for (int i = 0; i < 4; ++i)
        pb.dense("fcn.dense" + std::to_string(i + 1), widths[i], widths[i + 1]);
      break;
    }
    case Architecture::cnn:
      pb.trunk("cnn");
      pb.dense("head.dense", cnn_flatten_width(config.input_dims[0]), 50);
      pb.dense("head.out", 50, 2);
      break;
    case Architecture::concat_fusion:
      pb.trunk("branch0");
      pb.trunk("branch1");
      pb.dense("head.dense",
               cnn_flatten_width(config.input_dims[0]) + cnn_flatten_width(config.input_dims[1]), 50);
      pb.dense("head.out", 50, 2);
      break;
    case Architecture::fiona:
      for (std::size_t b = 0; b < 2; ++b) {
        const std::string prefix = "branch" + std::to_string(b);
        const std::size_t w = cnn_flatten_width(config.input_dims[b]);
        pb.trunk(prefix);
        pb.dense(prefix + ".gate", w, w);
        pb.dense(prefix + ".proj", w, config.projection_dim);
      }
      pb.dense("head.dense", 2 * config.projection_dim, 50);
      pb.dense("head.out", 50, 2);
      break;
  }
  return Model(config, pb.take());
}

inline Model build_fcn(std::size_t input_dim, double dropout = kDefaultDropout, std::uint64_t seed = 0) {
  if (input_dim == 0) throw ConfigError("input dimension must be positive");
  return build_model({Architecture::fcn, {input_dim}, kDefaultProjectionDim, dropout}, seed);
}

inline Model build_cnn(std::size_t input_dim, double dropout = kDefaultDropout, std::uint64_t seed = 0) {
  return build_model({Architecture::cnn, {input_dim}, kDefaultProjectionDim, dropout}, seed);
}

inline Model build_concat_fusion(std::size_t dim_a, std::size_t dim_b, double dropout = kDefaultDropout,
                                 std::uint64_t seed = 0) {
  return build_model({Architecture::concat_fusion, {dim_a, dim_b}, kDefaultProjectionDim, dropout}, seed);
}

inline Model build_fiona(std::size_t dim_a, std::size_t dim_b,
                         std::size_t projection_dim = kDefaultProjectionDim,
                         double dropout = kDefaultDropout, std::uint64_t seed = 0) {
  return build_model({Architecture::fiona, {dim_a, dim_b}, projection_dim, dropout}, seed);
}

}  // namespace fiona
