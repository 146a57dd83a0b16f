#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hqmamba/ansatz.hpp"
#include "hqmamba/autodiff.hpp"

namespace hqmamba::mamba {

enum class Backend { classical, quantum };

Backend parse_backend(const std::string& s);
std::string to_string(Backend b);

/// Backend choice for the three swappable projections. dt_proj is always classical.
struct BackendMap {
  Backend in_proj = Backend::classical;
  Backend x_proj = Backend::classical;
  Backend out_proj = Backend::classical;

  static BackendMap all(Backend b) { return {b, b, b}; }
  bool operator==(const BackendMap&) const = default;
};

/// Circuit settings shared by every quantum projector of a model.
struct QuantumSettings {
  int n_layers = 1;
  ansatz::EntanglePattern pattern = ansatz::EntanglePattern::ring;
  int max_qubits = 8;
  bool operator==(const QuantumSettings&) const = default;
};

struct MambaLayerConfig {
  int d_model = 128;
  int expand = 4;
  int d_state = 16;
  int dt_rank = 0;  // 0 selects ceil(d_model / 16)
  int d_conv = 4;
  BackendMap backends;
  QuantumSettings quantum;

  int d_inner() const { return expand * d_model; }
  int resolved_dt_rank() const { return dt_rank > 0 ? dt_rank : (d_model + 15) / 16; }
  void validate() const;
  bool operator==(const MambaLayerConfig&) const = default;
};

enum class InputMode { real, bins };

struct ModelConfig {
  MambaLayerConfig layer;
  int n_layers = 2;
  InputMode input_mode = InputMode::real;
  int input_features = 1;  // feature width of real inputs
  int num_classes = 10;
  std::uint64_t seed = 0;

  void validate() const;
  /// Flat `key = value` text; the checkpoint header echoes it.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

enum class ParamGroup { in_proj, x_proj, out_proj, classical };

std::string to_string(ParamGroup g);
ParamGroup parse_group(const std::string& s);

struct Parameter {
  std::string name;
  ParamGroup group;
  ad::Tensor tensor;
};

/// A projection d_in -> d_out on the last axis: either an affine map or a
/// simulated variational circuit with affine readout.
class Projection {
 public:
  Projection() = default;
  static Projection classical(int d_in, int d_out, std::uint64_t seed);
  static Projection quantum(int d_in, int d_out, const QuantumSettings& qs, std::uint64_t seed);

  Backend backend() const { return backend_; }
  int d_in() const { return d_in_; }
  int d_out() const { return d_out_; }
  const ansatz::QuantumProjectorConfig& quantum_config() const { return qcfg_; }

  /// x [..., d_in] -> [..., d_out].
  ad::Tensor forward(const ad::Tensor& x) const;
  void collect(const std::string& prefix, ParamGroup group, std::vector<Parameter>& out) const;

 private:
  Backend backend_ = Backend::classical;
  int d_in_ = 0, d_out_ = 0;
  // classical
  ad::Tensor weight_, bias_;
  // quantum
  ansatz::QuantumProjectorConfig qcfg_;
  ad::Tensor angles_, readout_w_, readout_b_, compress_w_, compress_b_;
};

/// Batched per-token quantum features as a graph op: x [R, d] (d <= 2^n),
/// angles [n_layers, n_qubits, 3] -> [R, 2^n].
ad::Tensor quantum_features_op(const ansatz::AnsatzConfig& cfg, const ad::Tensor& x,
                               const ad::Tensor& angles);

struct MambaBlockWeights {
  Projection in_proj, x_proj, out_proj;
  ad::Tensor conv_w;  // [d_inner, d_conv]
  ad::Tensor conv_b;  // [d_inner]
  ad::Tensor dt_w;    // [dt_rank, d_inner]
  ad::Tensor dt_b;    // [d_inner]
  ad::Tensor a_log;   // [d_inner, d_state]
  ad::Tensor d;       // [d_inner]

  static MambaBlockWeights init(const MambaLayerConfig& cfg, std::uint64_t seed);
  void collect(const std::string& prefix, std::vector<Parameter>& out) const;
};

/// Gated selective-SSM block, x [B, L, d_model] -> [B, L, d_model]. Residual
/// and normalization belong to the caller.
ad::Tensor mamba_block_forward(const MambaLayerConfig& cfg, const MambaBlockWeights& w,
                               const ad::Tensor& x);

/// Either real features [B, L, F] or integer pixel bins [B, L] in [0, 256).
struct ModelInput {
  InputMode mode = InputMode::real;
  ad::Tensor real;
  std::vector<int> bins;
  std::size_t batch = 0, length = 0;

  static ModelInput from_real(ad::Tensor x);
  static ModelInput from_bins(std::vector<int> bins, std::size_t batch, std::size_t length);
};

class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  /// Logits [B, num_classes].
  ad::Tensor forward(const ModelInput& input) const;

  /// Every trainable tensor, each in exactly one group; stable order.
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  std::map<ParamGroup, std::size_t> parameter_count_by_group() const;
  void zero_grad();

  const std::vector<MambaBlockWeights>& blocks() const { return blocks_; }

 private:
  ModelConfig cfg_;
  ad::Tensor lift_w_, lift_b_, embedding_;
  std::vector<ad::Tensor> norm_w_;
  std::vector<MambaBlockWeights> blocks_;
  ad::Tensor final_norm_w_, head_w_, head_b_;
  std::vector<Parameter> params_;
};

// Checkpoint format (all integers and floats little-endian):
//   8 bytes  magic "HQMCKPT\0"
//   u32      format version (1)
//   u32 n, n bytes   ModelConfig::to_text()
//   u32      block count
//   per block: u32 n, n bytes name; u32 rank; u64 dims[rank]; f64 values[prod(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
/// Rebuilds the model from the echoed config and loads every block.
Model decode_checkpoint(const std::vector<std::uint8_t>& bytes);
/// Loads blocks into an existing model; its config must match the header.
void load_checkpoint_into(Model& model, const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace hqmamba::mamba
