#pragma once

// Autoformer-style encoder/decoder backbone. Used both as a fast learner
// (forecast head) and as the slow learner (reconstruction only).
//
// Shapes: inputs are [N, B, D]; the decoder runs over B/2 + O steps; the
// trend stream lives in output space [N, B/2 + O, out_dim].

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mantra/autocorrelation.hpp"
#include "mantra/autodiff.hpp"
#include "mantra/nn.hpp"
#include "mantra/rng.hpp"
#include "mantra/tensor.hpp"

namespace mantra {

enum class HeadKind {
  Plain,  // theta_S on the seasonal stream plus the trend stream
  Fused,  // theta_S / theta_C over fast and slow features concatenated
  None,   // features and reconstruction only
};

inline constexpr std::size_t kLastChannel = std::numeric_limits<std::size_t>::max();

struct BackboneConfig {
  std::size_t input_len = 48;  // B
  std::size_t pred_len = 24;   // O
  std::size_t d_model = 16;
  std::size_t d_ff = 32;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 1;
  std::size_t heads = 2;
  std::size_t kernel = 25;
  std::size_t in_dim = 1;   // D
  std::size_t out_dim = 1;  // D or 1
  std::size_t target_channel = kLastChannel;
  double c = 1.0;
  double dropout = 0.0;
  CorrelationPath path = CorrelationPath::Auto;
  HeadKind head = HeadKind::Plain;

  std::size_t label_len() const { return input_len / 2; }
  std::size_t decoder_len() const { return input_len / 2 + pred_len; }
  std::size_t target() const { return target_channel < in_dim ? target_channel : in_dim - 1; }
};

/// Throws ConfigError on invalid geometry; returns warnings.
std::vector<std::string> validate(const BackboneConfig& cfg);

struct DecoderInput {
  Tensor seasonal_init;  // [N, B/2 + O, D], zero tail
  Tensor trend_init;     // [N, B/2 + O, D], tail = window mean
};

/// Decomposes the second half of each window and appends the O-step
/// placeholders. Accepts [B, D] or [N, B, D]; the result keeps the rank.
DecoderInput prepare_decoder_input(const Tensor& x, std::size_t pred_len, std::size_t kernel);

class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(const std::string& name, const BackboneConfig& cfg, Rng& rng);

  Var operator()(Tape& tape, Var h, const ForwardContext& ctx);
  void collect(std::vector<Parameter*>& out);
  MultiHeadAutoCorrelation& attention() { return attn_; }

 private:
  std::size_t kernel_ = 0;
  MultiHeadAutoCorrelation attn_;
  FeedForward ff_;
};

struct DecoderState {
  Var seasonal;
  Var trend;
};

class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(const std::string& name, const BackboneConfig& cfg, Rng& rng);

  /// Returns the seasonal stream and trend_acc plus the three projected
  /// trend parts.
  DecoderState operator()(Tape& tape, Var h, Var enc_out, Var trend_acc, const ForwardContext& ctx);
  void collect(std::vector<Parameter*>& out);

 private:
  std::size_t kernel_ = 0;
  MultiHeadAutoCorrelation self_attn_;
  MultiHeadAutoCorrelation cross_attn_;
  FeedForward ff_;
  Linear trend_proj_[3];
};

struct LearnerFeatures {
  Var seasonal;    // S_de, [N, B/2 + O, d_model]
  Var trend;       // C_de, [N, B/2 + O, out_dim]
  Var prediction;  // [N, O, out_dim]; invalid for HeadKind::None
};

/// Detached decoder features shared into a fused head.
struct SharedFeatures {
  Tensor seasonal;
  Tensor trend;
};

class Backbone {
 public:
  Backbone() = default;
  Backbone(const std::string& name, const BackboneConfig& cfg, std::uint64_t seed);

  /// Forecast pass on x [N, B, D]. A fused head requires `shared`.
  LearnerFeatures forward(Tape& tape, const Tensor& x, const ForwardContext& ctx,
                          const SharedFeatures* shared = nullptr);
  Var encode(Tape& tape, Var x, const ForwardContext& ctx);
  /// Reconstruction of the input window from encoder features, [N, B, D].
  Var reconstruct(Tape& tape, const Tensor& x, const ForwardContext& ctx);
  /// Per-timestep importance from the first encoder layer's
  /// self-correlation on x, [N, B].
  Tensor importance(const Tensor& x);

  std::vector<Parameter*> parameters();
  std::size_t parameter_count();
  const BackboneConfig& config() const { return cfg_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  BackboneConfig cfg_;
  Linear enc_embed_;
  Linear dec_embed_;
  std::vector<EncoderLayer> encoders_;
  std::vector<DecoderLayer> decoders_;
  Linear theta_s_;
  Linear theta_c_;
  Linear recon_;
};

/// Adds a leading batch axis to a [B, D] tensor; rank-3 input is returned as is.
Tensor as_batch(const Tensor& x);

}  // namespace mantra
