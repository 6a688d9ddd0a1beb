#include "mantra/autoformer.hpp"

#include <utility>

#include "mantra/decomposition.hpp"
#include "mantra/errors.hpp"
#include "mantra/ops.hpp"

namespace mantra {

namespace {

AutoCorrConfig ac_config(const BackboneConfig& cfg) { return AutoCorrConfig{cfg.c, cfg.heads, cfg.d_model}; }

// Column selection (univariate) or identity from D to out_dim channels.
Tensor select_channels(const Tensor& x, const BackboneConfig& cfg) {
  if (cfg.out_dim == cfg.in_dim) return x;
  const std::size_t N = x.dim(0), L = x.dim(1), D = x.dim(2), ch = cfg.target();
  Tensor out({N, L, 1});
  for (std::size_t i = 0; i < N * L; ++i) out[i] = x[i * D + ch];
  return out;
}

}  // namespace

std::vector<std::string> validate(const BackboneConfig& cfg) {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string("model.") + what + " must be positive");
  };
  positive(cfg.input_len, "input_len");
  positive(cfg.pred_len, "pred_len");
  positive(cfg.d_model, "d_model");
  positive(cfg.d_ff, "d_ff");
  positive(cfg.enc_layers, "enc_layers");
  positive(cfg.dec_layers, "dec_layers");
  positive(cfg.heads, "heads");
  positive(cfg.in_dim, "in_dim");
  positive(cfg.out_dim, "out_dim");
  if (cfg.input_len % 2 != 0) throw ConfigError("model.input_len must be even, got " + std::to_string(cfg.input_len));
  if (cfg.out_dim != 1 && cfg.out_dim != cfg.in_dim) {
    throw ConfigError("model.out_dim must be 1 or in_dim (" + std::to_string(cfg.in_dim) + ")");
  }
  if (cfg.kernel % 2 == 0) throw ConfigError("model.kernel must be odd, got " + std::to_string(cfg.kernel));
  if (cfg.kernel > cfg.input_len - 1) {
    throw ConfigError("model.kernel " + std::to_string(cfg.kernel) + " too large for input_len " +
                      std::to_string(cfg.input_len) + " (max input_len - 1)");
  }
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("model.dropout must lie in [0, 1)");
  return validate(ac_config(cfg));
}

Tensor as_batch(const Tensor& x) {
  if (x.rank() == 3) return x;
  if (x.rank() != 2) throw ShapeError("expected [B, D] or [N, B, D], got " + shape_string(x.shape()));
  return x.reshaped({1, x.dim(0), x.dim(1)});
}

DecoderInput prepare_decoder_input(const Tensor& x_in, std::size_t pred_len, std::size_t kernel) {
  const Tensor x = as_batch(x_in);
  const std::size_t N = x.dim(0), B = x.dim(1), D = x.dim(2);
  if (B % 2 != 0) throw ShapeError("prepare_decoder_input: window length " + std::to_string(B) + " is odd");
  const std::size_t half = B / 2, len = half + pred_len;

  Tensor tail({N, half, D});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < half; ++t)
      for (std::size_t d = 0; d < D; ++d) tail.at(n, t, d) = x.at(n, half + t, d);
  const DecompPair parts = series_decompose(tail, kernel);

  DecoderInput out{Tensor({N, len, D}), Tensor({N, len, D})};
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t d = 0; d < D; ++d) {
      double mean = 0.0;
      for (std::size_t t = 0; t < B; ++t) mean += x.at(n, t, d);
      mean /= static_cast<double>(B);
      for (std::size_t t = 0; t < half; ++t) {
        out.seasonal_init.at(n, t, d) = parts.seasonal.at(n, t, d);
        out.trend_init.at(n, t, d) = parts.trend_cyclical.at(n, t, d);
      }
      for (std::size_t t = half; t < len; ++t) out.trend_init.at(n, t, d) = mean;
    }
  }
  if (x_in.rank() == 2) {
    out.seasonal_init = out.seasonal_init.reshaped({len, D});
    out.trend_init = out.trend_init.reshaped({len, D});
  }
  return out;
}

EncoderLayer::EncoderLayer(const std::string& name, const BackboneConfig& cfg, Rng& rng)
    : kernel_(cfg.kernel),
      attn_(name + ".attn", ac_config(cfg), cfg.path, rng),
      ff_(name + ".ff", cfg.d_model, cfg.d_ff, cfg.dropout, rng) {}

Var EncoderLayer::operator()(Tape& tape, Var h, const ForwardContext& ctx) {
  Var s = series_decompose(h + attn_(tape, h, h, h), kernel_).seasonal;
  return series_decompose(s + ff_(tape, s, ctx), kernel_).seasonal;
}

void EncoderLayer::collect(std::vector<Parameter*>& out) {
  attn_.collect(out);
  ff_.collect(out);
}

DecoderLayer::DecoderLayer(const std::string& name, const BackboneConfig& cfg, Rng& rng)
    : kernel_(cfg.kernel),
      self_attn_(name + ".self_attn", ac_config(cfg), cfg.path, rng),
      cross_attn_(name + ".cross_attn", ac_config(cfg), cfg.path, rng),
      ff_(name + ".ff", cfg.d_model, cfg.d_ff, cfg.dropout, rng) {
  for (int i = 0; i < 3; ++i) {
    trend_proj_[i] = Linear(name + ".trend" + std::to_string(i + 1), cfg.d_model, cfg.out_dim, false, rng);
  }
}

DecoderState DecoderLayer::operator()(Tape& tape, Var h, Var enc_out, Var trend_acc, const ForwardContext& ctx) {
  DecompVars s1 = series_decompose(h + self_attn_(tape, h, h, h), kernel_);
  DecompVars s2 = series_decompose(s1.seasonal + cross_attn_(tape, s1.seasonal, enc_out, enc_out), kernel_);
  DecompVars s3 = series_decompose(s2.seasonal + ff_(tape, s2.seasonal, ctx), kernel_);
  Var trend = trend_acc + trend_proj_[0](tape, s1.trend_cyclical) + trend_proj_[1](tape, s2.trend_cyclical) +
              trend_proj_[2](tape, s3.trend_cyclical);
  return {s3.seasonal, trend};
}

void DecoderLayer::collect(std::vector<Parameter*>& out) {
  self_attn_.collect(out);
  cross_attn_.collect(out);
  ff_.collect(out);
  for (Linear& p : trend_proj_) p.collect(out);
}

Backbone::Backbone(const std::string& name, const BackboneConfig& cfg, std::uint64_t seed) : name_(name), cfg_(cfg) {
  validate(cfg_);
  Rng rng(seed);
  enc_embed_ = Linear(name + ".enc_embed", cfg.in_dim, cfg.d_model, true, rng);
  dec_embed_ = Linear(name + ".dec_embed", cfg.in_dim, cfg.d_model, true, rng);
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) {
    encoders_.emplace_back(name + ".enc" + std::to_string(i), cfg, rng);
  }
  for (std::size_t i = 0; i < cfg.dec_layers; ++i) {
    decoders_.emplace_back(name + ".dec" + std::to_string(i), cfg, rng);
  }
  if (cfg.head == HeadKind::Plain) {
    theta_s_ = Linear(name + ".theta_s", cfg.d_model, cfg.out_dim, true, rng);
  } else if (cfg.head == HeadKind::Fused) {
    theta_s_ = Linear(name + ".theta_s", 2 * cfg.d_model, cfg.out_dim, true, rng);
    theta_c_ = Linear(name + ".theta_c", 2 * cfg.out_dim, cfg.out_dim, false, rng);
    // Start as a pass-through of the learner's own trend stream.
    theta_c_.weight.value.fill(0.0);
    for (std::size_t i = 0; i < cfg.out_dim; ++i) theta_c_.weight.value.at(i, i) = 1.0;
  }
  recon_ = Linear(name + ".recon", cfg.d_model, cfg.in_dim, true, rng);
}

Var Backbone::encode(Tape& tape, Var x, const ForwardContext& ctx) {
  Var h = enc_embed_(tape, x);
  for (EncoderLayer& layer : encoders_) h = layer(tape, h, ctx);
  return h;
}

LearnerFeatures Backbone::forward(Tape& tape, const Tensor& x_in, const ForwardContext& ctx,
                                  const SharedFeatures* shared) {
  const Tensor x = as_batch(x_in);
  if (x.dim(1) != cfg_.input_len || x.dim(2) != cfg_.in_dim) {
    throw ShapeError(name_ + ": expected windows of shape [N, " + std::to_string(cfg_.input_len) + ", " +
                     std::to_string(cfg_.in_dim) + "], got " + shape_string(x.shape()));
  }
  Var enc = encode(tape, tape.constant(x), ctx);

  const DecoderInput init = prepare_decoder_input(x, cfg_.pred_len, cfg_.kernel);
  Var h = dec_embed_(tape, tape.constant(init.seasonal_init));
  Var trend = tape.constant(select_channels(init.trend_init, cfg_));
  for (DecoderLayer& layer : decoders_) {
    DecoderState s = layer(tape, h, enc, trend, ctx);
    h = s.seasonal;
    trend = s.trend;
  }

  LearnerFeatures out{h, trend, Var()};
  const std::size_t label = cfg_.label_len();
  if (cfg_.head == HeadKind::Plain) {
    out.prediction = slice(theta_s_(tape, h) + trend, 1, label, label + cfg_.pred_len);
  } else if (cfg_.head == HeadKind::Fused) {
    if (shared == nullptr) throw std::invalid_argument(name_ + ": fused head needs slow-learner features");
    if (shared->seasonal.shape() != h.shape() || shared->trend.shape() != trend.shape()) {
      throw ShapeError(name_ + ": slow features " + shape_string(shared->seasonal.shape()) +
                       " do not match fast features " + shape_string(h.shape()));
    }
    Var s_hat = concat({h, tape.constant(shared->seasonal)}, 2);
    Var c_hat = concat({trend, tape.constant(shared->trend)}, 2);
    out.prediction = slice(theta_s_(tape, s_hat) + theta_c_(tape, c_hat), 1, label, label + cfg_.pred_len);
  }
  if (out.prediction.valid()) require_finite(out.prediction.value(), name_.c_str());
  return out;
}

Var Backbone::reconstruct(Tape& tape, const Tensor& x, const ForwardContext& ctx) {
  return recon_(tape, encode(tape, tape.constant(as_batch(x)), ctx));
}

Tensor Backbone::importance(const Tensor& x) {
  Tape tape;
  const Tensor h = enc_embed_(tape, tape.constant(as_batch(x))).value();
  return encoders_.front().attention().self_importance(h);
}

std::vector<Parameter*> Backbone::parameters() {
  std::vector<Parameter*> out;
  enc_embed_.collect(out);
  dec_embed_.collect(out);
  for (EncoderLayer& l : encoders_) l.collect(out);
  for (DecoderLayer& l : decoders_) l.collect(out);
  if (cfg_.head != HeadKind::None) theta_s_.collect(out);
  if (cfg_.head == HeadKind::Fused) theta_c_.collect(out);
  recon_.collect(out);
  return out;
}

std::size_t Backbone::parameter_count() { return count_parameters(parameters()); }

}  // namespace mantra
