#pragma once

// Universal Representation Transformer layer: batch-level attention over
// the M learner forecasts.
//
//   phi   = concat_i f_i(x)                  per sample, width M * P
//   q     = W_q mean_batch(phi) + b_q        per head, width l
//   k_i   = W_k mean_batch(f_i) + b_k        shared across learners
//   beta  = q . k_i / sqrt(l),  alpha = softmax(beta)
//   out   = sum_j (sum_i alpha_i^j f_i(x)) W_f^j + b_f^j
//
// With one head and no final map the output is a convex combination of the
// learner forecasts.

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mantra/autodiff.hpp"
#include "mantra/nn.hpp"
#include "mantra/tensor.hpp"

namespace mantra {

struct UrtConfig {
  std::size_t heads = 1;     // S
  std::size_t key_dim = 8;   // l
  bool final_map = false;    // forced on when heads > 1
  double omega = 0.1;        // weight of the orthogonality penalty
};

std::vector<std::string> validate(const UrtConfig& cfg);

struct UrtHead {
  Linear query;  // M * P -> l
  Linear key;    // P -> l
  Linear final;  // P -> P, only when the layer has a final map
};

struct AttentionRecord {
  Var alpha;  // [S, M]
  Var beta;   // [S, M]
};

struct UrtOutput {
  Var prediction;  // same shape as each learner forecast
  AttentionRecord attention;
};

/// Concatenated flattened forecasts [N, M * P] and their batch mean [1, M * P].
struct UniversalRepresentation {
  Var concat;
  Var mean;
};

UniversalRepresentation universal_representation(std::span<const Var> preds);

class UrtLayer {
 public:
  UrtLayer() = default;
  /// `width` is P, the flattened size of one learner's forecast per sample.
  UrtLayer(const std::string& name, const UrtConfig& cfg, std::size_t learners, std::size_t width, std::uint64_t seed);

  AttentionRecord attention_scores(Tape& tape, std::span<const Var> preds);
  UrtOutput operator()(Tape& tape, std::span<const Var> preds);

  std::vector<Parameter*> parameters();
  std::size_t parameter_count();
  const UrtConfig& config() const { return cfg_; }
  std::size_t learners() const { return learners_; }
  std::size_t width() const { return width_; }
  bool has_final_map() const { return final_map_; }
  std::vector<UrtHead>& heads() { return heads_; }

 private:
  UrtConfig cfg_;
  std::size_t learners_ = 0;
  std::size_t width_ = 0;
  bool final_map_ = false;
  std::vector<UrtHead> heads_;
};

/// Omega = ||A A^T - I||_F^2 over the S x M attention rows.
Var urt_regularizer(Var alpha);

/// Writes `head,learner,alpha` rows (no header) for one batch.
void dump_attention(std::ostream& os, const Tensor& alpha);

}  // namespace mantra
