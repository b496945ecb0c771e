// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <utility>
#include <vector>

namespace vlaprune {

// Numeric constants of the backbone, exposed so reference implementations
// can reproduce the computation exactly.
inline constexpr double kLayerNormEps = 1e-9;
inline constexpr double kRopeBase = 10000.0;

// Small row-major matrix of doubles. The public API stays on std types;
// Eigen is an implementation detail of model.cpp.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
};

struct ModelConfig {
  int num_layers = 8;
  int hidden_dim = 64;
  int num_heads = 8;
  int ffn_dim = 256;
  uint64_t seed = 1;

  int head_dim() const { return hidden_dim / num_heads; }
  // Throws std::invalid_argument on divisibility/minimum-depth violations.
  void validate() const;
};

struct ViewRange {
  int view_id = 0;
  int begin = 0;
  int end = 0;  // exclusive
};

// Partition of the model sequence: per-view visual tokens, then text tokens,
// then action slots. Validated to be disjoint, contiguous and ordered.
struct TokenLayout {
  std::vector<ViewRange> views;
  std::pair<int, int> text{0, 0};    // [begin, end)
  std::pair<int, int> action{0, 0};  // [begin, end)

  int seq_len() const { return action.second; }
  int visual_count() const;
  int text_count() const { return text.second - text.first; }
  int action_count() const { return action.second - action.first; }
  bool is_visual(int idx) const;
  bool is_text(int idx) const { return idx >= text.first && idx < text.second; }
  bool is_action(int idx) const { return idx >= action.first && idx < action.second; }
  // View that owns a visual token index, -1 otherwise.
  int view_of(int idx) const;
  std::vector<int> visual_indices() const;
  void validate() const;

  static TokenLayout make(int views, int tokens_per_view, int text_len, int action_len);
};

// Additive pre-softmax attention bias keyed by original token index.
// An empty vector means zero bias everywhere; zero bias reproduces the
// unbiased model bit-exactly.
struct AttentionBiasSpec {
  std::vector<double> key_bias;

  bool empty() const { return key_bias.empty(); }
  double at(int original_index) const {
    return key_bias.empty() ? 0.0 : key_bias[static_cast<size_t>(original_index)];
  }
  void validate(int seq_len) const;  // finite values, length matches
};

// Attention captured for one layer: one active x active row-stochastic
// matrix per head, plus the mapping from active position to original index.
struct LayerAttention {
  int layer = 0;  // 1-based
  std::vector<int> active_to_original;
  std::vector<Mat> heads;

  int active_count() const { return static_cast<int>(active_to_original.size()); }
};

struct AttentionRecord {
  std::map<int, LayerAttention> layers;

  bool has(int layer) const { return layers.count(layer) != 0; }
  const LayerAttention& layer(int l) const;
};

// Forward state after some prefix of layers; supports shrinking the active
// set and resuming. Produced by Model::begin, advanced by Model::advance.
struct Checkpoint {
  uint64_t model_tag = 0;   // guards against checkpoint/model mismatch
  int layer_done = 0;       // layers [1 .. layer_done] already applied
  std::vector<int> active;  // original indices, ascending
  Mat hidden;               // active x hidden_dim
  TokenLayout layout;
  AttentionBiasSpec bias;
  std::vector<int> positions;  // rotary position per original index
  uint64_t op_count = 0;       // multiply-accumulate style op counter
};

struct ForwardResult {
  Mat action_hidden;  // action_count x hidden_dim
  AttentionRecord record;
  uint64_t op_count = 0;
};

// Read-only view of one layer's parameters.
struct LayerParamsView {
  const Mat* wq;
  const Mat* wk;
  const Mat* wv;
  const Mat* wo;
  const Mat* w1;
  const Mat* w2;
  const std::vector<double>* ln1_gain;
  const std::vector<double>* ln2_gain;
};

// Minimal pre-norm transformer stack with full (bidirectional) multi-head
// attention over the active token set, in the style of parallel-decoding
// action-chunk backbones. Computation touches only retained positions, so a
// smaller active set does proportionally less work. Parameters are immutable
// after build and safely shareable across concurrent forwards.
class Model {
 public:
  static Model build(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  uint64_t parameter_checksum() const;
  LayerParamsView layer_params(int layer) const;  // 1-based
  const std::vector<double>& final_ln_gain() const { return final_ln_gain_; }

  // Forward over the retained subset. `retained` must contain every text and
  // action token; visual tokens may be dropped. Attention is captured for
  // the 1-based layers listed in capture_layers. If `positions` is null, the
  // rotary position of a token is its original index.
  ForwardResult forward_masked(const Mat& embeddings, const TokenLayout& layout,
                               const std::vector<int>& retained, const AttentionBiasSpec& bias,
                               const std::set<int>& capture_layers,
                               const std::vector<int>* positions = nullptr) const;

  // Resume from a checkpoint with a (possibly smaller) retained set. Equals a
  // from-scratch masked forward whose mask changes right after the
  // checkpointed layer.
  ForwardResult forward_resume(const Checkpoint& ck, const std::vector<int>& retained,
                               const std::set<int>& capture_layers) const;

  // Stepper interface used by the generation pipeline: begin at layer 0,
  // advance layer-by-layer (capturing on demand), shrink the active set
  // between layers, then finish to read the action-slot hidden states.
  Checkpoint begin(const Mat& embeddings, const TokenLayout& layout,
                   const std::vector<int>& retained, const AttentionBiasSpec& bias,
                   const std::vector<int>* positions = nullptr) const;
  void advance(Checkpoint& ck, int until_layer, const std::set<int>& capture_layers,
               AttentionRecord* record) const;
  void retain(Checkpoint& ck, const std::vector<int>& new_retained) const;
  Mat finish(const Checkpoint& ck) const;

 private:
  struct LayerParams {
    Mat wq, wk, wv, wo;      // hidden x hidden
    Mat w1, w2;              // hidden x ffn, ffn x hidden
    std::vector<double> ln1_gain, ln2_gain;
  };

  ModelConfig cfg_;
  uint64_t tag_ = 0;
  std::vector<LayerParams> layers_;
  std::vector<double> final_ln_gain_;

  void run_layer(Checkpoint& ck, int layer, bool capture, AttentionRecord* record) const;
};

// Sorted union helper shared by the pruners (kept here to avoid a tiny
// separate header).
std::vector<int> sorted_union(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace vlaprune
