// SPDX-License-Identifier: Apache-2.0
#include "vlaprune/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "vlaprune/rng.hpp"

namespace vlaprune {

using ERowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<ERowMat>;
using ECMap = Eigen::Map<const ERowMat>;

namespace {

ECMap map(const Mat& m) { return ECMap(m.v.data(), m.rows, m.cols); }
EMap map(Mat& m) { return EMap(m.v.data(), m.rows, m.cols); }

Mat gaussian_mat(Rng& rng, int rows, int cols, double scale) {
  Mat m(rows, cols);
  for (auto& x : m.v) x = rng.normal() * scale;
  return m;
}

// (x - mean) / sqrt(var + eps) * gain, per row.
Mat layer_norm(const Mat& x, const std::vector<double>& gain, uint64_t* ops) {
  Mat out(x.rows, x.cols);
  const int d = x.cols;
  for (int r = 0; r < x.rows; ++r) {
    const double* src = x.row(r);
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += src[c];
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) {
      const double t = src[c] - mean;
      var += t * t;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    double* dst = out.row(r);
    for (int c = 0; c < d; ++c) dst[c] = (src[c] - mean) * inv * gain[c];
  }
  *ops += static_cast<uint64_t>(x.rows) * d * 5;
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

void check_retained(const std::vector<int>& retained, const TokenLayout& layout) {
  int prev = -1;
  std::vector<char> present(static_cast<size_t>(layout.seq_len()), 0);
  for (int idx : retained) {
    if (idx < 0 || idx >= layout.seq_len()) throw std::out_of_range("retained index out of range");
    if (idx <= prev) throw std::invalid_argument("retained set must be sorted and unique");
    prev = idx;
    present[static_cast<size_t>(idx)] = 1;
  }
  for (int i = layout.text.first; i < layout.action.second; ++i) {
    if (!present[static_cast<size_t>(i)])
      throw std::invalid_argument("retained set excludes a text or action token");
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (num_layers < 3) throw std::invalid_argument("num_layers must be >= 3");
  if (hidden_dim <= 0 || num_heads <= 0 || ffn_dim <= 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (hidden_dim % num_heads != 0)
    throw std::invalid_argument("hidden_dim must be divisible by num_heads");
}

int TokenLayout::visual_count() const {
  int n = 0;
  for (const auto& v : views) n += v.end - v.begin;
  return n;
}

bool TokenLayout::is_visual(int idx) const { return view_of(idx) >= 0; }

int TokenLayout::view_of(int idx) const {
  for (const auto& v : views) {
    if (idx >= v.begin && idx < v.end) return v.view_id;
  }
  return -1;
}

std::vector<int> TokenLayout::visual_indices() const {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(visual_count()));
  for (const auto& v : views) {
    for (int i = v.begin; i < v.end; ++i) out.push_back(i);
  }
  return out;
}

void TokenLayout::validate() const {
  if (views.empty()) throw std::invalid_argument("layout requires at least one view");
  int cursor = 0;
  for (const auto& v : views) {
    if (v.begin != cursor || v.end <= v.begin)
      throw std::invalid_argument("view ranges must be contiguous and non-empty");
    cursor = v.end;
  }
  if (text.first != cursor || text.second <= text.first)
    throw std::invalid_argument("text range must follow visual ranges and be non-empty");
  if (action.first != text.second || action.second <= action.first)
    throw std::invalid_argument("action range must follow text range and be non-empty");
}

TokenLayout TokenLayout::make(int views, int tokens_per_view, int text_len, int action_len) {
  TokenLayout layout;
  int cursor = 0;
  for (int v = 0; v < views; ++v) {
    layout.views.push_back({v, cursor, cursor + tokens_per_view});
    cursor += tokens_per_view;
  }
  layout.text = {cursor, cursor + text_len};
  layout.action = {cursor + text_len, cursor + text_len + action_len};
  layout.validate();
  return layout;
}

void AttentionBiasSpec::validate(int seq_len) const {
  if (key_bias.empty()) return;
  if (static_cast<int>(key_bias.size()) != seq_len)
    throw std::invalid_argument("bias length must match sequence length");
  for (double b : key_bias) {
    if (!std::isfinite(b)) throw std::invalid_argument("bias values must be finite");
  }
}

const LayerAttention& AttentionRecord::layer(int l) const {
  auto it = layers.find(l);
  if (it == layers.end()) throw std::out_of_range("layer not captured: " + std::to_string(l));
  return it->second;
}

Model Model::build(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  Rng rng(Rng::mix(cfg.seed, 0x6d6f64656cULL));
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  const double ffn_scale = 1.0 / std::sqrt(static_cast<double>(cfg.ffn_dim));
  m.layers_.resize(static_cast<size_t>(cfg.num_layers));
  for (auto& lp : m.layers_) {
    lp.wq = gaussian_mat(rng, cfg.hidden_dim, cfg.hidden_dim, attn_scale);
    lp.wk = gaussian_mat(rng, cfg.hidden_dim, cfg.hidden_dim, attn_scale);
    lp.wv = gaussian_mat(rng, cfg.hidden_dim, cfg.hidden_dim, attn_scale);
    lp.wo = gaussian_mat(rng, cfg.hidden_dim, cfg.hidden_dim, attn_scale);
    lp.w1 = gaussian_mat(rng, cfg.hidden_dim, cfg.ffn_dim, attn_scale);
    lp.w2 = gaussian_mat(rng, cfg.ffn_dim, cfg.hidden_dim, ffn_scale);
    lp.ln1_gain.assign(static_cast<size_t>(cfg.hidden_dim), 1.0);
    lp.ln2_gain.assign(static_cast<size_t>(cfg.hidden_dim), 1.0);
  }
  m.final_ln_gain_.assign(static_cast<size_t>(cfg.hidden_dim), 1.0);
  m.tag_ = m.parameter_checksum();
  return m;
}

LayerParamsView Model::layer_params(int layer) const {
  if (layer < 1 || layer > cfg_.num_layers) throw std::out_of_range("layer out of range");
  const LayerParams& lp = layers_[static_cast<size_t>(layer - 1)];
  return {&lp.wq, &lp.wk, &lp.wv, &lp.wo, &lp.w1, &lp.w2, &lp.ln1_gain, &lp.ln2_gain};
}

uint64_t Model::parameter_checksum() const {
  // FNV-1a over the raw parameter bytes.
  uint64_t h = 1469598103934665603ULL;
  auto fold = [&h](const std::vector<double>& v) {
    for (double d : v) {
      uint64_t bits;
      std::memcpy(&bits, &d, sizeof(bits));
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (bits >> (8 * byte)) & 0xffULL;
        h *= 1099511628211ULL;
      }
    }
  };
  for (const auto& lp : layers_) {
    fold(lp.wq.v);
    fold(lp.wk.v);
    fold(lp.wv.v);
    fold(lp.wo.v);
    fold(lp.w1.v);
    fold(lp.w2.v);
    fold(lp.ln1_gain);
    fold(lp.ln2_gain);
  }
  return h;
}

Checkpoint Model::begin(const Mat& embeddings, const TokenLayout& layout,
                        const std::vector<int>& retained, const AttentionBiasSpec& bias,
                        const std::vector<int>* positions) const {
  layout.validate();
  bias.validate(layout.seq_len());
  if (embeddings.rows != layout.seq_len() || embeddings.cols != cfg_.hidden_dim)
    throw std::invalid_argument("embeddings shape must be seq_len x hidden_dim");
  check_retained(retained, layout);

  Checkpoint ck;
  ck.model_tag = tag_;
  ck.layer_done = 0;
  ck.active = retained;
  ck.layout = layout;
  ck.bias = bias;
  if (positions) {
    if (static_cast<int>(positions->size()) != layout.seq_len())
      throw std::invalid_argument("positions length must match sequence length");
    ck.positions = *positions;
  } else {
    ck.positions.resize(static_cast<size_t>(layout.seq_len()));
    for (int i = 0; i < layout.seq_len(); ++i) ck.positions[static_cast<size_t>(i)] = i;
  }
  ck.hidden = Mat(static_cast<int>(retained.size()), cfg_.hidden_dim);
  for (size_t r = 0; r < retained.size(); ++r) {
    std::memcpy(ck.hidden.row(static_cast<int>(r)), embeddings.row(retained[r]),
                sizeof(double) * static_cast<size_t>(cfg_.hidden_dim));
  }
  return ck;
}

void Model::retain(Checkpoint& ck, const std::vector<int>& new_retained) const {
  if (ck.model_tag != tag_) throw std::invalid_argument("checkpoint/model mismatch");
  check_retained(new_retained, ck.layout);
  std::vector<int> row_of;
  row_of.assign(static_cast<size_t>(ck.layout.seq_len()), -1);
  for (size_t r = 0; r < ck.active.size(); ++r) row_of[static_cast<size_t>(ck.active[r])] = static_cast<int>(r);
  Mat next(static_cast<int>(new_retained.size()), cfg_.hidden_dim);
  for (size_t r = 0; r < new_retained.size(); ++r) {
    const int src = row_of[static_cast<size_t>(new_retained[r])];
    if (src < 0) throw std::invalid_argument("retained set is not a subset of the active set");
    std::memcpy(next.row(static_cast<int>(r)), ck.hidden.row(src),
                sizeof(double) * static_cast<size_t>(cfg_.hidden_dim));
  }
  ck.active = new_retained;
  ck.hidden = std::move(next);
}

void Model::run_layer(Checkpoint& ck, int layer, bool capture, AttentionRecord* record) const {
  const LayerParams& lp = layers_[static_cast<size_t>(layer - 1)];
  const int a = ck.hidden.rows;
  const int d = cfg_.hidden_dim;
  const int hd = cfg_.head_dim();
  const int heads = cfg_.num_heads;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  uint64_t& ops = ck.op_count;

  Mat xn = layer_norm(ck.hidden, lp.ln1_gain, &ops);
  ERowMat q = map(xn) * map(lp.wq);
  ERowMat k = map(xn) * map(lp.wk);
  ERowMat v = map(xn) * map(lp.wv);
  ops += 3ULL * a * d * d;

  // Rotary position encoding keyed to original token positions, so retained
  // tokens keep their positional identity after pruning.
  std::vector<double> freqs(static_cast<size_t>(hd / 2));
  for (int p = 0; p < hd / 2; ++p) freqs[static_cast<size_t>(p)] = std::pow(kRopeBase, -2.0 * p / hd);
  for (int r = 0; r < a; ++r) {
    const double pos = static_cast<double>(ck.positions[static_cast<size_t>(ck.active[static_cast<size_t>(r)])]);
    for (int p = 0; p < hd / 2; ++p) {
      const double c = std::cos(pos * freqs[static_cast<size_t>(p)]);
      const double s = std::sin(pos * freqs[static_cast<size_t>(p)]);
      for (int h = 0; h < heads; ++h) {
        const int c0 = h * hd + 2 * p;
        const int c1 = c0 + 1;
        const double q0 = q(r, c0), q1 = q(r, c1);
        q(r, c0) = q0 * c - q1 * s;
        q(r, c1) = q0 * s + q1 * c;
        const double k0 = k(r, c0), k1 = k(r, c1);
        k(r, c0) = k0 * c - k1 * s;
        k(r, c1) = k0 * s + k1 * c;
      }
    }
  }
  ops += 6ULL * a * d;

  Eigen::RowVectorXd bias_row = Eigen::RowVectorXd::Zero(a);
  const bool biased = !ck.bias.empty();
  if (biased) {
    for (int j = 0; j < a; ++j) bias_row(j) = ck.bias.at(ck.active[static_cast<size_t>(j)]);
  }

  LayerAttention cap;
  if (capture) {
    cap.layer = layer;
    cap.active_to_original = ck.active;
    cap.heads.reserve(static_cast<size_t>(heads));
  }

  ERowMat ctx(a, d);
  ERowMat scores(a, a);
  for (int h = 0; h < heads; ++h) {
    auto qh = q.middleCols(h * hd, hd);
    auto kh = k.middleCols(h * hd, hd);
    auto vh = v.middleCols(h * hd, hd);
    scores.noalias() = qh * kh.transpose();
    scores *= inv_sqrt_hd;
    ops += static_cast<uint64_t>(a) * a * hd + static_cast<uint64_t>(a) * a;
    if (biased) {
      scores.rowwise() += bias_row;
      ops += static_cast<uint64_t>(a) * a;
    }
    // Row softmax (max-subtracted): sub, exp, sum, div.
    const Eigen::VectorXd row_max = scores.rowwise().maxCoeff();
    scores.colwise() -= row_max;
    scores = scores.array().exp();
    const Eigen::VectorXd row_sum = scores.rowwise().sum();
    scores.array().colwise() /= row_sum.array();
    ops += 4ULL * a * a;

    if (capture) {
      Mat hm(a, a);
      EMap(hm.v.data(), a, a) = scores;
      cap.heads.push_back(std::move(hm));
    }
    ctx.middleCols(h * hd, hd).noalias() = scores * vh;
    ops += static_cast<uint64_t>(a) * a * hd;
  }
  map(ck.hidden) += ctx * map(lp.wo);
  ops += static_cast<uint64_t>(a) * d * d + static_cast<uint64_t>(a) * d;

  Mat x2 = layer_norm(ck.hidden, lp.ln2_gain, &ops);
  ERowMat up = map(x2) * map(lp.w1);
  ops += static_cast<uint64_t>(a) * d * cfg_.ffn_dim;
  for (int r = 0; r < a; ++r) {
    for (int c = 0; c < cfg_.ffn_dim; ++c) up(r, c) = gelu(up(r, c));
  }
  ops += 5ULL * a * cfg_.ffn_dim;
  map(ck.hidden) += up * map(lp.w2);
  ops += static_cast<uint64_t>(a) * cfg_.ffn_dim * d + static_cast<uint64_t>(a) * d;

  if (capture && record) record->layers.emplace(layer, std::move(cap));
}

void Model::advance(Checkpoint& ck, int until_layer, const std::set<int>& capture_layers,
                    AttentionRecord* record) const {
  if (ck.model_tag != tag_) throw std::invalid_argument("checkpoint/model mismatch");
  if (until_layer > cfg_.num_layers) throw std::invalid_argument("until_layer beyond model depth");
  for (int l : capture_layers) {
    if (l < 1 || l > cfg_.num_layers)
      throw std::invalid_argument("capture layer out of range: " + std::to_string(l));
  }
  for (int layer = ck.layer_done + 1; layer <= until_layer; ++layer) {
    run_layer(ck, layer, capture_layers.count(layer) != 0, record);
    ck.layer_done = layer;
  }
}

Mat Model::finish(const Checkpoint& ck) const {
  if (ck.model_tag != tag_) throw std::invalid_argument("checkpoint/model mismatch");
  uint64_t scratch_ops = 0;
  Mat normed = layer_norm(ck.hidden, final_ln_gain_, &scratch_ops);
  Mat out(ck.layout.action_count(), cfg_.hidden_dim);
  std::vector<int> row_of(static_cast<size_t>(ck.layout.seq_len()), -1);
  for (size_t r = 0; r < ck.active.size(); ++r) row_of[static_cast<size_t>(ck.active[r])] = static_cast<int>(r);
  for (int i = 0; i < ck.layout.action_count(); ++i) {
    const int src = row_of[static_cast<size_t>(ck.layout.action.first + i)];
    std::memcpy(out.row(i), normed.row(src), sizeof(double) * static_cast<size_t>(cfg_.hidden_dim));
  }
  return out;
}

ForwardResult Model::forward_masked(const Mat& embeddings, const TokenLayout& layout,
                                    const std::vector<int>& retained, const AttentionBiasSpec& bias,
                                    const std::set<int>& capture_layers,
                                    const std::vector<int>* positions) const {
  Checkpoint ck = begin(embeddings, layout, retained, bias, positions);
  ForwardResult res;
  advance(ck, cfg_.num_layers, capture_layers, &res.record);
  res.action_hidden = finish(ck);
  res.op_count = ck.op_count;
  return res;
}

ForwardResult Model::forward_resume(const Checkpoint& start, const std::vector<int>& retained,
                                    const std::set<int>& capture_layers) const {
  Checkpoint ck = start;
  retain(ck, retained);
  ForwardResult res;
  advance(ck, cfg_.num_layers, capture_layers, &res.record);
  res.action_hidden = finish(ck);
  res.op_count = ck.op_count;
  return res;
}

std::vector<int> sorted_union(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace vlaprune
