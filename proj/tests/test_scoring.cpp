// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <stdexcept>

#include <cmath>
#include <set>
#include <vector>

#include "vlaprune/rng.hpp"
#include "vlaprune/scoring.hpp"

using namespace vlaprune;

namespace {

// Random row-stochastic attention over an active set drawn from the layout.
AttentionRecord random_record(const TokenLayout& layout, const std::vector<int>& layers,
                              int heads, uint64_t seed, std::vector<int> active = {}) {
  Rng rng(seed);
  if (active.empty()) {
    for (int i = 0; i < layout.seq_len(); ++i) active.push_back(i);
  }
  AttentionRecord rec;
  for (int l : layers) {
    LayerAttention att;
    att.layer = l;
    att.active_to_original = active;
    const int a = static_cast<int>(active.size());
    for (int h = 0; h < heads; ++h) {
      Mat m(a, a);
      for (int r = 0; r < a; ++r) {
        double sum = 0.0;
        for (int c = 0; c < a; ++c) {
          m.at(r, c) = rng.uniform() + 1e-9;
          sum += m.at(r, c);
        }
        for (int c = 0; c < a; ++c) m.at(r, c) /= sum;
      }
      att.heads.push_back(std::move(m));
    }
    rec.layers.emplace(l, std::move(att));
  }
  return rec;
}

// Independent oracle: literal triple loop over heads, text queries and
// visual keys.
std::vector<double> eq1_oracle(const AttentionRecord& rec, const TokenLayout& layout, int layer) {
  const LayerAttention& att = rec.layer(layer);
  std::vector<int> text_rows, visual_cols;
  for (int p = 0; p < att.active_count(); ++p) {
    const int orig = att.active_to_original[static_cast<size_t>(p)];
    if (layout.is_text(orig)) text_rows.push_back(p);
    if (layout.is_visual(orig)) visual_cols.push_back(p);
  }
  std::vector<double> scores;
  for (int v : visual_cols) {
    double acc = 0.0;
    for (const Mat& head : att.heads) {
      for (int t : text_rows) acc += head.at(t, v);
    }
    scores.push_back(acc / (static_cast<double>(att.heads.size()) * text_rows.size()));
  }
  return scores;
}

}  // namespace

TEST_CASE("eq1 matches the naive triple-loop oracle on random tensors") {
  Rng seeds(2024);
  for (int iter = 0; iter < 60; ++iter) {
    const TokenLayout layout = TokenLayout::make(2, 5 + iter % 4, 2 + iter % 3, 2);
    // Sometimes drop some visual tokens from the active set.
    std::vector<int> active;
    for (int i = 0; i < layout.seq_len(); ++i) {
      if (layout.is_visual(i) && (seeds.next_u64() % 4 == 0)) continue;
      active.push_back(i);
    }
    const auto rec = random_record(layout, {1}, 1 + iter % 3, seeds.next_u64(), active);
    const auto got = task_attention_score(rec, layout, 1);
    const auto want = eq1_oracle(rec, layout, 1);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < want.size(); ++i) {
      const double rel = std::abs(got.score[i] - want[i]) /
                         std::max(1e-300, std::abs(want[i]));
      CHECK(rel <= 1e-12);
    }
  }
}

TEST_CASE("eq1 hand examples") {
  // H=1, m=1: a single text query putting weight 0.37 on visual token 3.
  TokenLayout layout;
  layout.views = {{0, 0, 6}};
  layout.text = {6, 7};
  layout.action = {7, 8};
  layout.validate();

  AttentionRecord rec;
  LayerAttention att;
  att.layer = 1;
  for (int i = 0; i < 8; ++i) att.active_to_original.push_back(i);
  Mat m(8, 8);
  for (int r = 0; r < 8; ++r) m.at(r, r) = 1.0;  // rows sum to 1
  m.at(6, 6) = 0.0;
  m.at(6, 3) = 0.37;
  m.at(6, 7) = 0.63;
  att.heads.push_back(m);
  rec.layers.emplace(1, att);

  const auto scores = task_attention_score(rec, layout, 1);
  REQUIRE(scores.size() == 6);
  CHECK(scores.token[3] == 3);
  CHECK(scores.score[3] == doctest::Approx(0.37).epsilon(1e-12));

  // H=2, m=2 with weights {{0.1,0.2},{0.3,0.4}} on token 5 -> 0.25.
  AttentionRecord rec2;
  LayerAttention att2;
  att2.layer = 1;
  TokenLayout layout2;
  layout2.views = {{0, 0, 6}};
  layout2.text = {6, 8};
  layout2.action = {8, 9};
  layout2.validate();
  for (int i = 0; i < 9; ++i) att2.active_to_original.push_back(i);
  Mat h1(9, 9), h2(9, 9);
  for (int r = 0; r < 9; ++r) {
    h1.at(r, 0) = 1.0;
    h2.at(r, 0) = 1.0;
  }
  auto set_text_row = [](Mat& m, int row, int vis_col, double w) {
    m.at(row, 0) = 0.0;
    m.at(row, vis_col) = w;
    m.at(row, 1) = 1.0 - w;  // filler mass
  };
  set_text_row(h1, 6, 5, 0.1);
  set_text_row(h1, 7, 5, 0.2);
  set_text_row(h2, 6, 5, 0.3);
  set_text_row(h2, 7, 5, 0.4);
  att2.heads = {h1, h2};
  rec2.layers.emplace(1, att2);
  const auto s2 = task_attention_score(rec2, layout2, 1);
  CHECK(s2.score[5] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("uniform attention scores 1/S") {
  const TokenLayout layout = TokenLayout::make(1, 6, 2, 2);  // S = 10
  AttentionRecord rec;
  LayerAttention att;
  att.layer = 1;
  const int s = layout.seq_len();
  for (int i = 0; i < s; ++i) att.active_to_original.push_back(i);
  Mat m(s, s);
  for (auto& x : m.v) x = 1.0 / s;
  att.heads = {m, m};
  rec.layers.emplace(1, att);
  const auto scores = task_attention_score(rec, layout, 1);
  for (double sc : scores.score) CHECK(sc == doctest::Approx(1.0 / s).epsilon(1e-12));
}

TEST_CASE("eq1 error paths") {
  const TokenLayout layout = TokenLayout::make(1, 6, 2, 2);
  const auto rec = random_record(layout, {1}, 2, 5);
  CHECK_THROWS_AS(task_attention_score(rec, layout, 2), std::out_of_range);
}

TEST_CASE("top_k ordering, ties and clamping") {
  TokenScoreVector sv;
  sv.token = {0, 1, 2};
  sv.score = {0.1, 0.5, 0.3};
  CHECK(top_k_tokens(sv, 2) == std::vector<int>{1, 2});
  CHECK(top_k_tokens(sv, 0).empty());
  CHECK(top_k_tokens(sv, 10) == std::vector<int>{1, 2, 0});

  TokenScoreVector ties;
  ties.token = {0, 1, 2};
  ties.score = {0.4, 0.4, 0.4};
  CHECK(top_k_tokens(ties, 2) == std::vector<int>{0, 1});

  // Scale invariance: any c > 0 leaves the selection unchanged.
  TokenScoreVector scaled = sv;
  for (auto& s : scaled.score) s *= 731.5;
  CHECK(top_k_tokens(scaled, 2) == top_k_tokens(sv, 2));
}

TEST_CASE("hit rate basics and monotonicity") {
  const TokenLayout layout = TokenLayout::make(2, 10, 3, 2);
  const auto rec = random_record(layout, {1, 2, 3}, 2, 77);

  CHECK(hit_rate({3}, 3, rec, layout, 5) == doctest::Approx(1.0));
  CHECK(hit_rate({1}, 3, rec, layout, 0) == doctest::Approx(1.0));

  // Adding a layer to the early union never lowers the hit rate.
  for (int k : {1, 3, 5, 10}) {
    const double one = hit_rate({1}, 3, rec, layout, k);
    const double two = hit_rate({1, 2}, 3, rec, layout, k);
    CHECK(two >= one);
    CHECK(one >= 0.0);
    CHECK(two <= 1.0);
  }

  // Disjoint early/final top-k sets give zero.
  TokenLayout small;
  small.views = {{0, 0, 4}};
  small.text = {4, 5};
  small.action = {5, 6};
  small.validate();
  AttentionRecord rec2;
  for (int l : {1, 2}) {
    LayerAttention att;
    att.layer = l;
    for (int i = 0; i < 6; ++i) att.active_to_original.push_back(i);
    Mat m(6, 6);
    for (int r = 0; r < 6; ++r) {
      // Text row mass on tokens {0,1} in layer 1, {2,3} in layer 2.
      if (r == 4) {
        m.at(r, l == 1 ? 0 : 2) = 0.6;
        m.at(r, l == 1 ? 1 : 3) = 0.4;
      } else {
        m.at(r, r) = 1.0;
      }
    }
    att.heads.push_back(m);
    rec2.layers.emplace(l, att);
  }
  CHECK(hit_rate({1}, 2, rec2, small, 2) == doctest::Approx(0.0));
}
