#pragma once

// Selective attention over bag instances, the relation classifier, and the
// rank/classification losses of the ranking phase.
//
// The per-instance score is the bilinear form e = x^T A_q r with r the
// relation's query row; attention weights are softmax(e). The default rank
// loss is the negative log softmax share of the generated score against the
// top-k real scores, which is minimized as the generated instance climbs into
// the top-k. The formula-literal variant (value exp(e_g) / sum of top-k
// exponentials, including the generated score itself) is kept behind a flag;
// it evaluates to exactly 1 with zero gradient once the generated instance
// alone fills the normalization set, which is why it is not the default.

#include <algorithm>
#include <numeric>
#include <vector>

#include "rdsgan/tape.hpp"

namespace rdsgan {

template <typename S>
struct AttentionParams {
  Matrix<S> query_table;  // N_r x d_s
  Matrix<S> bilinear;     // d_s x d_s, identity-initialized
  Matrix<S> w_r;          // N_r x d_s
  Matrix<S> b2;           // N_r x 1
};

template <typename S>
struct BoundAttention {
  Var<S> query_table, bilinear, w_r, b2;
};

template <typename S>
Var<S> match_score(const BoundAttention<S>& attn, Var<S> x, int relation_id) {
  if (relation_id < 0 || relation_id >= attn.query_table.rows()) {
    throw DataError("match_score: relation id " + std::to_string(relation_id) +
                    " outside query table");
  }
  auto query = transpose(gather_rows(attn.query_table, {relation_id}));
  return matmul(transpose(x), matmul(attn.bilinear, query));
}

// Scores for a whole bag against one relation, stacked into a vector.
template <typename S>
Var<S> bag_scores(const BoundAttention<S>& attn, const std::vector<Var<S>>& xs, int relation_id) {
  std::vector<Var<S>> es;
  es.reserve(xs.size());
  for (auto x : xs) es.push_back(match_score(attn, x, relation_id));
  return concat_rows(es);
}

template <typename S>
Var<S> attention_weights(Var<S> scores) {
  return softmax(scores);
}

// q = sum_i alpha_i x_i.
template <typename S>
Var<S> bag_representation(Var<S> alpha, const std::vector<Var<S>>& xs) {
  if (static_cast<std::size_t>(alpha.rows()) != xs.size()) {
    throw ShapeError("bag_representation: " + std::to_string(alpha.rows()) + " weights for " +
                     std::to_string(xs.size()) + " instances");
  }
  return matmul(transpose(stack_rows(xs)), alpha);
}

// Logits o = W_r q + b_2 and their softmax.
template <typename S>
std::pair<Var<S>, Var<S>> relation_distribution(const BoundAttention<S>& attn, Var<S> q) {
  auto o = affine(q, attn.w_r, attn.b2);
  return {o, softmax(o)};
}

namespace detail {
// Indices of the k largest entries (descending by value, ties by lower
// index), restricted to `candidates`.
template <typename S>
std::vector<Index> top_k(const Matrix<S>& v, const std::vector<Index>& candidates, int k) {
  std::vector<Index> order = candidates;
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return v(a, 0) > v(b, 0); });
  order.resize(static_cast<std::size_t>(std::min<int>(k, static_cast<int>(order.size()))));
  return order;
}
}  // namespace detail

// Rank loss of the generated instance within one bag. e_all holds the scores
// of all m+1 instances; gen_index marks the generated one; k must satisfy
// 1 <= k <= m.
template <typename S>
Var<S> rank_loss_generated(Var<S> e_all, Index gen_index, int k, bool literal_form = false) {
  const Index n = e_all.rows();
  if (gen_index < 0 || gen_index >= n) throw ShapeError("rank_loss: generated index out of range");
  const int m = static_cast<int>(n) - 1;
  if (k < 1 || k > m) {
    throw ShapeError("rank_loss: k = " + std::to_string(k) + " outside [1, " + std::to_string(m) +
                     "]");
  }
  if (literal_form) {
    // Softmax share over the top-k scores of the whole bag, generated one
    // included as a candidate.
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index(0));
    auto sel = detail::top_k(e_all.value(), all, k);
    auto denom = sum_all(exp(gather_elems(e_all, sel)));
    return cwise_div(exp(pick(e_all, gen_index)), denom);
  }
  std::vector<Index> reals;
  reals.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < n; ++i) {
    if (i != gen_index) reals.push_back(i);
  }
  std::vector<Index> sel = detail::top_k(e_all.value(), reals, k);
  sel.push_back(gen_index);
  // -log softmax share of the generated score within {top-k reals, generated}.
  return sub(logsumexp(gather_elems(e_all, sel)), pick(e_all, gen_index));
}

// Mean of the per-bag rank losses.
template <typename S>
Var<S> total_rank_loss(const std::vector<Var<S>>& per_bag) {
  if (per_bag.empty()) throw DataError("total_rank_loss: every bag was skipped");
  return mean_all(concat_rows(per_bag));
}

// Cross-entropy for one bag: -log p(gold), computed from the logits for
// numerical stability.
template <typename S>
Var<S> bag_class_loss(Var<S> logits, int gold_relation) {
  if (gold_relation < 0 || gold_relation >= logits.rows()) {
    throw ShapeError("classification: gold relation out of range");
  }
  return sub(logsumexp(logits), pick(logits, gold_relation));
}

template <typename S>
Var<S> classification_loss(const std::vector<Var<S>>& per_bag) {
  if (per_bag.empty()) throw ShapeError("classification_loss: empty batch");
  return mean_all(concat_rows(per_bag));
}

// L = lambda1 L1 + lambda2 L2; both weights must be positive.
template <typename S>
Var<S> combined_loss(Var<S> l1, Var<S> l2, double lambda1, double lambda2) {
  if (lambda1 <= 0.0 || lambda2 <= 0.0) {
    throw ShapeError("combined_loss: weights must be positive");
  }
  return add(scale(l1, S(lambda1)), scale(l2, S(lambda2)));
}

// Rank of the generated score within a bag: 1 + number of strictly larger
// real scores (1 = top).
template <typename S>
int generated_rank(const Matrix<S>& e_all, Index gen_index) {
  int rank = 1;
  for (Index i = 0; i < e_all.rows(); ++i) {
    if (i != gen_index && e_all(i, 0) > e_all(gen_index, 0)) ++rank;
  }
  return rank;
}

}  // namespace rdsgan
