#pragma once

// Adversarial pair: a triplet-seeded BiGRU generator emitting a token
// embedding sequence, and a two-layer discriminator scoring instance vectors.
//
// The generator seed is z = e_h + W_g e_r + e_t with e_r a learned row per
// relation. Both GRU chains unroll autonomously from the projected seed (each
// step consumes the previous hidden state; there is no external input), and
// step t emits out_proj (h_t_fwd ++ h_t_bwd) + bias as one sequence row.

#include <vector>

#include "rdsgan/encoder.hpp"
#include "rdsgan/tape.hpp"

namespace rdsgan {

template <typename S>
struct GruParams {
  Matrix<S> w_update, u_update, b_update;
  Matrix<S> w_reset, u_reset, b_reset;
  Matrix<S> w_cand, u_cand, b_cand;
};

template <typename S>
struct GeneratorParams {
  Matrix<S> relation_matrix;  // N_r x d_s
  Matrix<S> w_g;              // word_dim x d_s
  Matrix<S> seed_proj;        // h_g x word_dim
  GruParams<S> gru_fwd, gru_bwd;
  Matrix<S> out_proj;  // token_width x 2*h_g
  Matrix<S> out_bias;  // token_width x 1
};

template <typename S>
struct DiscriminatorParams {
  Matrix<S> w1;  // h_d x d_s
  Matrix<S> b1;  // h_d x 1
  Matrix<S> w2;  // 1 x h_d
  Matrix<S> b2;  // 1 x 1
};

template <typename S>
struct BoundGru {
  Var<S> w_update, u_update, b_update;
  Var<S> w_reset, u_reset, b_reset;
  Var<S> w_cand, u_cand, b_cand;
};

template <typename S>
struct BoundGenerator {
  Var<S> relation_matrix, w_g, seed_proj;
  BoundGru<S> gru_fwd, gru_bwd;
  Var<S> out_proj, out_bias;
};

template <typename S>
struct BoundDiscriminator {
  Var<S> w1, b1, w2, b2;
};

// z = e_h + W_g e_r + e_t, with e_r the relation's row of the relation matrix
// and e_h, e_t rows of the shared word embedding table.
template <typename S>
Var<S> seed_vector(const BoundGenerator<S>& gen, Var<S> word_embed, int head_word_id,
                   int relation_id, int tail_word_id) {
  if (head_word_id < 0 || head_word_id >= word_embed.rows() || tail_word_id < 0 ||
      tail_word_id >= word_embed.rows()) {
    throw DataError("seed_vector: word id outside vocabulary");
  }
  if (relation_id < 0 || relation_id >= gen.relation_matrix.rows()) {
    throw DataError("seed_vector: relation id " + std::to_string(relation_id) +
                    " outside relation matrix");
  }
  auto e_h = transpose(gather_rows(word_embed, {head_word_id}));
  auto e_t = transpose(gather_rows(word_embed, {tail_word_id}));
  auto e_r = transpose(gather_rows(gen.relation_matrix, {relation_id}));
  return add(add(e_h, matmul(gen.w_g, e_r)), e_t);
}

// One GRU step whose input is the previous hidden state.
template <typename S>
Var<S> gru_step(const BoundGru<S>& g, Var<S> h) {
  auto r = sigmoid(add(add(matmul(g.w_reset, h), matmul(g.u_reset, h)), g.b_reset));
  auto z = sigmoid(add(add(matmul(g.w_update, h), matmul(g.u_update, h)), g.b_update));
  auto n = tanh(add(add(matmul(g.w_cand, h), cwise_mul(r, matmul(g.u_cand, h))), g.b_cand));
  return add(cwise_mul(one_minus(z), n), cwise_mul(z, h));
}

// Unrolls both chains for L steps from the projected seed and stacks the
// projected hidden pairs into an L x token_width sequence. Dropout acts on
// the hidden states consumed by the output projection, not on the recurrence.
template <typename S>
Var<S> generate_sequence(const BoundGenerator<S>& gen, Var<S> z, int L, bool training,
                         double dropout_p, SeededRng& rng) {
  if (L < 1) throw ShapeError("generate_sequence: L must be positive");
  auto h0 = matmul(gen.seed_proj, z);
  std::vector<Var<S>> fwd, bwd;
  fwd.reserve(static_cast<std::size_t>(L));
  bwd.reserve(static_cast<std::size_t>(L));
  auto h = h0;
  for (int t = 0; t < L; ++t) {
    h = gru_step(gen.gru_fwd, h);
    fwd.push_back(h);
  }
  h = h0;
  for (int t = 0; t < L; ++t) {
    h = gru_step(gen.gru_bwd, h);
    bwd.push_back(h);
  }
  std::vector<Var<S>> rows;
  rows.reserve(static_cast<std::size_t>(L));
  for (int t = 0; t < L; ++t) {
    auto hf = dropout(fwd[static_cast<std::size_t>(t)], dropout_p, rng, training);
    auto hb = dropout(bwd[static_cast<std::size_t>(t)], dropout_p, rng, training);
    rows.push_back(add(matmul(gen.out_proj, concat_rows<S>({hf, hb})), gen.out_bias));
  }
  return stack_rows(rows);
}

// Probability that an instance vector comes from the real data; strictly
// inside (0, 1) by the sigmoid clamp.
template <typename S>
Var<S> discriminate(const BoundDiscriminator<S>& d, Var<S> x) {
  if (!x.value().allFinite()) throw NumericError("discriminate: non-finite input");
  auto hidden = tanh(affine(x, d.w1, d.b1));
  return sigmoid(affine(hidden, d.w2, d.b2));
}

// mean log D(real) + mean log(1 - D(fake)); the discriminator phase ascends
// this value.
template <typename S>
Var<S> discriminator_objective(const BoundDiscriminator<S>& d, const std::vector<Var<S>>& real_xs,
                               const std::vector<Var<S>>& fake_xs) {
  if (real_xs.empty() || fake_xs.empty()) {
    throw ShapeError("discriminator_objective: needs both real and generated instances");
  }
  std::vector<Var<S>> real_terms, fake_terms;
  real_terms.reserve(real_xs.size());
  fake_terms.reserve(fake_xs.size());
  for (auto x : real_xs) real_terms.push_back(log(discriminate(d, x)));
  for (auto x : fake_xs) fake_terms.push_back(log(one_minus(discriminate(d, x))));
  return add(mean_all(concat_rows(real_terms)), mean_all(concat_rows(fake_terms)));
}

// mean log(1 - D(fake)): the saturating generator objective, minimized with
// the discriminator held fixed.
template <typename S>
Var<S> generator_adv_objective(const BoundDiscriminator<S>& d, const std::vector<Var<S>>& fake_xs) {
  if (fake_xs.empty()) throw ShapeError("generator_adv_objective: no generated instances");
  std::vector<Var<S>> terms;
  terms.reserve(fake_xs.size());
  for (auto x : fake_xs) terms.push_back(log(one_minus(discriminate(d, x))));
  return mean_all(concat_rows(terms));
}

// Non-saturating alternative: minimize -mean log D(fake).
template <typename S>
Var<S> generator_nonsat_objective(const BoundDiscriminator<S>& d,
                                  const std::vector<Var<S>>& fake_xs) {
  if (fake_xs.empty()) throw ShapeError("generator_nonsat_objective: no generated instances");
  std::vector<Var<S>> terms;
  terms.reserve(fake_xs.size());
  for (auto x : fake_xs) terms.push_back(log(discriminate(d, x)));
  return neg(mean_all(concat_rows(terms)));
}

}  // namespace rdsgan
