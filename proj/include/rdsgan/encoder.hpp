#pragma once

// Sentence encoder shared by real and generated instances: token/position
// embedding concatenation, width-3 same-padded convolution, max-over-time
// pooling, tanh, dropout. The output is the instance vector consumed by the
// discriminator and the bag attention.

#include <vector>

#include "rdsgan/corpus.hpp"
#include "rdsgan/tape.hpp"

namespace rdsgan {

template <typename S>
struct EncoderParams {
  Matrix<S> word_embed;      // V x word_dim
  Matrix<S> head_pos_embed;  // (2L-1) x pos_dim
  Matrix<S> tail_pos_embed;  // (2L-1) x pos_dim
  Matrix<S> conv_w;          // n_filters x (3 * token_width)
  Matrix<S> conv_b;          // n_filters x 1
};

template <typename S>
struct BoundEncoder {
  Var<S> word_embed, head_pos_embed, tail_pos_embed, conv_w, conv_b;
};

namespace detail {
inline std::vector<Index> to_index(const std::vector<int>& ids) {
  std::vector<Index> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = ids[i];
  return out;
}
}  // namespace detail

// Row i = word_embed[token i] ++ head_pos_embed[bucket i] ++ tail_pos_embed[bucket i].
template <typename S>
Var<S> embed_instance(const BoundEncoder<S>& enc, const EncodedInstance& inst) {
  for (int id : inst.token_ids) {
    if (id < 0 || id >= enc.word_embed.rows()) {
      throw DataError("embed: token id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(enc.word_embed.rows()));
    }
  }
  for (std::size_t i = 0; i < inst.head_rel_pos.size(); ++i) {
    if (inst.head_rel_pos[i] < 0 || inst.head_rel_pos[i] >= enc.head_pos_embed.rows() ||
        inst.tail_rel_pos[i] < 0 || inst.tail_rel_pos[i] >= enc.tail_pos_embed.rows()) {
      throw DataError("embed: position bucket outside table");
    }
  }
  auto words = gather_rows(enc.word_embed, detail::to_index(inst.token_ids));
  auto heads = gather_rows(enc.head_pos_embed, detail::to_index(inst.head_rel_pos));
  auto tails = gather_rows(enc.tail_pos_embed, detail::to_index(inst.tail_rel_pos));
  return concat_cols<S>({words, heads, tails});
}

// seq: L x token_width -> instance vector (n_filters x 1).
template <typename S>
Var<S> encode_sequence(const BoundEncoder<S>& enc, Var<S> seq, bool training, double dropout_p,
                       SeededRng& rng) {
  if (seq.rows() < 3) {
    throw ShapeError("encode: sequence length " + std::to_string(seq.rows()) +
                     " is shorter than the convolution window");
  }
  auto pooled = tanh(max_over_time(conv1d_same3(seq, enc.conv_w, enc.conv_b)));
  return dropout(pooled, dropout_p, rng, training);
}

template <typename S>
Var<S> encode_instance_vec(const BoundEncoder<S>& enc, const EncodedInstance& inst, bool training,
                           double dropout_p, SeededRng& rng) {
  return encode_sequence(enc, embed_instance(enc, inst), training, dropout_p, rng);
}

}  // namespace rdsgan
