#pragma once

// Aggregate trainable state: encoder, generator, discriminator and attention
// classifier, plus the sizing record shared by all of them. visit_params()
// enumerates every named tensor in a fixed order; the checkpoint format,
// parameter-group hashing and gradient collection all rely on that order.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rdsgan/attention.hpp"
#include "rdsgan/encoder.hpp"
#include "rdsgan/gan.hpp"
#include "rdsgan/tape.hpp"

namespace rdsgan {

struct ModelDims {
  int vocab_size = 0;   // tokens, PAD/UNK included
  int n_relations = 0;  // NA included
  int word_dim = 50;
  int pos_dim = 10;
  int n_filters = 230;  // instance vector width d_s
  int window = 3;
  int aligned_length = 120;  // L
  int h_g = 64;              // GRU hidden width per direction
  int h_d = 64;              // discriminator hidden width

  int token_width() const { return word_dim + 2 * pos_dim; }
  int n_pos_buckets() const { return 2 * aligned_length - 1; }

  void validate() const {
    if (vocab_size < 2) throw ShapeError("dims: vocabulary must hold PAD and UNK");
    if (n_relations < 2) throw ShapeError("dims: need NA plus at least one relation");
    if (window != 3) throw ShapeError("dims: only window 3 is supported");
    if (aligned_length < 3) throw ShapeError("dims: aligned length must be at least 3");
    if (word_dim < 1 || pos_dim < 1 || n_filters < 1 || h_g < 1 || h_d < 1) {
      throw ShapeError("dims: all widths must be positive");
    }
  }
};

enum class ParamGroup { Encoder, Generator, Discriminator, Attention };

struct Trainable {
  bool encoder = false, generator = false, discriminator = false, attention = false;

  static Trainable all() { return {true, true, true, true}; }
  static Trainable none() { return {}; }
  static Trainable discriminator_phase() { return {false, false, true, false}; }
  static Trainable generator_adv_phase() { return {true, true, false, false}; }
  static Trainable rank_phase() { return {false, true, false, true}; }

  bool has(ParamGroup g) const {
    switch (g) {
      case ParamGroup::Encoder: return encoder;
      case ParamGroup::Generator: return generator;
      case ParamGroup::Discriminator: return discriminator;
      case ParamGroup::Attention: return attention;
    }
    return false;
  }
};

template <typename S>
struct BoundModel {
  BoundEncoder<S> encoder;
  BoundGenerator<S> generator;
  BoundDiscriminator<S> discriminator;
  BoundAttention<S> attention;
  // (name, group, var) in visit_params order, for gradient collection.
  std::vector<std::tuple<std::string, ParamGroup, Var<S>>> flat;
};

template <typename S>
struct Model {
  ModelDims dims;
  EncoderParams<S> encoder;
  GeneratorParams<S> generator;
  DiscriminatorParams<S> discriminator;
  AttentionParams<S> attention;

  static Model init(const ModelDims& dims, std::uint64_t seed);

  // f(name, group, rank, matrix). Rank records how extents serialize: rank 1
  // tensors are stored as n x 1.
  template <class F>
  void visit_params(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit_params(F&& f) const {
    visit_impl(*this, f);
  }

  BoundModel<S> bind(Tape<S>& tape, Trainable trainable) const;

  std::uint64_t group_hash(ParamGroup g) const;

 private:
  template <class Self, class F>
  static void visit_impl(Self& m, F&& f);
};

template <typename S>
template <class Self, class F>
void Model<S>::visit_impl(Self& m, F&& f) {
  f("encoder.word_embed", ParamGroup::Encoder, 2, m.encoder.word_embed);
  f("encoder.head_pos_embed", ParamGroup::Encoder, 2, m.encoder.head_pos_embed);
  f("encoder.tail_pos_embed", ParamGroup::Encoder, 2, m.encoder.tail_pos_embed);
  f("encoder.conv_w", ParamGroup::Encoder, 2, m.encoder.conv_w);
  f("encoder.conv_b", ParamGroup::Encoder, 1, m.encoder.conv_b);

  f("generator.relation_matrix", ParamGroup::Generator, 2, m.generator.relation_matrix);
  f("generator.w_g", ParamGroup::Generator, 2, m.generator.w_g);
  f("generator.seed_proj", ParamGroup::Generator, 2, m.generator.seed_proj);
  f("generator.gru_fwd.w_update", ParamGroup::Generator, 2, m.generator.gru_fwd.w_update);
  f("generator.gru_fwd.u_update", ParamGroup::Generator, 2, m.generator.gru_fwd.u_update);
  f("generator.gru_fwd.b_update", ParamGroup::Generator, 1, m.generator.gru_fwd.b_update);
  f("generator.gru_fwd.w_reset", ParamGroup::Generator, 2, m.generator.gru_fwd.w_reset);
  f("generator.gru_fwd.u_reset", ParamGroup::Generator, 2, m.generator.gru_fwd.u_reset);
  f("generator.gru_fwd.b_reset", ParamGroup::Generator, 1, m.generator.gru_fwd.b_reset);
  f("generator.gru_fwd.w_cand", ParamGroup::Generator, 2, m.generator.gru_fwd.w_cand);
  f("generator.gru_fwd.u_cand", ParamGroup::Generator, 2, m.generator.gru_fwd.u_cand);
  f("generator.gru_fwd.b_cand", ParamGroup::Generator, 1, m.generator.gru_fwd.b_cand);
  f("generator.gru_bwd.w_update", ParamGroup::Generator, 2, m.generator.gru_bwd.w_update);
  f("generator.gru_bwd.u_update", ParamGroup::Generator, 2, m.generator.gru_bwd.u_update);
  f("generator.gru_bwd.b_update", ParamGroup::Generator, 1, m.generator.gru_bwd.b_update);
  f("generator.gru_bwd.w_reset", ParamGroup::Generator, 2, m.generator.gru_bwd.w_reset);
  f("generator.gru_bwd.u_reset", ParamGroup::Generator, 2, m.generator.gru_bwd.u_reset);
  f("generator.gru_bwd.b_reset", ParamGroup::Generator, 1, m.generator.gru_bwd.b_reset);
  f("generator.gru_bwd.w_cand", ParamGroup::Generator, 2, m.generator.gru_bwd.w_cand);
  f("generator.gru_bwd.u_cand", ParamGroup::Generator, 2, m.generator.gru_bwd.u_cand);
  f("generator.gru_bwd.b_cand", ParamGroup::Generator, 1, m.generator.gru_bwd.b_cand);
  f("generator.out_proj", ParamGroup::Generator, 2, m.generator.out_proj);
  f("generator.out_bias", ParamGroup::Generator, 1, m.generator.out_bias);

  f("discriminator.w1", ParamGroup::Discriminator, 2, m.discriminator.w1);
  f("discriminator.b1", ParamGroup::Discriminator, 1, m.discriminator.b1);
  f("discriminator.w2", ParamGroup::Discriminator, 2, m.discriminator.w2);
  f("discriminator.b2", ParamGroup::Discriminator, 1, m.discriminator.b2);

  f("attention.query_table", ParamGroup::Attention, 2, m.attention.query_table);
  f("attention.bilinear", ParamGroup::Attention, 2, m.attention.bilinear);
  f("attention.w_r", ParamGroup::Attention, 2, m.attention.w_r);
  f("attention.b2", ParamGroup::Attention, 1, m.attention.b2);
}

namespace detail {

template <typename S>
Matrix<S> uniform_init(Index r, Index c, double bound, SeededRng& rng) {
  Matrix<S> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = S(rng.uniform(-bound, bound));
  return m;
}

template <typename S>
Matrix<S> glorot_init(Index rows, Index cols, SeededRng& rng) {
  const double bound = std::sqrt(6.0 / double(rows + cols));
  return uniform_init<S>(rows, cols, bound, rng);
}

}  // namespace detail

template <typename S>
Model<S> Model<S>::init(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  Model<S> m;
  m.dims = dims;
  SeededRng rng(seed);
  const Index v = dims.vocab_size, nr = dims.n_relations, wd = dims.word_dim, pd = dims.pos_dim;
  const Index ds = dims.n_filters, tw = dims.token_width(), hg = dims.h_g, hd = dims.h_d;

  m.encoder.word_embed = detail::uniform_init<S>(v, wd, 0.25, rng);
  m.encoder.head_pos_embed = detail::uniform_init<S>(dims.n_pos_buckets(), pd, 0.25, rng);
  m.encoder.tail_pos_embed = detail::uniform_init<S>(dims.n_pos_buckets(), pd, 0.25, rng);
  m.encoder.conv_w = detail::glorot_init<S>(ds, 3 * tw, rng);
  m.encoder.conv_b = Matrix<S>::Zero(ds, 1);

  m.generator.relation_matrix = detail::uniform_init<S>(nr, ds, 0.25, rng);
  m.generator.w_g = detail::glorot_init<S>(wd, ds, rng);
  m.generator.seed_proj = detail::glorot_init<S>(hg, wd, rng);
  auto init_gru = [&](GruParams<S>& g) {
    g.w_update = detail::glorot_init<S>(hg, hg, rng);
    g.u_update = detail::glorot_init<S>(hg, hg, rng);
    g.b_update = Matrix<S>::Zero(hg, 1);
    g.w_reset = detail::glorot_init<S>(hg, hg, rng);
    g.u_reset = detail::glorot_init<S>(hg, hg, rng);
    g.b_reset = Matrix<S>::Zero(hg, 1);
    g.w_cand = detail::glorot_init<S>(hg, hg, rng);
    g.u_cand = detail::glorot_init<S>(hg, hg, rng);
    g.b_cand = Matrix<S>::Zero(hg, 1);
  };
  init_gru(m.generator.gru_fwd);
  init_gru(m.generator.gru_bwd);
  m.generator.out_proj = detail::glorot_init<S>(tw, 2 * hg, rng);
  m.generator.out_bias = Matrix<S>::Zero(tw, 1);

  m.discriminator.w1 = detail::glorot_init<S>(hd, ds, rng);
  m.discriminator.b1 = Matrix<S>::Zero(hd, 1);
  m.discriminator.w2 = detail::glorot_init<S>(1, hd, rng);
  m.discriminator.b2 = Matrix<S>::Zero(1, 1);

  m.attention.query_table = detail::uniform_init<S>(nr, ds, 0.25, rng);
  m.attention.bilinear = Matrix<S>::Identity(ds, ds);
  m.attention.w_r = detail::glorot_init<S>(nr, ds, rng);
  m.attention.b2 = Matrix<S>::Zero(nr, 1);
  return m;
}

template <typename S>
BoundModel<S> Model<S>::bind(Tape<S>& tape, Trainable trainable) const {
  BoundModel<S> b;
  std::vector<std::pair<std::string, Var<S>>> by_name;
  visit_params([&](const char* name, ParamGroup group, int, const Matrix<S>& mat) {
    Var<S> var = trainable.has(group) ? tape.variable(mat) : tape.constant(mat);
    by_name.emplace_back(name, var);
    b.flat.emplace_back(name, group, var);
  });
  std::size_t i = 0;
  auto next = [&](const char* name) {
    if (i >= by_name.size() || by_name[i].first != name) {
      throw ShapeError(std::string("bind: parameter order drifted at ") + name);
    }
    return by_name[i++].second;
  };
  b.encoder.word_embed = next("encoder.word_embed");
  b.encoder.head_pos_embed = next("encoder.head_pos_embed");
  b.encoder.tail_pos_embed = next("encoder.tail_pos_embed");
  b.encoder.conv_w = next("encoder.conv_w");
  b.encoder.conv_b = next("encoder.conv_b");
  b.generator.relation_matrix = next("generator.relation_matrix");
  b.generator.w_g = next("generator.w_g");
  b.generator.seed_proj = next("generator.seed_proj");
  auto bind_gru = [&](BoundGru<S>& g, const std::string& prefix) {
    g.w_update = next((prefix + ".w_update").c_str());
    g.u_update = next((prefix + ".u_update").c_str());
    g.b_update = next((prefix + ".b_update").c_str());
    g.w_reset = next((prefix + ".w_reset").c_str());
    g.u_reset = next((prefix + ".u_reset").c_str());
    g.b_reset = next((prefix + ".b_reset").c_str());
    g.w_cand = next((prefix + ".w_cand").c_str());
    g.u_cand = next((prefix + ".u_cand").c_str());
    g.b_cand = next((prefix + ".b_cand").c_str());
  };
  bind_gru(b.generator.gru_fwd, "generator.gru_fwd");
  bind_gru(b.generator.gru_bwd, "generator.gru_bwd");
  b.generator.out_proj = next("generator.out_proj");
  b.generator.out_bias = next("generator.out_bias");
  b.discriminator.w1 = next("discriminator.w1");
  b.discriminator.b1 = next("discriminator.b1");
  b.discriminator.w2 = next("discriminator.w2");
  b.discriminator.b2 = next("discriminator.b2");
  b.attention.query_table = next("attention.query_table");
  b.attention.bilinear = next("attention.bilinear");
  b.attention.w_r = next("attention.w_r");
  b.attention.b2 = next("attention.b2");
  return b;
}

// FNV-1a over the exact parameter bytes of one group; used by the phase
// isolation checks.
template <typename S>
std::uint64_t Model<S>::group_hash(ParamGroup g) const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix_bytes = [&](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  visit_params([&](const char*, ParamGroup group, int, const Matrix<S>& mat) {
    if (group == g) mix_bytes(mat.data(), sizeof(S) * static_cast<std::size_t>(mat.size()));
  });
  return h;
}

// Applies one SGD update to every trainable parameter from the gradients on
// the tape. Gradient ascent is expressed by negating the loss upstream.
template <typename S>
void apply_sgd(Model<S>& model, const BoundModel<S>& bound, Tape<S>& tape, Trainable trainable,
               S lr) {
  std::size_t i = 0;
  model.visit_params([&](const char* name, ParamGroup group, int, Matrix<S>& mat) {
    const auto& [bname, bgroup, var] = bound.flat.at(i++);
    if (bname != name) throw ShapeError(std::string("apply_sgd: order drifted at ") + name);
    if (trainable.has(group)) sgd_step(mat, tape.grad(var), lr);
  });
}

}  // namespace rdsgan
