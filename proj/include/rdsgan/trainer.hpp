#pragma once

// Three-phase alternating trainer. Each outer iteration runs s_D
// discriminator steps (ascend the discrimination objective with the generator
// fixed), s_G adversarial generator steps (descend mean log(1 - D) with the
// discriminator fixed), and s_R ranking steps (descend lambda1 L1 + lambda2 L2
// with the discriminator fixed). Trainable sets per phase:
//   phase 1: discriminator only
//   phase 2: generator + shared encoder/embeddings
//   phase 3: generator + attention/classifier
// Every batch, dropout mask and shuffle is derived from (seed, phase, step),
// so a run is a pure function of (config, corpus, seed).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rdsgan/corpus.hpp"
#include "rdsgan/model.hpp"

namespace rdsgan {

struct TrainConfig {
  int s_d = 1, s_g = 1, s_r = 1;
  int outer_iterations = 1;
  int batch_size = 160;
  double lr_g = 1e-5;
  double lr_d = 1e-4;
  double lambda1 = 1.0, lambda2 = 1.0;
  int top_k = 1;
  double dropout_p = 0.5;
  std::uint64_t seed = 0;
  bool non_saturating_g = false;
  bool literal_eq8 = false;
  bool gen_in_class_loss = true;

  void validate() const {
    if (s_d < 0 || s_g < 0 || s_r < 0) throw ShapeError("train: step counts must be >= 0");
    if (outer_iterations < 0) throw ShapeError("train: outer iterations must be >= 0");
    if (batch_size < 1) throw ShapeError("train: batch size must be >= 1");
    if (lr_g <= 0.0 || lr_d <= 0.0) throw ShapeError("train: learning rates must be positive");
    if (lambda1 <= 0.0 || lambda2 <= 0.0) throw ShapeError("train: loss weights must be positive");
    if (top_k < 1) throw ShapeError("train: top-k must be >= 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ShapeError("train: dropout must be in [0, 1)");
  }
};

struct TrainLogRecord {
  long iteration = 0;  // global optimizer step, monotone
  int outer = 0;
  std::string phase;  // "disc" | "gen_adv" | "rank"
  double objective = 0.0;
  double mean_d_real = std::nan("");
  double mean_d_fake = std::nan("");
  double rank_l1 = std::nan("");
  double rank_l2 = std::nan("");
  double mean_gen_rank = std::nan("");    // 1 = top of the bag
  double gen_beaten_frac = std::nan("");  // mean fraction of reals scored below the generated
  double wall_ms = 0.0;
};

// Without-replacement batches, reshuffled each epoch from the stream seed.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, int batch_size, SeededRng rng)
      : batch_size_(batch_size), rng_(rng), order_(n) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    reshuffle();
  }

  std::vector<std::size_t> next() {
    if (pos_ >= order_.size()) reshuffle();
    std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(batch_size_),
                                             order_.size() - pos_);
    std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                   order_.begin() + static_cast<std::ptrdiff_t>(pos_ + take));
    pos_ += take;
    return batch;
  }

 private:
  void reshuffle() {
    rng_.shuffle(order_);
    pos_ = 0;
  }
  int batch_size_;
  SeededRng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

namespace detail {

// Stream tags for deriving per-step randomness.
enum : std::uint64_t { kPhaseDisc = 1, kPhaseGenAdv = 2, kPhaseRank = 3 };

// Encodes all real instances of a bag (dropout streams forked per instance).
template <typename S>
std::vector<Var<S>> encode_bag(const BoundEncoder<S>& enc, const Bag& bag, bool training,
                               double dropout_p, SeededRng bag_rng) {
  std::vector<Var<S>> xs;
  xs.reserve(bag.instances.size());
  for (std::size_t i = 0; i < bag.instances.size(); ++i) {
    SeededRng inst_rng = bag_rng.fork(i);
    xs.push_back(encode_instance_vec(enc, bag.instances[i], training, dropout_p, inst_rng));
  }
  return xs;
}

template <typename S>
Var<S> generate_instance(const BoundModel<S>& bm, const Bag& bag, int L, bool training,
                         double dropout_p, SeededRng bag_rng) {
  auto z = seed_vector(bm.generator, bm.encoder.word_embed, bag.head_word_id, bag.relation_id,
                       bag.tail_word_id);
  SeededRng gen_rng = bag_rng.fork(0x67656eULL);  // generator stream
  auto seq = generate_sequence(bm.generator, z, L, training, dropout_p, gen_rng);
  SeededRng enc_rng = bag_rng.fork(0x656e63ULL);  // encoder stream for the generated path
  return encode_sequence(bm.encoder, seq, training, dropout_p, enc_rng);
}

inline void check_finite(double v, const char*, long) {
  if (!std::isfinite(v)) throw NumericError("non-finite objective");
}

}  // namespace detail

template <typename S>
struct StepStats {
  double objective = 0.0;
  double mean_d_real = std::nan("");
  double mean_d_fake = std::nan("");
  double l1 = std::nan("");
  double l2 = std::nan("");
  double mean_gen_rank = std::nan("");
  double beaten_frac = std::nan("");
};

// Phase 1: fix G, ascend mean log D(real) + mean log(1 - D(fake)) on the
// discriminator parameters.
template <typename S>
StepStats<S> step_discriminator(Model<S>& model, const std::vector<const Bag*>& batch,
                                const TrainConfig& cfg, std::uint64_t step_seed, S lr) {
  Tape<S> tape;
  auto bm = model.bind(tape, Trainable::discriminator_phase());
  SeededRng step_rng(step_seed);
  std::vector<Var<S>> reals, fakes;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    SeededRng bag_rng = step_rng.fork(b);
    auto xs = detail::encode_bag(bm.encoder, *batch[b], true, cfg.dropout_p, bag_rng);
    reals.insert(reals.end(), xs.begin(), xs.end());
    fakes.push_back(detail::generate_instance(bm, *batch[b], model.dims.aligned_length, true,
                                              cfg.dropout_p, bag_rng));
  }
  auto objective = discriminator_objective(bm.discriminator, reals, fakes);
  StepStats<S> stats;
  stats.objective = double(scalar_value(objective));
  double dr = 0.0, df = 0.0;
  for (auto x : reals) dr += double(scalar_value(discriminate(bm.discriminator, x)));
  for (auto x : fakes) df += double(scalar_value(discriminate(bm.discriminator, x)));
  stats.mean_d_real = dr / double(reals.size());
  stats.mean_d_fake = df / double(fakes.size());
  if (lr > S(0)) {
    tape.backward(neg(objective));  // ascend = descend the negation
    apply_sgd(model, bm, tape, Trainable::discriminator_phase(), lr);
  }
  return stats;
}

// Phase 2: fix D, descend the adversarial generator objective on the
// generator and the shared encoder/embedding parameters.
template <typename S>
StepStats<S> step_generator_adv(Model<S>& model, const std::vector<const Bag*>& batch,
                                const TrainConfig& cfg, std::uint64_t step_seed, S lr) {
  Tape<S> tape;
  auto bm = model.bind(tape, Trainable::generator_adv_phase());
  SeededRng step_rng(step_seed);
  std::vector<Var<S>> fakes;
  fakes.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    fakes.push_back(detail::generate_instance(bm, *batch[b], model.dims.aligned_length, true,
                                              cfg.dropout_p, step_rng.fork(b)));
  }
  auto objective = cfg.non_saturating_g ? generator_nonsat_objective(bm.discriminator, fakes)
                                        : generator_adv_objective(bm.discriminator, fakes);
  StepStats<S> stats;
  stats.objective = double(scalar_value(objective));
  double df = 0.0;
  for (auto x : fakes) df += double(scalar_value(discriminate(bm.discriminator, x)));
  stats.mean_d_fake = df / double(fakes.size());
  if (lr > S(0)) {
    tape.backward(objective);
    apply_sgd(model, bm, tape, Trainable::generator_adv_phase(), lr);
  }
  return stats;
}

// Phase 3: fix D, descend lambda1 L1 + lambda2 L2 on the generator plus the
// attention/classifier parameters. The generated instance joins the bag at
// index 0 for ranking, and by default also for the classification loss.
template <typename S>
StepStats<S> step_generator_rank(Model<S>& model, const std::vector<const Bag*>& batch,
                                 const TrainConfig& cfg, std::uint64_t step_seed, S lr) {
  Tape<S> tape;
  auto bm = model.bind(tape, Trainable::rank_phase());
  SeededRng step_rng(step_seed);
  std::vector<Var<S>> rank_terms, class_terms;
  double rank_sum = 0.0, beaten_sum = 0.0;
  std::size_t ranked_bags = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Bag& bag = *batch[b];
    SeededRng bag_rng = step_rng.fork(b);
    auto x0 = detail::generate_instance(bm, bag, model.dims.aligned_length, true, cfg.dropout_p,
                                        bag_rng);
    auto reals = detail::encode_bag(bm.encoder, bag, true, cfg.dropout_p, bag_rng);

    std::vector<Var<S>> all_xs;
    all_xs.reserve(reals.size() + 1);
    all_xs.push_back(x0);
    all_xs.insert(all_xs.end(), reals.begin(), reals.end());
    auto e_all = bag_scores(bm.attention, all_xs, bag.relation_id);

    const int m = static_cast<int>(reals.size());
    if (m >= 1) {
      const int k = std::min(cfg.top_k, m);
      rank_terms.push_back(rank_loss_generated(e_all, 0, k, cfg.literal_eq8));
      rank_sum += generated_rank(e_all.value(), 0);
      int below = 0;
      for (Index i = 1; i < e_all.rows(); ++i) {
        if (e_all.value()(i, 0) < e_all.value()(0, 0)) ++below;
      }
      beaten_sum += double(below) / double(m);
      ++ranked_bags;
    }

    const auto& class_xs = cfg.gen_in_class_loss ? all_xs : reals;
    auto e_class = cfg.gen_in_class_loss ? e_all : bag_scores(bm.attention, reals, bag.relation_id);
    auto alpha = attention_weights(e_class);
    auto q = bag_representation(alpha, class_xs);
    auto [o, p] = relation_distribution(bm.attention, q);
    (void)p;
    class_terms.push_back(bag_class_loss(o, bag.relation_id));
  }
  auto l1 = total_rank_loss(rank_terms);
  auto l2 = classification_loss(class_terms);
  auto loss = combined_loss(l1, l2, cfg.lambda1, cfg.lambda2);

  StepStats<S> stats;
  stats.objective = double(scalar_value(loss));
  stats.l1 = double(scalar_value(l1));
  stats.l2 = double(scalar_value(l2));
  stats.mean_gen_rank = ranked_bags ? rank_sum / double(ranked_bags) : std::nan("");
  stats.beaten_frac = ranked_bags ? beaten_sum / double(ranked_bags) : std::nan("");
  if (lr > S(0)) {
    tape.backward(loss);
    apply_sgd(model, bm, tape, Trainable::rank_phase(), lr);
  }
  return stats;
}

template <typename S>
struct TrainResult {
  Model<S> model;
  std::vector<TrainLogRecord> log;
};

// Algorithm entry point: runs the full alternating schedule on an existing
// model. Distinct sampler streams per phase keep batching deterministic.
template <typename S>
std::vector<TrainLogRecord> train_loop(Model<S>& model, const Corpus& corpus,
                                       const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.bags.empty()) throw DataError("train: corpus has no bags");

  SeededRng run_rng(cfg.seed);
  BatchSampler disc_sampler(corpus.bags.size(), cfg.batch_size,
                            run_rng.fork(detail::kPhaseDisc));
  BatchSampler adv_sampler(corpus.bags.size(), cfg.batch_size,
                           run_rng.fork(detail::kPhaseGenAdv));
  BatchSampler rank_sampler(corpus.bags.size(), cfg.batch_size,
                            run_rng.fork(detail::kPhaseRank));

  std::vector<TrainLogRecord> log;
  long step = 0;
  const auto t0 = std::chrono::steady_clock::now();
  auto wall_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  auto pick_batch = [&](BatchSampler& sampler) {
    std::vector<const Bag*> batch;
    for (std::size_t i : sampler.next()) batch.push_back(&corpus.bags[i]);
    return batch;
  };
  auto step_seed = [&](std::uint64_t phase) {
    return run_rng.fork(phase * 0x100000000ULL + static_cast<std::uint64_t>(step)).next_u64();
  };

  auto run_step = [&](const char* phase, auto&& fn) -> StepStats<S> {
    try {
      StepStats<S> stats = fn();
      detail::check_finite(stats.objective, phase, step);
      return stats;
    } catch (const NumericError& e) {
      throw NumericError("phase " + std::string(phase) + ", step " + std::to_string(step) + ": " +
                         e.what());
    }
  };

  for (int outer = 0; outer < cfg.outer_iterations; ++outer) {
    for (int i = 0; i < cfg.s_d; ++i) {
      auto stats = run_step("disc", [&] {
        return step_discriminator(model, pick_batch(disc_sampler), cfg,
                                  step_seed(detail::kPhaseDisc), S(cfg.lr_d));
      });
      log.push_back(TrainLogRecord{step++, outer, "disc", stats.objective, stats.mean_d_real,
                                   stats.mean_d_fake, std::nan(""), std::nan(""), std::nan(""),
                                   std::nan(""), wall_ms()});
    }
    for (int i = 0; i < cfg.s_g; ++i) {
      auto stats = run_step("gen_adv", [&] {
        return step_generator_adv(model, pick_batch(adv_sampler), cfg,
                                  step_seed(detail::kPhaseGenAdv), S(cfg.lr_g));
      });
      log.push_back(TrainLogRecord{step++, outer, "gen_adv", stats.objective, std::nan(""),
                                   stats.mean_d_fake, std::nan(""), std::nan(""), std::nan(""),
                                   std::nan(""), wall_ms()});
    }
    for (int i = 0; i < cfg.s_r; ++i) {
      auto stats = run_step("rank", [&] {
        return step_generator_rank(model, pick_batch(rank_sampler), cfg,
                                   step_seed(detail::kPhaseRank), S(cfg.lr_g));
      });
      log.push_back(TrainLogRecord{step++, outer, "rank", stats.objective, std::nan(""),
                                   std::nan(""), stats.l1, stats.l2, stats.mean_gen_rank,
                                   stats.beaten_frac, wall_ms()});
    }
  }
  return log;
}

template <typename S>
TrainResult<S> train(const TrainConfig& cfg, const ModelDims& dims, const Corpus& corpus) {
  cfg.validate();
  TrainResult<S> result{Model<S>::init(dims, cfg.seed), {}};
  result.log = train_loop(result.model, corpus, cfg);
  return result;
}

}  // namespace rdsgan
