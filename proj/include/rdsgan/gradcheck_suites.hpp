#pragma once

// Finite-difference suites over every loss path, shared by the gradcheck CLI
// subcommand and the acceptance harness. Each suite builds the full graph in
// 64-bit with every parameter group trainable, runs one backward pass, and
// compares against central differences.

#include <functional>
#include <string>
#include <vector>

#include "rdsgan/gradcheck.hpp"
#include "rdsgan/trainer.hpp"

namespace rdsgan {

struct SuiteResult {
  std::string name;
  double max_rel_err = 0.0;
  std::string worst_param;
};

namespace detail {

struct GradcheckFixture {
  ModelDims dims;
  Model<double> model{};
  Corpus corpus;
  std::vector<const Bag*> batch;

  static GradcheckFixture make(std::uint64_t seed) {
    GradcheckFixture fx;
    SynthConfig synth;
    synth.n_relations = 3;  // + NA = 4 relation classes
    synth.n_pairs = 8;
    synth.instances_per_bag = 2;
    synth.vocab_size = 24;
    synth.na_fraction = 0.2;
    synth.aligned_length = 12;
    fx.corpus = make_synthetic(synth, seed);

    fx.dims.vocab_size = fx.corpus.token_vocab.size();
    fx.dims.n_relations = fx.corpus.relation_vocab.size();
    fx.dims.word_dim = 8;
    fx.dims.pos_dim = 2;
    fx.dims.n_filters = 8;  // d_s
    fx.dims.aligned_length = 12;
    fx.dims.h_g = 6;
    fx.dims.h_d = 6;
    fx.model = Model<double>::init(fx.dims, seed + 1);
    for (std::size_t i = 0; i < 2 && i < fx.corpus.bags.size(); ++i) {
      fx.batch.push_back(&fx.corpus.bags[i]);
    }
    return fx;
  }
};

// Builds one of the three loss graphs with a fixed dropout stream.
template <typename Build>
SuiteResult run_fd_suite(const std::string& name, Model<double>& model, Build&& build,
                         double tolerance_eps = 1e-5) {
  Tape<double> tape;
  auto bm = model.bind(tape, Trainable::all());
  auto loss = build(tape, bm);
  tape.backward(loss);

  std::vector<std::pair<std::string, Matrix<double>*>> params;
  std::vector<Matrix<double>> grads;
  std::size_t i = 0;
  model.visit_params([&](const char* pname, ParamGroup, int, Matrix<double>& mat) {
    const auto& [bname, bgroup, var] = bm.flat.at(i++);
    params.emplace_back(pname, &mat);
    grads.push_back(tape.grad(var));
  });
  auto eval = [&] {
    Tape<double> t2;
    auto b2 = model.bind(t2, Trainable::none());
    return scalar_value(build(t2, b2));
  };
  FdReport report;
  finite_diff_check(eval, params, grads, tolerance_eps, &report);
  return SuiteResult{name, report.max_rel_err, report.worst_param};
}

}  // namespace detail

inline std::vector<SuiteResult> run_gradcheck_suites(std::uint64_t seed = 2024) {
  auto fx = detail::GradcheckFixture::make(seed);
  const double drop = 0.25;
  std::vector<SuiteResult> results;

  results.push_back(detail::run_fd_suite(
      "discriminator_objective", fx.model, [&](Tape<double>& t, BoundModel<double>& bm) {
        (void)t;
        SeededRng rng(7);
        std::vector<Var<double>> reals, fakes;
        for (std::size_t b = 0; b < fx.batch.size(); ++b) {
          SeededRng bag_rng = rng.fork(b);
          auto xs = detail::encode_bag(bm.encoder, *fx.batch[b], true, drop, bag_rng);
          reals.insert(reals.end(), xs.begin(), xs.end());
          fakes.push_back(detail::generate_instance(bm, *fx.batch[b], fx.dims.aligned_length,
                                                    true, drop, bag_rng));
        }
        return discriminator_objective(bm.discriminator, reals, fakes);
      }));

  results.push_back(detail::run_fd_suite(
      "generator_adversarial", fx.model, [&](Tape<double>& t, BoundModel<double>& bm) {
        (void)t;
        SeededRng rng(8);
        std::vector<Var<double>> fakes;
        for (std::size_t b = 0; b < fx.batch.size(); ++b) {
          fakes.push_back(detail::generate_instance(bm, *fx.batch[b], fx.dims.aligned_length,
                                                    true, drop, rng.fork(b)));
        }
        return generator_adv_objective(bm.discriminator, fakes);
      }));

  results.push_back(detail::run_fd_suite(
      "combined_rank_classification", fx.model, [&](Tape<double>& t, BoundModel<double>& bm) {
        (void)t;
        SeededRng rng(9);
        std::vector<Var<double>> rank_terms, class_terms;
        for (std::size_t b = 0; b < fx.batch.size(); ++b) {
          const Bag& bag = *fx.batch[b];
          SeededRng bag_rng = rng.fork(b);
          auto x0 = detail::generate_instance(bm, bag, fx.dims.aligned_length, true, drop,
                                              bag_rng);
          auto reals = detail::encode_bag(bm.encoder, bag, true, drop, bag_rng);
          std::vector<Var<double>> all_xs{x0};
          all_xs.insert(all_xs.end(), reals.begin(), reals.end());
          auto e_all = bag_scores(bm.attention, all_xs, bag.relation_id);
          rank_terms.push_back(rank_loss_generated(e_all, 0, 1, false));
          auto alpha = attention_weights(e_all);
          auto q = bag_representation(alpha, all_xs);
          auto [o, p] = relation_distribution(bm.attention, q);
          (void)p;
          class_terms.push_back(bag_class_loss(o, bag.relation_id));
        }
        return combined_loss(total_rank_loss(rank_terms), classification_loss(class_terms), 0.7,
                             1.3);
      }));

  return results;
}

}  // namespace rdsgan
