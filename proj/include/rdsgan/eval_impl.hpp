#pragma once

// Template half of eval.hpp (prediction needs the model's scalar type).

#include <thread>

#include "rdsgan/eval.hpp"

namespace rdsgan {

template <typename S>
std::vector<Prediction> predict(const Model<S>& model, const Corpus& test_corpus, int threads) {
  if (model.dims.vocab_size != test_corpus.token_vocab.size() ||
      model.dims.n_relations != test_corpus.relation_vocab.size()) {
    throw DataError("predict: model was trained with a different vocabulary (" +
                    std::to_string(model.dims.vocab_size) + " tokens, " +
                    std::to_string(model.dims.n_relations) + " relations) than the corpus (" +
                    std::to_string(test_corpus.token_vocab.size()) + ", " +
                    std::to_string(test_corpus.relation_vocab.size()) + ")");
  }
  const int n_rel = model.dims.n_relations;
  const std::size_t n_bags = test_corpus.bags.size();
  std::vector<std::vector<Prediction>> slots(n_bags);

  auto score_bag = [&](std::size_t b) {
    const Bag& bag = test_corpus.bags[b];
    Tape<S> tape;
    auto bm = model.bind(tape, Trainable::none());
    SeededRng rng(0);  // inference: dropout inactive, the stream is never drawn
    std::vector<Var<S>> xs;
    xs.reserve(bag.instances.size());
    for (const auto& inst : bag.instances) {
      xs.push_back(encode_instance_vec(bm.encoder, inst, false, 0.0, rng));
    }
    auto& out = slots[b];
    out.reserve(static_cast<std::size_t>(n_rel - 1));
    for (int rel = 1; rel < n_rel; ++rel) {  // NA (id 0) is never predicted
      Prediction p;
      p.head_id = bag.head_id;
      p.tail_id = bag.tail_id;
      p.relation_id = rel;
      p.relation = test_corpus.relation_vocab.name(rel);
      p.score = detail::score_bag_for_relation(bm, xs, rel);
      out.push_back(std::move(p));
    }
  };

  if (threads <= 1 || n_bags < 2) {
    for (std::size_t b = 0; b < n_bags; ++b) score_bag(b);
  } else {
    const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n_bags);
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t b = w; b < n_bags; b += n_workers) score_bag(b);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<Prediction> preds;
  for (auto& slot : slots) {
    preds.insert(preds.end(), slot.begin(), slot.end());
  }
  sort_predictions(preds);
  return preds;
}

}  // namespace rdsgan
