#pragma once

// Held-out evaluation: per-pair/per-relation predictions, Precision@N,
// non-interpolated PR curve and its trapezoidal AUC, and the report files.
// NA is never a prediction. Prediction order is canonical: descending score,
// ties by (head_id, tail_id, relation name).

#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "rdsgan/corpus.hpp"
#include "rdsgan/model.hpp"

namespace rdsgan {

struct Prediction {
  std::string head_id, tail_id;
  int relation_id = 0;
  std::string relation;
  double score = 0.0;
};

struct PRPoint {
  int rank = 0;
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;  // score of the prediction at this rank
};

using GoldFact = std::tuple<std::string, std::string, int>;  // head_id, tail_id, relation_id
using GoldSet = std::set<GoldFact>;

GoldSet gold_facts(const Corpus& test_corpus);

void sort_predictions(std::vector<Prediction>& preds);

double precision_at_n(const std::vector<Prediction>& sorted_preds, const GoldSet& gold, int n);

std::vector<PRPoint> pr_curve(const std::vector<Prediction>& sorted_preds, const GoldSet& gold);

// Trapezoid over recall with a (recall 0, first precision) anchor.
double auc(const std::vector<PRPoint>& points);

// Same integral, cut off at max_recall (reported alongside the full value).
double auc_up_to_recall(const std::vector<PRPoint>& points, double max_recall);

struct EvalCounts {
  std::size_t predictions = 0;
  std::size_t gold = 0;
  std::size_t bags = 0;
};

// Writes pr_curve.csv ("rank,score,precision,recall") and metrics.json into
// out_dir. Byte-stable for identical inputs.
void emit_report(const std::string& out_dir, const std::vector<Prediction>& sorted_preds,
                 const GoldSet& gold, const EvalCounts& counts);

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

namespace detail {

// Relation-specific attention over the bag's real instances; returns the
// probability assigned to `relation_id`.
template <typename S>
double score_bag_for_relation(const BoundModel<S>& bm, const std::vector<Var<S>>& xs,
                              int relation_id) {
  auto e = bag_scores(bm.attention, xs, relation_id);
  auto alpha = attention_weights(e);
  auto q = bag_representation(alpha, xs);
  auto [o, p] = relation_distribution(bm.attention, q);
  (void)o;
  return double(scalar_value(pick(p, relation_id)));
}

}  // namespace detail

// One prediction per (test bag, non-NA relation). Generated instances never
// participate. threads > 1 scores bags in parallel with an input-order merge.
template <typename S>
std::vector<Prediction> predict(const Model<S>& model, const Corpus& test_corpus, int threads = 1);

}  // namespace rdsgan

#include "rdsgan/eval_impl.hpp"
