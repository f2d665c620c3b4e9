#include "rdsgan/eval.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace rdsgan {

GoldSet gold_facts(const Corpus& test_corpus) {
  GoldSet gold;
  for (const auto& bag : test_corpus.bags) {
    for (int rel : bag.gold_relations) {
      gold.emplace(bag.head_id, bag.tail_id, rel);
    }
  }
  return gold;
}

void sort_predictions(std::vector<Prediction>& preds) {
  std::sort(preds.begin(), preds.end(), [](const Prediction& a, const Prediction& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.head_id != b.head_id) return a.head_id < b.head_id;
    if (a.tail_id != b.tail_id) return a.tail_id < b.tail_id;
    return a.relation < b.relation;
  });
}

double precision_at_n(const std::vector<Prediction>& sorted_preds, const GoldSet& gold, int n) {
  if (n < 1 || static_cast<std::size_t>(n) > sorted_preds.size()) {
    throw ShapeError("precision_at_n: N = " + std::to_string(n) + " outside [1, " +
                     std::to_string(sorted_preds.size()) + "]");
  }
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const auto& p = sorted_preds[static_cast<std::size_t>(i)];
    if (gold.count({p.head_id, p.tail_id, p.relation_id})) ++correct;
  }
  return double(correct) / double(n);
}

std::vector<PRPoint> pr_curve(const std::vector<Prediction>& sorted_preds, const GoldSet& gold) {
  if (gold.empty()) throw DataError("pr_curve: empty gold set");
  std::vector<PRPoint> points;
  points.reserve(sorted_preds.size());
  int correct = 0;
  for (std::size_t i = 0; i < sorted_preds.size(); ++i) {
    const auto& p = sorted_preds[i];
    if (gold.count({p.head_id, p.tail_id, p.relation_id})) ++correct;
    PRPoint pt;
    pt.rank = static_cast<int>(i + 1);
    pt.precision = double(correct) / double(i + 1);
    pt.recall = double(correct) / double(gold.size());
    pt.threshold = p.score;
    points.push_back(pt);
  }
  return points;
}

double auc(const std::vector<PRPoint>& points) {
  if (points.empty()) return 0.0;
  double area = 0.0;
  double prev_recall = 0.0, prev_precision = points.front().precision;  // anchor at recall 0
  for (const auto& pt : points) {
    area += (pt.recall - prev_recall) * 0.5 * (pt.precision + prev_precision);
    prev_recall = pt.recall;
    prev_precision = pt.precision;
  }
  return area;
}

double auc_up_to_recall(const std::vector<PRPoint>& points, double max_recall) {
  if (points.empty()) return 0.0;
  double area = 0.0;
  double prev_recall = 0.0, prev_precision = points.front().precision;
  for (const auto& pt : points) {
    if (pt.recall >= max_recall) {
      // Interpolate the final sliver up to the cutoff.
      if (pt.recall > prev_recall) {
        const double f = (max_recall - prev_recall) / (pt.recall - prev_recall);
        const double p_cut = prev_precision + f * (pt.precision - prev_precision);
        area += (max_recall - prev_recall) * 0.5 * (p_cut + prev_precision);
      }
      return area;
    }
    area += (pt.recall - prev_recall) * 0.5 * (pt.precision + prev_precision);
    prev_recall = pt.recall;
    prev_precision = pt.precision;
  }
  return area;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

}  // namespace

void emit_report(const std::string& out_dir, const std::vector<Prediction>& sorted_preds,
                 const GoldSet& gold, const EvalCounts& counts) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  auto points = pr_curve(sorted_preds, gold);
  {
    std::ofstream csv(fs::path(out_dir) / "pr_curve.csv");
    if (!csv) throw DataError("cannot write pr_curve.csv under " + out_dir);
    csv << "rank,score,precision,recall\n";
    for (const auto& pt : points) {
      csv << pt.rank << ',' << format_double(pt.threshold) << ',' << format_double(pt.precision)
          << ',' << format_double(pt.recall) << '\n';
    }
    if (!csv) throw DataError("write failed: pr_curve.csv");
  }

  nlohmann::json p_at = nlohmann::json::object();
  double sum = 0.0;
  int available = 0;
  for (int n : {100, 200, 300}) {
    if (static_cast<std::size_t>(n) <= sorted_preds.size()) {
      const double v = precision_at_n(sorted_preds, gold, n);
      p_at[std::to_string(n)] = v;
      sum += v;
      ++available;
    }
  }
  nlohmann::json metrics{
      {"auc", auc(points)},
      {"auc_at_recall_0.4", auc_up_to_recall(points, 0.4)},
      {"counts",
       {{"bags", counts.bags}, {"gold", counts.gold}, {"predictions", counts.predictions}}},
      {"mean", available ? sum / available : 0.0},
      {"p_at", p_at}};

  std::ofstream js(fs::path(out_dir) / "metrics.json");
  if (!js) throw DataError("cannot write metrics.json under " + out_dir);
  js << metrics.dump(2) << "\n";
  if (!js) throw DataError("write failed: metrics.json");
}

}  // namespace rdsgan
