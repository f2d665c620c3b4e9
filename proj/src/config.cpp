#include "rdsgan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rdsgan/errors.hpp"

namespace rdsgan {

namespace {

using nlohmann::json;

// Field extraction that tracks consumed keys, so leftovers (typos) are
// rejected with the offending key named.
class StrictObject {
 public:
  StrictObject(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
    if (!j_.is_object()) throw UsageError("config: " + scope_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& into) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      into = it->get<T>();
    } catch (const json::exception&) {
      throw UsageError("config: bad value type for " + scope_ + "." + key);
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw UsageError("config: unknown key " + scope_ + "." + it.key());
      }
    }
  }

 private:
  const json& j_;
  std::string scope_;
  std::set<std::string> seen_;
};

}  // namespace

void RunConfig::validate_for_training() const {
  if (train_corpus.empty()) throw UsageError("config: train_corpus is required");
  if (output_dir.empty()) throw UsageError("config: output_dir must not be empty");
  if (min_count < 1) throw UsageError("config: min_count must be >= 1");
  if (threads < 1) throw UsageError("config: threads must be >= 1");
  train.validate();
}

RunConfig parse_run_config_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError("config: " + origin + " is not valid JSON: " + e.what());
  }

  RunConfig cfg;
  StrictObject root(j, "$");
  root.get("train_corpus", cfg.train_corpus);
  root.get("test_corpus", cfg.test_corpus);
  root.get("output_dir", cfg.output_dir);
  root.get("min_count", cfg.min_count);
  root.get("threads", cfg.threads);

  if (const json* jm = root.child("model")) {
    StrictObject model(*jm, "model");
    model.get("word_dim", cfg.dims.word_dim);
    model.get("pos_dim", cfg.dims.pos_dim);
    model.get("n_filters", cfg.dims.n_filters);
    model.get("window", cfg.dims.window);
    model.get("aligned_length", cfg.dims.aligned_length);
    model.get("h_g", cfg.dims.h_g);
    model.get("h_d", cfg.dims.h_d);
    model.reject_unknown();
  }
  if (const json* jt = root.child("train")) {
    StrictObject train(*jt, "train");
    train.get("s_d", cfg.train.s_d);
    train.get("s_g", cfg.train.s_g);
    train.get("s_r", cfg.train.s_r);
    train.get("outer_iterations", cfg.train.outer_iterations);
    train.get("batch_size", cfg.train.batch_size);
    train.get("lr_g", cfg.train.lr_g);
    train.get("lr_d", cfg.train.lr_d);
    train.get("lambda1", cfg.train.lambda1);
    train.get("lambda2", cfg.train.lambda2);
    train.get("top_k", cfg.train.top_k);
    train.get("dropout", cfg.train.dropout_p);
    train.get("seed", cfg.train.seed);
    train.get("non_saturating_g", cfg.train.non_saturating_g);
    train.get("literal_eq8", cfg.train.literal_eq8);
    train.get("gen_in_class_loss", cfg.train.gen_in_class_loss);
    train.reject_unknown();
  }
  root.reject_unknown();
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config_json(ss.str(), path);
}

std::string dump_run_config(const RunConfig& cfg) {
  json j{
      {"min_count", cfg.min_count},
      {"model",
       {{"aligned_length", cfg.dims.aligned_length},
        {"h_d", cfg.dims.h_d},
        {"h_g", cfg.dims.h_g},
        {"n_filters", cfg.dims.n_filters},
        {"pos_dim", cfg.dims.pos_dim},
        {"window", cfg.dims.window},
        {"word_dim", cfg.dims.word_dim}}},
      {"output_dir", cfg.output_dir},
      {"test_corpus", cfg.test_corpus},
      {"threads", cfg.threads},
      {"train",
       {{"batch_size", cfg.train.batch_size},
        {"dropout", cfg.train.dropout_p},
        {"gen_in_class_loss", cfg.train.gen_in_class_loss},
        {"lambda1", cfg.train.lambda1},
        {"lambda2", cfg.train.lambda2},
        {"literal_eq8", cfg.train.literal_eq8},
        {"lr_d", cfg.train.lr_d},
        {"lr_g", cfg.train.lr_g},
        {"non_saturating_g", cfg.train.non_saturating_g},
        {"outer_iterations", cfg.train.outer_iterations},
        {"s_d", cfg.train.s_d},
        {"s_g", cfg.train.s_g},
        {"s_r", cfg.train.s_r},
        {"seed", cfg.train.seed},
        {"top_k", cfg.train.top_k}}},
      {"train_corpus", cfg.train_corpus}};
  return j.dump(2) + "\n";
}

}  // namespace rdsgan
