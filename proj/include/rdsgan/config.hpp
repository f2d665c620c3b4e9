#pragma once

// Run configuration file: a JSON document with paths, model dimensions and
// the training schedule. Unknown keys are rejected (typo safety), absent
// optional keys take the shipped defaults, and the fully resolved document is
// echoed into the run directory.

#include <string>

#include "rdsgan/model.hpp"
#include "rdsgan/trainer.hpp"

namespace rdsgan {

struct RunConfig {
  std::string train_corpus;
  std::string test_corpus;  // optional; required by `eval`
  std::string output_dir = "run";
  int min_count = 1;
  int threads = 1;
  ModelDims dims;          // vocab_size/n_relations are filled from the corpus
  TrainConfig train;

  void validate_for_training() const;
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_json(const std::string& text, const std::string& origin);

// Resolved-config echo; stable key order.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace rdsgan
