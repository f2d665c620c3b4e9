// Command-line front end: corpus conversion, synthetic-corpus generation,
// training, held-out evaluation, generated-instance export, and gradient
// verification.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 data error,
// 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rdsgan/checkpoint.hpp"
#include "rdsgan/config.hpp"
#include "rdsgan/corpus.hpp"
#include "rdsgan/crc32.hpp"
#include "rdsgan/eval.hpp"
#include "rdsgan/gradcheck_suites.hpp"
#include "rdsgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace rdsgan;

namespace {

std::uint32_t file_crc32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  Crc32 crc;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    crc.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return crc.value();
}

CorpusFormat detect_format(const std::string& path) {
  return path.size() >= 4 && path.substr(path.size() - 4) == ".tsv" ? CorpusFormat::NytTsv
                                                                    : CorpusFormat::Jsonl;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    std::uint64_t seed, const std::vector<std::pair<std::string, std::string>>&
                                            corpora) {
  nlohmann::json files = nlohmann::json::object();
  for (const auto& [tag, path] : corpora) {
    char hex[16];
    std::snprintf(hex, sizeof(hex), "%08x", file_crc32(path));
    files[tag] = nlohmann::json{{"crc32", hex}, {"path", path}};
  }
  char cfg_hex[16];
  std::snprintf(cfg_hex, sizeof(cfg_hex), "%08x", crc32(dump_run_config(cfg)));
  nlohmann::json manifest{{"command", command},
                          {"config_crc32", cfg_hex},
                          {"corpora", files},
                          {"seed", seed},
                          {"versions", {{"checkpoint", kCheckpointVersion}, {"jsonl", 1}}}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

void write_train_log(const fs::path& path, const std::vector<TrainLogRecord>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& rec : log) {
    nlohmann::json j{{"iteration", rec.iteration},
                     {"outer", rec.outer},
                     {"phase", rec.phase},
                     {"objective", rec.objective},
                     {"wall_ms", rec.wall_ms}};
    auto maybe = [&](const char* key, double v) {
      if (std::isfinite(v)) j[key] = v;
    };
    maybe("mean_d_real", rec.mean_d_real);
    maybe("mean_d_fake", rec.mean_d_fake);
    maybe("rank_l1", rec.rank_l1);
    maybe("rank_l2", rec.rank_l2);
    maybe("mean_gen_rank", rec.mean_gen_rank);
    maybe("gen_beaten_frac", rec.gen_beaten_frac);
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write failed: " + path.string());
}

// Loads the run directory artifacts shared by eval and generate.
struct LoadedRun {
  RunConfig cfg;
  TokenVocab tokens;
  RelationVocab relations;
  Model<float> model;
};

LoadedRun load_run(const std::string& config_path, std::string checkpoint_path) {
  LoadedRun run;
  run.cfg = parse_run_config(config_path);
  const fs::path run_dir = run.cfg.output_dir;
  const fs::path vocab_path = run_dir / "vocabs.json";
  if (!fs::exists(vocab_path)) {
    throw UsageError("no vocabs.json under " + run_dir.string() + "; run `train` first");
  }
  auto [tokens, relations] = load_vocabs(vocab_path.string());
  run.tokens = std::move(tokens);
  run.relations = std::move(relations);

  if (checkpoint_path.empty()) checkpoint_path = (run_dir / "checkpoint.ckpt").string();
  if (!fs::exists(checkpoint_path)) {
    throw UsageError("checkpoint not found at " + checkpoint_path +
                     "; run `train` first or pass --checkpoint");
  }
  ModelDims dims = run.cfg.dims;
  dims.vocab_size = run.tokens.size();
  dims.n_relations = run.relations.size();
  dims.validate();
  run.model = Model<float>::init(dims, 0);
  load_checkpoint(checkpoint_path, run.model);
  return run;
}

int cmd_convert(const std::string& in_path, const std::string& out_path) {
  auto mentions = read_mentions(in_path, CorpusFormat::NytTsv);
  std::vector<RawMention> kept;
  std::size_t dropped = 0;
  for (auto& m : mentions) {
    if (m.head_pos < 0 || m.tail_pos < 0) {
      ++dropped;
    } else {
      kept.push_back(std::move(m));
    }
  }
  if (kept.empty()) throw DataError("convert: no valid mentions in " + in_path);
  write_jsonl(out_path, kept, file_crc32(in_path));
  std::cerr << "converted " << kept.size() << " mentions";
  if (dropped) std::cerr << " (dropped " << dropped << " with missing entity surfaces)";
  std::cerr << "\n";
  return 0;
}

int cmd_synth(const SynthConfig& synth, std::uint64_t seed, const std::string& out_path,
              const std::string& format, std::string sidecar_path) {
  if (synth.noise_rate < 0.0 || synth.noise_rate >= 1.0) {
    throw UsageError("synth: --noise must be in [0, 1)");
  }
  if (synth.na_fraction < 0.0 || synth.na_fraction > 1.0) {
    throw UsageError("synth: --na-fraction must be in [0, 1]");
  }
  auto mentions = make_synthetic_mentions(synth, seed);
  if (format == "tsv") {
    write_nyt_tsv(out_path, mentions);
  } else {
    write_jsonl(out_path, mentions, crc32(std::to_string(seed)));
  }
  if (sidecar_path.empty()) sidecar_path = out_path + ".noise.jsonl";
  write_noise_sidecar(sidecar_path, mentions);
  std::cerr << "wrote " << mentions.size() << " mentions to " << out_path << " (noise oracle: "
            << sidecar_path << ")\n";
  return 0;
}

int cmd_train(const std::string& config_path, std::int64_t seed_override, int threads_override) {
  RunConfig cfg = parse_run_config(config_path);
  if (seed_override >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_override);
  if (threads_override > 0) cfg.threads = threads_override;
  cfg.validate_for_training();

  LoadOptions load;
  load.split = Split::Train;
  load.format = detect_format(cfg.train_corpus);
  load.aligned_length = cfg.dims.aligned_length;
  load.min_count = cfg.min_count;
  Corpus corpus = load_corpus(cfg.train_corpus, load);
  if (corpus.counters.dropped_missing_entity || corpus.counters.dropped_entity_truncated) {
    std::cerr << "dropped " << corpus.counters.dropped_missing_entity
              << " mentions with missing entities, " << corpus.counters.dropped_entity_truncated
              << " with entities beyond the aligned length\n";
  }

  ModelDims dims = cfg.dims;
  dims.vocab_size = corpus.token_vocab.size();
  dims.n_relations = corpus.relation_vocab.size();
  dims.validate();

  fs::create_directories(cfg.output_dir);
  const fs::path run_dir = cfg.output_dir;

  auto result = train<float>(cfg.train, dims, corpus);
  save_checkpoint((run_dir / "checkpoint.ckpt").string(), result.model);
  write_train_log(run_dir / "train_log.jsonl", result.log);
  save_vocabs((run_dir / "vocabs.json").string(), corpus.token_vocab, corpus.relation_vocab);
  write_text(run_dir / "config.resolved.json", dump_run_config(cfg));
  write_manifest(run_dir, "train", cfg, cfg.train.seed, {{"train", cfg.train_corpus}});

  std::cerr << "trained " << result.log.size() << " steps over " << corpus.bags.size()
            << " bags; checkpoint at " << (run_dir / "checkpoint.ckpt").string() << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             std::string test_path, std::string out_dir, int threads_override) {
  LoadedRun run = load_run(config_path, checkpoint_path);
  if (test_path.empty()) test_path = run.cfg.test_corpus;
  if (test_path.empty()) {
    throw UsageError("eval: no test corpus (set test_corpus in the config or pass --test)");
  }
  if (out_dir.empty()) out_dir = run.cfg.output_dir;
  const int threads = threads_override > 0 ? threads_override : run.cfg.threads;

  LoadOptions load;
  load.split = Split::Test;
  load.format = detect_format(test_path);
  load.aligned_length = run.cfg.dims.aligned_length;
  load.token_vocab = &run.tokens;
  load.relation_vocab = &run.relations;
  Corpus test = load_corpus(test_path, load);
  if (test.counters.unknown_relation_as_na) {
    std::cerr << "note: " << test.counters.unknown_relation_as_na
              << " test mentions carry relations unseen in training (treated as NA)\n";
  }

  auto preds = predict(run.model, test, threads);
  auto gold = gold_facts(test);
  if (gold.empty()) throw DataError("eval: the test corpus carries no non-NA gold facts");
  EvalCounts counts{preds.size(), gold.size(), test.bags.size()};
  emit_report(out_dir, preds, gold, counts);

  auto points = pr_curve(preds, gold);
  std::cerr << "eval: " << preds.size() << " predictions over " << test.bags.size()
            << " bags, AUC " << auc(points) << "; report in " << out_dir << "\n";
  return 0;
}

int cmd_generate(const std::string& config_path, const std::string& checkpoint_path,
                 std::string out_path) {
  LoadedRun run = load_run(config_path, checkpoint_path);
  if (run.cfg.train_corpus.empty()) throw UsageError("generate: config lacks train_corpus");
  if (out_path.empty()) out_path = (fs::path(run.cfg.output_dir) / "generated.jsonl").string();

  LoadOptions load;
  load.split = Split::Train;
  load.format = detect_format(run.cfg.train_corpus);
  load.aligned_length = run.cfg.dims.aligned_length;
  load.token_vocab = &run.tokens;
  load.relation_vocab = &run.relations;
  Corpus corpus = load_corpus(run.cfg.train_corpus, load);

  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write " + out_path);
  const ModelDims& dims = run.model.dims;
  for (const auto& bag : corpus.bags) {
    Tape<float> tape;
    auto bm = run.model.bind(tape, Trainable::none());
    SeededRng rng(0);  // inference mode: no dropout is drawn
    auto z = seed_vector(bm.generator, bm.encoder.word_embed, bag.head_word_id, bag.relation_id,
                         bag.tail_word_id);
    auto seq = generate_sequence(bm.generator, z, dims.aligned_length, false, 0.0, rng);
    auto x0 = encode_sequence(bm.encoder, seq, false, 0.0, rng);
    std::vector<Var<float>> all_xs{x0};
    for (const auto& inst : bag.instances) {
      all_xs.push_back(encode_instance_vec(bm.encoder, inst, false, 0.0, rng));
    }
    auto e_all = bag_scores(bm.attention, all_xs, bag.relation_id);
    const int rank = generated_rank(e_all.value(), 0);
    std::vector<double> x_out(static_cast<std::size_t>(x0.rows()));
    for (Index i = 0; i < x0.rows(); ++i) x_out[static_cast<std::size_t>(i)] = x0.value()(i, 0);
    nlohmann::json j{{"head", bag.head},
                     {"rank", rank},
                     {"relation", corpus.relation_vocab.name(bag.relation_id)},
                     {"score", double(e_all.value()(0, 0))},
                     {"tail", bag.tail},
                     {"x", x_out}};
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write failed: " + out_path);
  std::cerr << "generated " << corpus.bags.size() << " instances to " << out_path << "\n";
  return 0;
}

int cmd_gradcheck(double tolerance) {
  auto results = run_gradcheck_suites();
  bool ok = true;
  for (const auto& r : results) {
    const bool pass = r.max_rel_err < tolerance;
    ok = ok && pass;
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << r.name << ": max relative error "
              << r.max_rel_err;
    if (!pass) std::cout << " (worst: " << r.worst_param << ")";
    std::cout << "\n";
  }
  if (!ok) throw NumericError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rdsgan: adversarial denoising for distantly supervised relation extraction"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // convert
  std::string conv_in, conv_out;
  auto* convert = app.add_subcommand("convert", "NYT TSV mentions to canonical JSONL");
  convert->add_option("--in", conv_in, "input TSV file")->required();
  convert->add_option("--out", conv_out, "output JSONL file")->required();

  // synth
  SynthConfig synth;
  std::uint64_t synth_seed = 0;
  std::string synth_out, synth_format = "jsonl", synth_sidecar;
  auto* synth_cmd = app.add_subcommand("synth", "emit a synthetic corpus plus its noise oracle");
  synth_cmd->add_option("--out", synth_out, "output corpus file")->required();
  synth_cmd->add_option("--format", synth_format, "jsonl | tsv (default jsonl)")
      ->check(CLI::IsMember({"jsonl", "tsv"}));
  synth_cmd->add_option("--sidecar", synth_sidecar, "noise oracle path (default <out>.noise.jsonl)");
  synth_cmd->add_option("--n-relations", synth.n_relations, "real relation count (default 4)");
  synth_cmd->add_option("--n-pairs", synth.n_pairs, "entity pair count (default 40)");
  synth_cmd->add_option("--instances-per-bag", synth.instances_per_bag,
                        "instances per bag (default 4)");
  synth_cmd->add_option("--vocab-size", synth.vocab_size, "filler token pool (default 60)");
  synth_cmd->add_option("--noise", synth.noise_rate, "planted noise rate in [0,1) (default 0)");
  synth_cmd->add_option("--na-fraction", synth.na_fraction, "fraction of NA bags (default 0)");
  synth_cmd->add_option("--pair-offset", synth.pair_offset,
                        "entity id offset to keep splits disjoint (default 0)");
  synth_cmd->add_option("--surface-pool", synth.surface_pool,
                        "entity surface pool size; 0 means unique per pair (default 0)");
  synth_cmd->add_option("--seed", synth_seed, "generator seed (default 0)");

  // train
  std::string train_config;
  std::int64_t train_seed = -1;
  int train_threads = 0;
  auto* train_cmd = app.add_subcommand("train", "run the full alternating training schedule");
  train_cmd->add_option("--config", train_config, "run configuration JSON")->required();
  train_cmd->add_option("--seed", train_seed, "override the config seed");
  train_cmd->add_option("--threads", train_threads, "override the config thread count");

  // eval
  std::string eval_config, eval_ckpt, eval_test, eval_out;
  int eval_threads = 0;
  auto* eval_cmd = app.add_subcommand("eval", "held-out evaluation of a trained checkpoint");
  eval_cmd->add_option("--config", eval_config, "run configuration JSON")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path (default <output_dir>/checkpoint.ckpt)");
  eval_cmd->add_option("--test", eval_test, "test corpus (default config test_corpus)");
  eval_cmd->add_option("--out", eval_out, "report directory (default <output_dir>)");
  eval_cmd->add_option("--threads", eval_threads, "override the config thread count");

  // generate
  std::string gen_config, gen_ckpt, gen_out;
  auto* gen_cmd = app.add_subcommand(
      "generate", "export the generated instance and its bag rank for every training bag");
  gen_cmd->add_option("--config", gen_config, "run configuration JSON")->required();
  gen_cmd->add_option("--checkpoint", gen_ckpt, "checkpoint path (default <output_dir>/checkpoint.ckpt)");
  gen_cmd->add_option("--out", gen_out, "output JSONL (default <output_dir>/generated.jsonl)");

  // gradcheck
  double gc_tolerance = 1e-5;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference verification of every loss path");
  gc_cmd->add_option("--tolerance", gc_tolerance, "max relative error allowed (default 1e-5)");

  try {
    app.parse(argc, argv);
    if (convert->parsed()) return cmd_convert(conv_in, conv_out);
    if (synth_cmd->parsed()) return cmd_synth(synth, synth_seed, synth_out, synth_format,
                                              synth_sidecar);
    if (train_cmd->parsed()) return cmd_train(train_config, train_seed, train_threads);
    if (eval_cmd->parsed()) return cmd_eval(eval_config, eval_ckpt, eval_test, eval_out,
                                            eval_threads);
    if (gen_cmd->parsed()) return cmd_generate(gen_config, gen_ckpt, gen_out);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_tolerance);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
