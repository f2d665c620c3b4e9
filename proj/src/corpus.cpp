#include "rdsgan/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "rdsgan/crc32.hpp"

namespace rdsgan {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

int first_occurrence(const std::vector<std::string>& tokens, const std::string& surface) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == surface) return static_cast<int>(i);
  }
  return -1;
}

std::string first_word(const std::string& surface) {
  auto sp = surface.find(' ');
  return sp == std::string::npos ? surface : surface.substr(0, sp);
}

int position_bucket(int offset, int L) {
  offset = std::clamp(offset, -(L - 1), L - 1);
  return offset + L - 1;
}

}  // namespace

RawMention parse_nyt_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields = split_ws(line);
  if (!fields.empty() && fields.back() == "###END###") fields.pop_back();
  if (fields.size() < 6) {
    throw DataError("line " + std::to_string(line_no) + ": expected at least 6 fields, got " +
                    std::to_string(fields.size()));
  }
  RawMention m;
  m.head_id = fields[0];
  m.tail_id = fields[1];
  m.head = fields[2];
  m.tail = fields[3];
  m.relation = fields[4];
  m.tokens.assign(fields.begin() + 5, fields.end());
  m.head_pos = first_occurrence(m.tokens, m.head);
  m.tail_pos = first_occurrence(m.tokens, m.tail);
  return m;
}

namespace {

RawMention parse_jsonl_mention(const std::string& line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": bad JSON: " + e.what());
  }
  RawMention m;
  try {
    m.head = j.at("head").get<std::string>();
    m.tail = j.at("tail").get<std::string>();
    m.head_id = j.at("head_id").get<std::string>();
    m.tail_id = j.at("tail_id").get<std::string>();
    m.relation = j.at("relation").get<std::string>();
    m.tokens = j.at("tokens").get<std::vector<std::string>>();
    m.head_pos = j.at("head_pos").get<int>();
    m.tail_pos = j.at("tail_pos").get<int>();
    if (j.contains("noise")) m.noise = j.at("noise").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": missing or mistyped field: " + e.what());
  }
  const int n = static_cast<int>(m.tokens.size());
  if (n == 0 || m.head_pos < 0 || m.head_pos >= n || m.tail_pos < 0 || m.tail_pos >= n) {
    throw DataError("line " + std::to_string(line_no) + ": entity position out of token range");
  }
  return m;
}

}  // namespace

std::vector<RawMention> read_mentions(const std::string& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::vector<RawMention> mentions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (format == CorpusFormat::Jsonl && line[0] == '#') continue;  // header comment
    mentions.push_back(format == CorpusFormat::NytTsv ? parse_nyt_line(line, line_no)
                                                      : parse_jsonl_mention(line, line_no));
  }
  return mentions;
}

std::pair<TokenVocab, RelationVocab> build_vocabs(const std::vector<RawMention>& mentions,
                                                  int min_count) {
  std::unordered_map<std::string, std::size_t> freq;
  std::vector<std::string> relations;
  for (const auto& m : mentions) {
    for (const auto& tok : m.tokens) ++freq[tok];
    if (m.relation != "NA") relations.push_back(m.relation);
  }

  std::vector<std::pair<std::string, std::size_t>> kept;
  kept.reserve(freq.size());
  for (auto& [tok, count] : freq) {
    if (count >= static_cast<std::size_t>(std::max(1, min_count))) kept.emplace_back(tok, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  TokenVocab tokens;
  for (auto& [tok, count] : kept) tokens.add(tok);

  std::sort(relations.begin(), relations.end());
  relations.erase(std::unique(relations.begin(), relations.end()), relations.end());
  RelationVocab rels;
  for (auto& r : relations) rels.add(r);
  return {std::move(tokens), std::move(rels)};
}

EncodedInstance encode_instance(const RawMention& raw, const TokenVocab& tokens, int L) {
  if (L < 1) throw ShapeError("encode_instance: aligned length must be positive");
  if (raw.head_pos < 0 || raw.tail_pos < 0) {
    throw DataError("encode_instance: entity surface not found in sentence");
  }
  if (raw.head_pos >= L || raw.tail_pos >= L) {
    throw DataError("encode_instance: entity at position " +
                    std::to_string(std::max(raw.head_pos, raw.tail_pos)) +
                    " truncated by aligned length " + std::to_string(L));
  }
  EncodedInstance inst;
  const int n = std::min<int>(static_cast<int>(raw.tokens.size()), L);
  inst.true_length = n;
  inst.token_ids.resize(static_cast<std::size_t>(L), TokenVocab::kPad);
  inst.head_rel_pos.resize(static_cast<std::size_t>(L));
  inst.tail_rel_pos.resize(static_cast<std::size_t>(L));
  for (int i = 0; i < n; ++i) {
    inst.token_ids[static_cast<std::size_t>(i)] = tokens.id(raw.tokens[static_cast<std::size_t>(i)]);
  }
  for (int i = 0; i < L; ++i) {
    const bool pad = i >= n;
    inst.head_rel_pos[static_cast<std::size_t>(i)] = position_bucket(pad ? 0 : i - raw.head_pos, L);
    inst.tail_rel_pos[static_cast<std::size_t>(i)] = position_bucket(pad ? 0 : i - raw.tail_pos, L);
  }
  inst.noise_flag = raw.noise;
  return inst;
}

Corpus assemble_corpus(const std::vector<RawMention>& mentions, const LoadOptions& options) {
  Corpus corpus;
  corpus.split = options.split;
  corpus.aligned_length = options.aligned_length;
  corpus.counters.mentions_read = mentions.size();

  if (options.token_vocab) {
    corpus.token_vocab = *options.token_vocab;
    if (!options.relation_vocab) {
      throw DataError("assemble_corpus: a token vocabulary was supplied without relations");
    }
    corpus.relation_vocab = *options.relation_vocab;
  } else {
    auto [tv, rv] = build_vocabs(mentions, options.min_count);
    corpus.token_vocab = std::move(tv);
    corpus.relation_vocab = std::move(rv);
  }

  struct Kept {
    const RawMention* mention;
    EncodedInstance encoded;
    int relation_id;
  };
  std::vector<Kept> kept;
  kept.reserve(mentions.size());
  for (const auto& m : mentions) {
    if (m.head_pos < 0 || m.tail_pos < 0) {
      ++corpus.counters.dropped_missing_entity;
      continue;
    }
    int rel_id = RelationVocab::kNa;
    if (m.relation != "NA") {
      rel_id = corpus.relation_vocab.id(m.relation);
      if (rel_id < 0) {
        ++corpus.counters.unknown_relation_as_na;
        rel_id = RelationVocab::kNa;
      }
    }
    try {
      kept.push_back(Kept{&m, encode_instance(m, corpus.token_vocab, options.aligned_length),
                          rel_id});
    } catch (const DataError&) {
      ++corpus.counters.dropped_entity_truncated;
    }
  }
  if (kept.empty()) throw DataError("corpus has no valid mentions");

  // Canonical bag order: sorted by key. The test split groups by pair only.
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& m = *kept[i].mention;
    Key key{m.head_id, m.tail_id,
            options.split == Split::Train ? m.relation : std::string()};
    groups[key].push_back(i);
  }

  for (auto& [key, members] : groups) {
    Bag bag;
    bag.head_id = std::get<0>(key);
    bag.tail_id = std::get<1>(key);
    const auto& first = *kept[members.front()].mention;
    bag.head = first.head;
    bag.tail = first.tail;
    bag.head_word_id = corpus.token_vocab.id(first_word(first.head));
    bag.tail_word_id = corpus.token_vocab.id(first_word(first.tail));
    std::vector<int> golds;
    for (std::size_t i : members) {
      bag.instances.push_back(kept[i].encoded);
      if (kept[i].relation_id != RelationVocab::kNa) golds.push_back(kept[i].relation_id);
    }
    std::sort(golds.begin(), golds.end());
    golds.erase(std::unique(golds.begin(), golds.end()), golds.end());
    bag.gold_relations = std::move(golds);
    bag.relation_id =
        bag.gold_relations.empty() ? RelationVocab::kNa : bag.gold_relations.front();
    corpus.bags.push_back(std::move(bag));
  }
  return corpus;
}

Corpus load_corpus(const std::string& path, const LoadOptions& options) {
  return assemble_corpus(read_mentions(path, options.format), options);
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

namespace {

std::string synth_relation_name(int r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "/synth/relation_%02d", r);
  return buf;
}

std::vector<std::string> synth_trigram(int r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ind%02d", r);
  std::string base = buf;
  return {base + "_a", base + "_b", base + "_c"};
}

std::string filler_token(SeededRng& rng, int vocab_size) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%03d", static_cast<int>(rng.uniform_int(
                                               static_cast<std::uint64_t>(vocab_size))));
  return buf;
}

}  // namespace

std::vector<RawMention> make_synthetic_mentions(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.noise_rate < 0.0 || cfg.noise_rate >= 1.0) {
    throw ShapeError("make_synthetic: noise rate must be in [0, 1)");
  }
  if (cfg.n_relations < 1 || cfg.n_pairs < 1 || cfg.instances_per_bag < 1 || cfg.vocab_size < 1) {
    throw ShapeError("make_synthetic: counts must be positive");
  }
  SeededRng rng(seed);
  std::vector<RawMention> mentions;
  mentions.reserve(static_cast<std::size_t>(cfg.n_pairs) *
                   static_cast<std::size_t>(cfg.instances_per_bag));
  for (int p = 0; p < cfg.n_pairs; ++p) {
    const int pid = p + cfg.pair_offset;
    const int hsurf = cfg.surface_pool > 0 ? pid % cfg.surface_pool : pid;
    const int tsurf = cfg.surface_pool > 0 ? (pid * 7 + 3) % cfg.surface_pool : pid;
    char hbuf[16], tbuf[16];
    std::snprintf(hbuf, sizeof(hbuf), "h%04d", hsurf);
    std::snprintf(tbuf, sizeof(tbuf), "t%04d", tsurf);
    const bool is_na = rng.bernoulli(cfg.na_fraction);
    const int bag_rel = is_na ? -1 : static_cast<int>(rng.uniform_int(
                                         static_cast<std::uint64_t>(cfg.n_relations)));
    for (int j = 0; j < cfg.instances_per_bag; ++j) {
      const bool noisy = !is_na && rng.bernoulli(cfg.noise_rate);
      int shown_rel = bag_rel;
      if (noisy && cfg.n_relations > 1) {
        shown_rel = (bag_rel + 1 +
                     static_cast<int>(rng.uniform_int(
                         static_cast<std::uint64_t>(cfg.n_relations - 1)))) %
                    cfg.n_relations;
      }
      char hid[24], tid[24];
      std::snprintf(hid, sizeof(hid), "m.h%04d", pid);  // ids stay unique per pair
      std::snprintf(tid, sizeof(tid), "m.t%04d", pid);
      RawMention m;
      m.head = hbuf;
      m.tail = tbuf;
      m.head_id = hid;
      m.tail_id = tid;
      m.relation = is_na ? "NA" : synth_relation_name(bag_rel);
      m.noise = is_na ? false : noisy;

      const int lead = static_cast<int>(rng.uniform_int(3));
      const int gap1 = 1 + static_cast<int>(rng.uniform_int(2));
      const int gap2 = 1 + static_cast<int>(rng.uniform_int(2));
      const int trail = static_cast<int>(rng.uniform_int(3));
      for (int k = 0; k < lead; ++k) m.tokens.push_back(filler_token(rng, cfg.vocab_size));
      m.head_pos = static_cast<int>(m.tokens.size());
      m.tokens.push_back(m.head);
      for (int k = 0; k < gap1; ++k) m.tokens.push_back(filler_token(rng, cfg.vocab_size));
      if (is_na) {
        for (int k = 0; k < 3; ++k) m.tokens.push_back(filler_token(rng, cfg.vocab_size));
      } else {
        for (auto& tok : synth_trigram(shown_rel)) m.tokens.push_back(tok);
      }
      for (int k = 0; k < gap2; ++k) m.tokens.push_back(filler_token(rng, cfg.vocab_size));
      m.tail_pos = static_cast<int>(m.tokens.size());
      m.tokens.push_back(m.tail);
      for (int k = 0; k < trail; ++k) m.tokens.push_back(filler_token(rng, cfg.vocab_size));
      mentions.push_back(std::move(m));
    }
  }
  return mentions;
}

Corpus make_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  LoadOptions options;
  options.split = cfg.split;
  options.aligned_length = cfg.aligned_length;
  options.min_count = cfg.min_count;
  return assemble_corpus(make_synthetic_mentions(cfg, seed), options);
}

// ---------------------------------------------------------------------------
// Serializers
// ---------------------------------------------------------------------------

void write_jsonl(const std::string& path, const std::vector<RawMention>& mentions,
                 std::uint32_t source_crc) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write: " + path);
  char header[64];
  std::snprintf(header, sizeof(header), "# rdsgan-jsonl v1 source_crc32=%08x", source_crc);
  out << header << "\n";
  for (const auto& m : mentions) {
    nlohmann::json j{{"head", m.head},         {"head_id", m.head_id}, {"head_pos", m.head_pos},
                     {"relation", m.relation}, {"tail", m.tail},       {"tail_id", m.tail_id},
                     {"tail_pos", m.tail_pos}, {"tokens", m.tokens}};
    if (m.noise.has_value()) j["noise"] = *m.noise;
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

void write_nyt_tsv(const std::string& path, const std::vector<RawMention>& mentions) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write: " + path);
  for (const auto& m : mentions) {
    out << m.head_id << '\t' << m.tail_id << '\t' << m.head << '\t' << m.tail << '\t'
        << m.relation << '\t';
    for (std::size_t i = 0; i < m.tokens.size(); ++i) {
      if (i) out << ' ';
      out << m.tokens[i];
    }
    out << " ###END###\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

void write_noise_sidecar(const std::string& path, const std::vector<RawMention>& mentions) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write: " + path);
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    const auto& m = mentions[i];
    nlohmann::json j{{"head_id", m.head_id},
                     {"index", i},
                     {"noise", m.noise.value_or(false)},
                     {"relation", m.relation},
                     {"tail_id", m.tail_id}};
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

void save_vocabs(const std::string& path, const TokenVocab& tokens, const RelationVocab& rels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write: " + path);
  nlohmann::json j{{"relations", rels.id_to_name}, {"tokens", tokens.id_to_token}};
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed: " + path);
}

std::pair<TokenVocab, RelationVocab> load_vocabs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocab file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad vocab file: ") + e.what());
  }
  auto token_list = j.at("tokens").get<std::vector<std::string>>();
  auto rel_list = j.at("relations").get<std::vector<std::string>>();
  if (token_list.size() < 2 || token_list[0] != "<PAD>" || token_list[1] != "<UNK>" ||
      rel_list.empty() || rel_list[0] != "NA") {
    throw DataError("vocab file does not carry the reserved entries");
  }
  TokenVocab tokens;
  for (std::size_t i = 2; i < token_list.size(); ++i) tokens.add(token_list[i]);
  RelationVocab rels;
  for (std::size_t i = 1; i < rel_list.size(); ++i) rels.add(rel_list[i]);
  return {std::move(tokens), std::move(rels)};
}

}  // namespace rdsgan
