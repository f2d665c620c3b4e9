#pragma once

// Data model and ingestion for bag-level relation extraction corpora.
//
// Two on-disk formats are supported: the tab/space separated NYT mention
// format ("head_id tail_id head tail relation tokens... ###END###") and the
// canonical JSONL format written by the converter (one object per line with
// explicit entity positions). Mentions are grouped into bags:
//   train split: one bag per (head_id, tail_id, relation)
//   test split:  one bag per (head_id, tail_id), carrying the set of gold
//                relations (the held-out protocol scores facts per pair)
// Bag order is canonical (sorted by key), so loading is deterministic.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rdsgan/errors.hpp"
#include "rdsgan/rng.hpp"

namespace rdsgan {

struct RawMention {
  std::string head_id, tail_id;
  std::string head, tail;
  std::string relation;
  std::vector<std::string> tokens;
  int head_pos = -1, tail_pos = -1;  // first occurrence of each entity
  std::optional<bool> noise;         // synthetic corpora only
};

// id 0 = PAD, id 1 = UNK; remaining ids by descending frequency, ties broken
// alphabetically.
struct TokenVocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  std::vector<std::string> id_to_token{"<PAD>", "<UNK>"};
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int id(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? kUnk : it->second;
  }
  const std::string& token(int id) const { return id_to_token.at(static_cast<std::size_t>(id)); }
  void add(const std::string& tok) {
    token_to_id.emplace(tok, size());
    id_to_token.push_back(tok);
  }
};

// id 0 = "NA"; real relations follow in alphabetical order.
struct RelationVocab {
  static constexpr int kNa = 0;

  std::vector<std::string> id_to_name{"NA"};
  std::unordered_map<std::string, int> name_to_id{{"NA", 0}};

  int size() const { return static_cast<int>(id_to_name.size()); }
  int id(const std::string& name) const {
    auto it = name_to_id.find(name);
    return it == name_to_id.end() ? -1 : it->second;
  }
  const std::string& name(int id) const { return id_to_name.at(static_cast<std::size_t>(id)); }
  void add(const std::string& name) {
    name_to_id.emplace(name, size());
    id_to_name.push_back(name);
  }
};

// A sentence padded/truncated to the aligned length L. Position features are
// bucket ids: offset i - pos(entity), clipped to [-(L-1), L-1] and shifted by
// L-1 into [0, 2L-2]. PAD slots carry the offset-0 bucket.
struct EncodedInstance {
  std::vector<int> token_ids;
  std::vector<int> head_rel_pos;
  std::vector<int> tail_rel_pos;
  int true_length = 0;
  std::optional<bool> noise_flag;
};

struct Bag {
  std::string head_id, tail_id;
  std::string head, tail;                // surfaces of the first grouped mention
  int relation_id = RelationVocab::kNa;  // train label; first gold on the test split
  std::vector<int> gold_relations;       // non-NA golds, sorted; train: {relation_id} if not NA
  int head_word_id = TokenVocab::kUnk;   // first token of each entity surface,
  int tail_word_id = TokenVocab::kUnk;   // used to seed the generator triplet
  std::vector<EncodedInstance> instances;

  int size() const { return static_cast<int>(instances.size()); }
};

enum class Split { Train, Test };
enum class CorpusFormat { NytTsv, Jsonl };

struct CorpusCounters {
  std::size_t mentions_read = 0;
  std::size_t dropped_missing_entity = 0;
  std::size_t dropped_entity_truncated = 0;
  std::size_t unknown_relation_as_na = 0;
};

struct Corpus {
  std::vector<Bag> bags;
  TokenVocab token_vocab;
  RelationVocab relation_vocab;
  Split split = Split::Train;
  int aligned_length = 120;
  CorpusCounters counters;

  std::size_t total_instances() const {
    std::size_t n = 0;
    for (const auto& b : bags) n += b.instances.size();
    return n;
  }
};

struct LoadOptions {
  Split split = Split::Train;
  CorpusFormat format = CorpusFormat::Jsonl;
  int aligned_length = 120;
  int min_count = 1;
  // When set, instances are encoded against these vocabularies instead of
  // building fresh ones (required for the test split of a trained model).
  const TokenVocab* token_vocab = nullptr;
  const RelationVocab* relation_vocab = nullptr;
};

// Parses one NYT-format line. Throws DataError (carrying the line number) on
// fewer than six fields. Entity positions are left at -1 when the surface
// string does not occur in the sentence; the loader drops such mentions and
// counts them.
RawMention parse_nyt_line(const std::string& line, std::size_t line_no);

// Reads mentions from disk in either format. JSONL lines starting with '#'
// are treated as header comments and skipped.
std::vector<RawMention> read_mentions(const std::string& path, CorpusFormat format);

// Builds vocabularies over a mention list. Tokens below min_count map to UNK.
std::pair<TokenVocab, RelationVocab> build_vocabs(const std::vector<RawMention>& mentions,
                                                  int min_count);

// Pads/truncates to length L and computes position buckets. Throws DataError
// when an entity position lies at or beyond L (the instance would lose its
// entity pair).
EncodedInstance encode_instance(const RawMention& raw, const TokenVocab& tokens, int L);

// Groups mentions into bags, encoding each instance. Shared by the file
// loaders and the synthesizer.
Corpus assemble_corpus(const std::vector<RawMention>& mentions, const LoadOptions& options);

// File loader; throws DataError on I/O failure or when no valid mention
// survives.
Corpus load_corpus(const std::string& path, const LoadOptions& options);

// ---------------------------------------------------------------------------
// Synthetic corpora with a planted-noise oracle
// ---------------------------------------------------------------------------

// Every relation owns a distinct indicative token trigram placed between the
// two entities. With probability noise_rate an instance of a relation bag is
// rewritten with a different relation's trigram and flagged as noise.
struct SynthConfig {
  int n_relations = 4;  // real (non-NA) relations
  int n_pairs = 40;
  int instances_per_bag = 4;
  int vocab_size = 60;  // filler token pool
  double noise_rate = 0.0;
  double na_fraction = 0.0;
  int pair_offset = 0;    // offset entity ids to keep splits disjoint
  int surface_pool = 0;   // 0: unique surface per pair; >0: surfaces recur
                          // across pairs (and splits), like real entity text
  int aligned_length = 30;
  int min_count = 1;
  Split split = Split::Train;
};

std::vector<RawMention> make_synthetic_mentions(const SynthConfig& cfg, std::uint64_t seed);
Corpus make_synthetic(const SynthConfig& cfg, std::uint64_t seed);

// Serializers for synthetic (or converted) mention lists.
void write_jsonl(const std::string& path, const std::vector<RawMention>& mentions,
                 std::uint32_t source_crc);
void write_nyt_tsv(const std::string& path, const std::vector<RawMention>& mentions);
void write_noise_sidecar(const std::string& path, const std::vector<RawMention>& mentions);

// Vocabulary sidecar (run directory artifact used by eval/generate).
void save_vocabs(const std::string& path, const TokenVocab& tokens, const RelationVocab& rels);
std::pair<TokenVocab, RelationVocab> load_vocabs(const std::string& path);

}  // namespace rdsgan
