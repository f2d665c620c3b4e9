#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "rdsgan/corpus.hpp"
#include "rdsgan/crc32.hpp"

using namespace rdsgan;

TEST_CASE("parse_nyt_line") {
  SUBCASE("well-formed line") {
    auto m = parse_nyt_line(
        "m.01 m.02 obama hawaii /people/person/place_of_birth obama was born in hawaii ###END###",
        1);
    CHECK(m.head_id == "m.01");
    CHECK(m.tail_id == "m.02");
    CHECK(m.head == "obama");
    CHECK(m.tail == "hawaii");
    CHECK(m.relation == "/people/person/place_of_birth");
    CHECK(m.tokens.size() == 5);
    CHECK(m.tokens.front() == "obama");
    CHECK(m.tokens.back() == "hawaii");
    CHECK(m.head_pos == 0);
    CHECK(m.tail_pos == 4);
  }
  SUBCASE("NA relation kept verbatim") {
    auto m = parse_nyt_line("m.01 m.02 a b NA a saw b ###END###", 3);
    CHECK(m.relation == "NA");
  }
  SUBCASE("too few fields carries line number") {
    try {
      parse_nyt_line("m.01 m.02 a b", 17);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("17") != std::string::npos);
    }
  }
  SUBCASE("missing entity surface is flagged") {
    auto m = parse_nyt_line("m.01 m.02 alice bob NA carol met dave ###END###", 1);
    CHECK(m.head_pos == -1);
    CHECK(m.tail_pos == -1);
  }
}

TEST_CASE("build_vocabs ordering") {
  std::vector<RawMention> mentions(1);
  mentions[0].tokens = {"bb", "aa", "bb", "cc", "aa", "bb"};
  mentions[0].relation = "/r/two";
  RawMention second;
  second.tokens = {"aa", "dd"};
  second.relation = "/r/one";
  mentions.push_back(second);

  SUBCASE("frequency order with alphabetical ties") {
    auto [tokens, rels] = build_vocabs(mentions, 1);
    // bb x3, aa x3, cc x1, dd x1: ties alphabetical.
    CHECK(tokens.id_to_token ==
          std::vector<std::string>{"<PAD>", "<UNK>", "aa", "bb", "cc", "dd"});
    CHECK(rels.id_to_name == std::vector<std::string>{"NA", "/r/one", "/r/two"});
  }
  SUBCASE("min_count maps rare tokens to UNK") {
    auto [tokens, rels] = build_vocabs(mentions, 2);
    CHECK(tokens.id("cc") == TokenVocab::kUnk);
    CHECK(tokens.id("aa") > TokenVocab::kUnk);
  }
  SUBCASE("min_count 1 keeps every distinct token") {
    auto [tokens, rels] = build_vocabs(mentions, 1);
    for (auto tok : {"aa", "bb", "cc", "dd"}) CHECK(tokens.id(tok) != TokenVocab::kUnk);
  }
}

TEST_CASE("encode_instance positions and padding") {
  TokenVocab vocab;
  for (auto tok : {"a", "b", "c", "d"}) vocab.add(tok);
  RawMention m;
  m.tokens = {"a", "b", "c", "d"};
  m.head_pos = 0;
  m.tail_pos = 2;

  SUBCASE("bucket arithmetic") {
    const int L = 6;
    auto inst = encode_instance(m, vocab, L);
    CHECK(inst.true_length == 4);
    // Offset of token i from head at 0 is i, shifted by L-1.
    CHECK(inst.head_rel_pos[3] == 3 + (L - 1));
    CHECK(inst.tail_rel_pos[0] == -2 + (L - 1));
    // PAD slots carry the offset-0 bucket and PAD token id.
    CHECK(inst.token_ids[5] == TokenVocab::kPad);
    CHECK(inst.head_rel_pos[5] == L - 1);
    for (int b : inst.head_rel_pos) {
      CHECK(b >= 0);
      CHECK(b <= 2 * L - 2);
    }
  }
  SUBCASE("exact length needs no padding") {
    auto inst = encode_instance(m, vocab, 4);
    CHECK(inst.true_length == 4);
    CHECK(inst.token_ids.size() == 4);
    CHECK(inst.token_ids[3] != TokenVocab::kPad);
  }
  SUBCASE("entity truncated away is an error") {
    RawMention long_m;
    for (int i = 0; i < 200; ++i) long_m.tokens.push_back("a");
    long_m.head_pos = 0;
    long_m.tail_pos = 150;
    CHECK_THROWS_AS(encode_instance(long_m, vocab, 120), DataError);
  }
}

namespace {

RawMention mk(const std::string& hid, const std::string& tid, const std::string& rel,
              std::vector<std::string> tokens, int hp, int tp) {
  RawMention m;
  m.head_id = hid;
  m.tail_id = tid;
  m.head = tokens[static_cast<std::size_t>(hp)];
  m.tail = tokens[static_cast<std::size_t>(tp)];
  m.relation = rel;
  m.tokens = std::move(tokens);
  m.head_pos = hp;
  m.tail_pos = tp;
  return m;
}

}  // namespace

TEST_CASE("bag grouping") {
  std::vector<RawMention> mentions{
      mk("m.1", "m.2", "/r/a", {"x", "u", "y"}, 0, 2),
      mk("m.1", "m.2", "/r/a", {"x", "v", "y"}, 0, 2),
      mk("m.3", "m.4", "/r/a", {"p", "u", "q"}, 0, 2),
      mk("m.1", "m.2", "/r/b", {"x", "w", "y"}, 0, 2),
      mk("m.5", "m.6", "NA", {"n", "u", "o"}, 0, 2),
  };
  LoadOptions opt;
  opt.aligned_length = 8;

  SUBCASE("train split keys by (pair, relation)") {
    opt.split = Split::Train;
    Corpus c = assemble_corpus(mentions, opt);
    CHECK(c.bags.size() == 4);
    bool found = false;
    for (const auto& b : c.bags) {
      if (b.head_id == "m.1" && c.relation_vocab.name(b.relation_id) == "/r/a") {
        CHECK(b.size() == 2);
        found = true;
      }
    }
    CHECK(found);
  }
  SUBCASE("test split keys by pair with a gold relation set") {
    opt.split = Split::Test;
    Corpus c = assemble_corpus(mentions, opt);
    CHECK(c.bags.size() == 3);
    for (const auto& b : c.bags) {
      if (b.head_id == "m.1") {
        CHECK(b.size() == 3);
        CHECK(b.gold_relations.size() == 2);  // both /r/a and /r/b
      }
      if (b.head_id == "m.5") CHECK(b.gold_relations.empty());
    }
  }
  SUBCASE("grouping matches a brute-force oracle and partitions the mentions") {
    opt.split = Split::Train;
    Corpus c = assemble_corpus(mentions, opt);
    std::map<std::string, int> oracle;
    for (const auto& m : mentions) oracle[m.head_id + "|" + m.tail_id + "|" + m.relation]++;
    CHECK(c.bags.size() == oracle.size());
    std::size_t total = 0;
    for (const auto& b : c.bags) total += b.instances.size();
    CHECK(total == mentions.size());
    // Canonical order: sorted by key.
    for (std::size_t i = 1; i < c.bags.size(); ++i) {
      auto key = [&](const Bag& b) {
        return b.head_id + "|" + b.tail_id + "|" + c.relation_vocab.name(b.relation_id);
      };
      CHECK(key(c.bags[i - 1]) < key(c.bags[i]));
    }
  }
  SUBCASE("mentions with missing entities are dropped and counted") {
    auto bad = mentions;
    RawMention missing = mk("m.7", "m.8", "/r/a", {"z", "u", "z2"}, 0, 2);
    missing.head_pos = -1;
    bad.push_back(missing);
    Corpus c = assemble_corpus(bad, opt);
    CHECK(c.counters.dropped_missing_entity == 1);
    CHECK(c.total_instances() == mentions.size());
  }
}

TEST_CASE("synthetic corpus") {
  SynthConfig cfg;
  cfg.n_relations = 4;
  cfg.n_pairs = 50;
  cfg.instances_per_bag = 4;
  cfg.vocab_size = 30;
  cfg.aligned_length = 20;

  SUBCASE("zero noise means no flags") {
    cfg.noise_rate = 0.0;
    Corpus c = make_synthetic(cfg, 7);
    for (const auto& b : c.bags)
      for (const auto& inst : b.instances) CHECK(inst.noise_flag.value_or(false) == false);
  }
  SUBCASE("noise fraction concentrates near the rate") {
    cfg.noise_rate = 0.3;
    cfg.n_pairs = 2500;  // 10,000 instances
    auto mentions = make_synthetic_mentions(cfg, 11);
    std::size_t noisy = 0;
    for (const auto& m : mentions) noisy += m.noise.value_or(false) ? 1u : 0u;
    CHECK(double(noisy) / double(mentions.size()) == doctest::Approx(0.3).epsilon(0.067));
  }
  SUBCASE("same seed reproduces the corpus byte for byte") {
    cfg.noise_rate = 0.2;
    auto a = make_synthetic_mentions(cfg, 99);
    auto b = make_synthetic_mentions(cfg, 99);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].tokens == b[i].tokens);
      CHECK(a[i].relation == b[i].relation);
      CHECK(a[i].noise == b[i].noise);
    }
  }
  SUBCASE("noise rate >= 1 rejected") {
    cfg.noise_rate = 1.0;
    CHECK_THROWS_AS(make_synthetic(cfg, 1), ShapeError);
  }
}

TEST_CASE("properties over random synthetic corpora") {
  SeededRng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    SynthConfig cfg;
    cfg.n_relations = 2 + static_cast<int>(rng.uniform_int(4));
    cfg.n_pairs = 5 + static_cast<int>(rng.uniform_int(20));
    cfg.instances_per_bag = 1 + static_cast<int>(rng.uniform_int(4));
    cfg.vocab_size = 10 + static_cast<int>(rng.uniform_int(40));
    cfg.noise_rate = rng.uniform(0.0, 0.5);
    cfg.na_fraction = rng.uniform(0.0, 0.4);
    cfg.aligned_length = 14 + static_cast<int>(rng.uniform_int(10));
    Corpus c = make_synthetic(cfg, rng.next_u64());

    std::size_t total = 0;
    for (const auto& b : c.bags) {
      REQUIRE(b.size() >= 1);
      total += b.instances.size();
      for (const auto& inst : b.instances) {
        CHECK(inst.token_ids.size() == static_cast<std::size_t>(cfg.aligned_length));
        CHECK(inst.true_length <= cfg.aligned_length);
        for (int id : inst.token_ids) {
          CHECK(id >= 0);
          CHECK(id < c.token_vocab.size());
        }
        for (int bucket : inst.head_rel_pos) {
          CHECK(bucket >= 0);
          CHECK(bucket <= 2 * cfg.aligned_length - 2);
        }
      }
    }
    CHECK(total == static_cast<std::size_t>(cfg.n_pairs) *
                       static_cast<std::size_t>(cfg.instances_per_bag));
  }
}

TEST_CASE("re-encoding a decoded instance is idempotent") {
  SynthConfig cfg;
  cfg.n_pairs = 10;
  Corpus c = make_synthetic(cfg, 5);
  auto mentions = make_synthetic_mentions(cfg, 5);
  for (const auto& m : mentions) {
    auto first = encode_instance(m, c.token_vocab, cfg.aligned_length);
    RawMention round;
    round.head_pos = m.head_pos;
    round.tail_pos = m.tail_pos;
    for (int i = 0; i < first.true_length; ++i) {
      round.tokens.push_back(c.token_vocab.token(first.token_ids[static_cast<std::size_t>(i)]));
    }
    auto second = encode_instance(round, c.token_vocab, cfg.aligned_length);
    CHECK(first.token_ids == second.token_ids);
    CHECK(first.head_rel_pos == second.head_rel_pos);
    CHECK(first.tail_rel_pos == second.tail_rel_pos);
  }
}

TEST_CASE("file round trips") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "rdsgan_corpus_test";
  fs::create_directories(dir);

  SynthConfig cfg;
  cfg.n_pairs = 12;
  cfg.noise_rate = 0.25;
  auto mentions = make_synthetic_mentions(cfg, 42);

  SUBCASE("jsonl round trip preserves mentions; header comment is skipped") {
    auto path = (dir / "corpus.jsonl").string();
    write_jsonl(path, mentions, 0xDEADBEEF);
    {
      std::ifstream in(path);
      std::string first;
      std::getline(in, first);
      CHECK(first.find("# rdsgan-jsonl") == 0);
      CHECK(first.find("deadbeef") != std::string::npos);
    }
    auto loaded = read_mentions(path, CorpusFormat::Jsonl);
    REQUIRE(loaded.size() == mentions.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
      CHECK(loaded[i].tokens == mentions[i].tokens);
      CHECK(loaded[i].head_pos == mentions[i].head_pos);
      CHECK(loaded[i].noise == mentions[i].noise);
    }
  }
  SUBCASE("tsv write then parse recovers positions") {
    auto path = (dir / "corpus.tsv").string();
    write_nyt_tsv(path, mentions);
    auto loaded = read_mentions(path, CorpusFormat::NytTsv);
    REQUIRE(loaded.size() == mentions.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
      CHECK(loaded[i].tokens == mentions[i].tokens);
      CHECK(loaded[i].head_pos == mentions[i].head_pos);
      CHECK(loaded[i].tail_pos == mentions[i].tail_pos);
    }
  }
  SUBCASE("vocab sidecar round trip") {
    auto [tokens, rels] = build_vocabs(mentions, 1);
    auto path = (dir / "vocabs.json").string();
    save_vocabs(path, tokens, rels);
    auto [t2, r2] = load_vocabs(path);
    CHECK(t2.id_to_token == tokens.id_to_token);
    CHECK(r2.id_to_name == rels.id_to_name);
  }
  SUBCASE("missing file is a DataError") {
    CHECK_THROWS_AS(read_mentions((dir / "nope.jsonl").string(), CorpusFormat::Jsonl), DataError);
  }
}
