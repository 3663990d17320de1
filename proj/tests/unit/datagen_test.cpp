#include <gtest/gtest.h>

#include <random>
#include <set>

#include "support.hpp"

using namespace toolverify;

namespace {

const Registry& seeds() {
  static const auto reg = load_registry(tvtest::source_path("assets/registry/seed_tools.json"));
  return reg;
}

const Registry& synthetic() {
  static const auto reg = load_registry(tvtest::fixture("golden/datagen/registry.json"));
  return reg;
}

SeedPool seed_pool() {
  SeedPool pool;
  for (const auto& t : seeds().tools()) pool.tools.emplace_back(t.name, t.description);
  return pool;
}

// Instruction and note generator keyed on prompt content only.
std::shared_ptr<tvtest::FunctionBackend> corpus_backend(std::size_t note_words = 12) {
  return std::make_shared<tvtest::FunctionBackend>([note_words](const GenerationRequest& r) -> std::string {
    if (r.tag == StageTag::kInstructionGen) {
      auto tool = tvtest::after_last(r.prompt, "\nTool: ");
      auto index = tvtest::after_last(r.prompt, "\nInstruction ");
      return " Please use " + tool + " for request " + index.substr(0, index.find(':'));
    }
    if (r.tag == StageTag::kReasoningGen) {
      std::string note;
      for (std::size_t i = 0; i < note_words; ++i) note += "word" + std::to_string(i) + " ";
      return note;
    }
    return "";
  });
}

std::size_t words(const std::string& s) { return text::count_words(s); }

}  // namespace

TEST(ToolGeneration, Parse) {
  auto one = parse_tool_generation("Name: Humidity\nDescription: Computes humidity at a location on a date");
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], NamedTool("Humidity", "Computes humidity at a location on a date"));
  EXPECT_TRUE(parse_tool_generation("").empty());
  auto two = parse_tool_generation("Name: A\nDescription: a\n\nName: B\nDescription: b\n\nName:");
  EXPECT_EQ(two.size(), 2u);
  auto noisy = parse_tool_generation("Name: A\nsomething else\nDescription: orphan\nName: C\nDescription: c\nName: D");
  ASSERT_EQ(noisy.size(), 1u);
  EXPECT_EQ(noisy[0].first, "C");
}

TEST(ToolLibrary, RotationReplacesMostSimilarPoolMember) {
  auto backend = ScriptedBackend::from_file(tvtest::fixture("scripted/datagen.jsonl"));
  Backends backends(backend);
  Registry none;
  Context ctx{none, backends};
  NgramEmbedder embedder;
  auto result = generate_tool_library(ctx, seed_pool(), embedder);

  // Humidity is rejected as a duplicate; four tools are accepted.
  EXPECT_EQ(result.rejected_duplicates, 1u);
  ASSERT_EQ(result.tools.size(), 12u);
  EXPECT_EQ(result.tools[8].first, "Weather Alert");
  EXPECT_EQ(result.tools[11].first, "Stock Price");
  EXPECT_EQ(result.final_pool.tools.size(), 8u);
  ASSERT_EQ(result.replacements.size(), 4u);

  // Replay the rotation by brute force.
  auto pool = seed_pool().tools;
  auto vec = [&](const NamedTool& t) { return embedder.embed(t.first + ": " + t.second); };
  for (std::size_t i = 8; i < 12; ++i) {
    const auto& added = result.tools[i];
    std::size_t best = 0;
    for (std::size_t j = 1; j < pool.size(); ++j) {
      if (cosine(vec(added), vec(pool[j])) > cosine(vec(added), vec(pool[best]))) best = j;
    }
    EXPECT_EQ(result.replacements[i - 8], std::make_pair(pool[best].first, added.first));
    pool[best] = added;
  }
  EXPECT_EQ(result.final_pool.tools, pool);
  // the second round was prompted with the rotated pool
  EXPECT_EQ(backend->call_count(StageTag::kToolGen), 2u);
}

TEST(ToolLibrary, Preconditions) {
  Backends backends(std::make_shared<tvtest::FunctionBackend>([](const GenerationRequest&) { return ""; }));
  Registry none;
  Context ctx{none, backends};
  NgramEmbedder e;
  LibraryOptions zero;
  zero.rounds = 0;
  EXPECT_THROW(generate_tool_library(ctx, seed_pool(), e, zero), PreconditionError);
  EXPECT_THROW(generate_tool_library(ctx, SeedPool{}, e), PreconditionError);
  auto over = seed_pool();
  over.capacity = 4;
  EXPECT_THROW(generate_tool_library(ctx, over, e), PreconditionError);
  auto r = generate_tool_library(ctx, seed_pool(), e);
  EXPECT_EQ(r.skipped_rounds, 2u);
  EXPECT_EQ(r.tools.size(), 8u);
}

TEST(ToolLibrary, PoolGrowsToCapacityThenStays) {
  int round = 0;
  Backends backends(std::make_shared<tvtest::FunctionBackend>([&](const GenerationRequest&) {
    std::string out;
    for (int i = 0; i < 3; ++i) out += " Gadget" + std::to_string(round) + "x" + std::to_string(i) + "\nDescription: unique thing " +
                                       std::string(static_cast<std::size_t>(round * 3 + i + 1), 'q') + "\nName:";
    ++round;
    return out;
  }));
  Registry none;
  Context ctx{none, backends};
  SeedPool pool;
  pool.capacity = 4;
  pool.tools = {{"Alpha", "first"}, {"Beta", "second"}};
  LibraryOptions opts;
  opts.rounds = 3;
  opts.per_round = 3;
  opts.dedup_threshold = 1.01;  // keep everything
  auto r = generate_tool_library(ctx, pool, NgramEmbedder(), opts);
  EXPECT_EQ(r.tools.size(), 11u);
  EXPECT_EQ(r.final_pool.tools.size(), 4u);
  EXPECT_EQ(r.replacements.size(), 7u);
}

TEST(RelatedTools, HumidityListing) {
  Backends backends(std::make_shared<tvtest::FunctionBackend>([](const GenerationRequest& r) -> std::string {
    return r.prompt.size() >= 6 && r.prompt.substr(r.prompt.size() - 6) == "Name3:" ? " Humidity Altitude Location date\n"
                                                                                   : " Humidity at timezone\nName3: x";
  }));
  Registry none;
  auto r = generate_related_tools(Context{none, backends}, "Humidity");
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.names, (std::vector<std::string>{"Humidity at timezone", "Humidity Altitude Location date"}));
}

TEST(RelatedTools, DuplicatesExhaustRetries) {
  auto backend = std::make_shared<tvtest::FunctionBackend>([](const GenerationRequest&) { return " car finder"; });
  Backends backends(backend);
  Registry none;
  auto r = generate_related_tools(Context{none, backends}, "Car Finder");
  EXPECT_FALSE(r.ok);
  EXPECT_TRUE(r.names.empty());
  EXPECT_EQ(r.attempts, 3u);
  EXPECT_EQ(text::normalize_name("car finder"), text::normalize_name("Car Finder"));
}

TEST(RelatedTools, SeedsDifferPerGeneration) {
  std::vector<std::int64_t> seeds_seen;
  Backends backends(std::make_shared<tvtest::FunctionBackend>([&](const GenerationRequest& r) {
    seeds_seen.push_back(*r.sampling.seed);
    return " Name" + std::to_string(seeds_seen.size());
  }));
  Registry none;
  auto r = generate_related_tools(Context{none, backends}, "Base", {}, 40);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(seeds_seen, (std::vector<std::int64_t>{40, 41}));
}

TEST(Instructions, DedupAndResampleBound) {
  const auto& tool = seeds().at("Humidity");
  int calls = 0;
  Backends backends(std::make_shared<tvtest::FunctionBackend>([&](const GenerationRequest&) {
    ++calls;
    return calls % 2 ? " \"Same question?\"" : " same question?";
  }));
  Registry none;
  Context ctx{none, backends};
  EXPECT_THROW(generate_instructions(ctx, tool, 2), GenerationError);
  calls = 0;
  EXPECT_EQ(generate_instructions(ctx, tool, 1), (std::vector<std::string>{"Same question?"}));
  EXPECT_THROW(generate_instructions(ctx, tool, 0), PreconditionError);

  Backends good(corpus_backend());
  auto three = generate_instructions(Context{none, good}, tool, 3);
  EXPECT_EQ(std::set<std::string>(three.begin(), three.end()).size(), 3u);
  EXPECT_EQ(three[2], "Please use Humidity for request 3");
}

TEST(ReasoningNote, FigureTwoTruncationAndFallback) {
  const auto& reg = tvtest::figure2();
  CandidateSet set;
  set.tools = reg.names();
  const std::string thought =
      "Since I need to find the car within 10 miles, \"Car Finder\" tool seems to be the right choice here. I need to use this tool.";
  Backends fig(std::make_shared<tvtest::FunctionBackend>([&](const GenerationRequest&) { return thought; }));
  Context ctx{reg, fig};
  auto note = generate_reasoning_note(ctx, "Where can I buy an Audi Q7?", set, "CarFinder");
  EXPECT_EQ(note.rfind("Since I need to find the car within 10 miles", 0), 0u);
  EXPECT_EQ(generate_reasoning_note(ctx, "x", set, "CarFinder", 1), "Since");
  EXPECT_THROW(generate_reasoning_note(ctx, "x", CandidateSet{{"CarLocator"}, std::nullopt, false}, "CarFinder"), PreconditionError);

  Backends empty(std::make_shared<tvtest::FunctionBackend>([](const GenerationRequest&) { return "   "; }));
  auto fallback = generate_reasoning_note(Context{reg, empty}, "x", set, "CarFinder");
  EXPECT_NE(fallback.find("CarFinder"), std::string::npos);

  std::mt19937 gen(8);
  for (int i = 0; i < 50; ++i) {
    std::size_t cap = 1 + gen() % 20;
    Backends b(corpus_backend(gen() % 40));
    auto n = generate_reasoning_note(Context{reg, b}, "x", set, "CarFinder", cap);
    EXPECT_LE(words(n), cap);
    EXPECT_FALSE(n.empty());
  }
}

TEST(Dataset, SmallRegistryNoHard) {
  std::vector<ToolSpec> three(seeds().tools().begin(), seeds().tools().begin() + 3);
  Registry reg(three);
  Backends backends(corpus_backend());
  DatagenConfig cfg;
  cfg.hard_ratio = 0;
  auto result = assemble_dataset(Context{reg, backends}, cfg);
  ASSERT_EQ(result.samples.size(), 9u);
  for (const auto& s : result.samples) {
    EXPECT_TRUE(s.candidates.contains(s.ground_truth));
    EXPECT_EQ(s.candidates.tools.size(), 3u);
    EXPECT_FALSE(s.hard);
  }
  EXPECT_EQ(result.stats.n_tools, 3u);
  EXPECT_THROW(assemble_dataset(Context{Registry(), backends}, cfg), PreconditionError);
  cfg.hard_ratio = 1.5;
  EXPECT_THROW(assemble_dataset(Context{reg, backends}, cfg), PreconditionError);
}

TEST(Dataset, StructureOverSeeds) {
  const auto& reg = synthetic();
  Backends backends(corpus_backend());
  Context ctx{reg, backends};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DatagenConfig cfg;
    cfg.seed = seed;
    cfg.instructions_per_tool = 2;
    cfg.shuffle = seed % 2 == 0;
    auto result = assemble_dataset(ctx, cfg);
    ASSERT_EQ(result.samples.size(), 72u);
    std::size_t hard = 0;
    for (const auto& s : result.samples) {
      EXPECT_TRUE(s.candidates.contains(s.ground_truth));
      EXPECT_EQ(parse_tool_action(s.target), s.ground_truth);
      EXPECT_GE(s.candidates.tools.size(), 2u);
      EXPECT_LE(s.candidates.tools.size(), 8u);
      if (!cfg.shuffle) {
        EXPECT_EQ(s.candidates.tools.front(), s.ground_truth);
      }
      if (s.hard) {
        ++hard;
        const auto& rel = reg.at(s.ground_truth).related;
        for (const auto& c : s.candidates.tools) EXPECT_TRUE(c == s.ground_truth || std::count(rel.begin(), rel.end(), c));
      }
    }
    // every synthetic tool has related links, so no hard sample falls back
    EXPECT_EQ(result.hard_fallbacks, 0u);
    EXPECT_EQ(hard, static_cast<std::size_t>(std::llround(72.0 * 75.0 / 555.0)));
    EXPECT_EQ(result.stats.n_hard, hard);
    EXPECT_LE(result.stats.min_candidates, result.stats.avg_candidates);
    EXPECT_LE(result.stats.avg_candidates, result.stats.max_candidates);
  }
}

TEST(Dataset, HardFallbackWithoutRelatedTools) {
  Backends backends(corpus_backend());
  DatagenConfig cfg;
  cfg.hard_ratio = 1.0;
  auto result = assemble_dataset(Context{seeds(), backends}, cfg);
  EXPECT_EQ(result.hard_fallbacks, result.samples.size());
  EXPECT_EQ(result.stats.n_hard, 0u);
}

TEST(Dataset, DeterministicExport) {
  Backends b1(corpus_backend()), b2(corpus_backend());
  DatagenConfig cfg;
  cfg.seed = 3;
  auto a = format_dataset(assemble_dataset(Context{synthetic(), b1}, cfg).samples);
  auto b = format_dataset(assemble_dataset(Context{synthetic(), b2}, cfg).samples);
  EXPECT_EQ(a, b);
  cfg.seed = 4;
  EXPECT_NE(a, format_dataset(assemble_dataset(Context{synthetic(), b1}, cfg).samples));
}

TEST(Export, RoundTripAndGate) {
  Backends backends(corpus_backend());
  DatagenConfig cfg;
  cfg.instructions_per_tool = 1;
  auto samples = assemble_dataset(Context{synthetic(), backends}, cfg).samples;
  samples.resize(20);
  tvtest::TempDir dir;
  EXPECT_EQ(export_finetune(samples, dir.file("d.jsonl")), 20u);
  auto back = import_dataset(dir.file("d.jsonl"));
  ASSERT_EQ(back.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_TRUE(back[i] == samples[i]) << i;

  EXPECT_EQ(export_finetune({}, dir.file("empty.jsonl")), 0u);
  EXPECT_EQ(text::read_file(dir.file("empty.jsonl")), "");

  auto bad = samples;
  bad[3].target = "Thought: x\n\nAct: CALLTOOL[Somebody Else()]";
  EXPECT_THROW(export_finetune(bad, dir.file("bad.jsonl")), PreconditionError);
  EXPECT_THROW(text::read_file(dir.file("bad.jsonl")), IoError);

  text::write_file(dir.file("corrupt.jsonl"), format_dataset({samples[0]}) + "{oops\n");
  try {
    import_dataset(dir.file("corrupt.jsonl"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 2u);
  }
}

TEST(SyntheticRegistry, FamiliesAreSymmetric) {
  Backends backends(ScriptedBackend::from_file(tvtest::fixture("scripted/datagen.jsonl")));
  auto result = build_synthetic_registry(backends, seeds(), NgramEmbedder());
  const auto& reg = result.registry;
  EXPECT_EQ(reg.size(), 36u);
  EXPECT_TRUE(result.related_failures.empty());
  for (const auto& t : reg.tools()) {
    EXPECT_EQ(t.related.size(), 2u) << t.name;
    for (const auto& r : t.related) {
      const auto& back = reg.at(r).related;
      EXPECT_TRUE(std::count(back.begin(), back.end(), t.name)) << t.name << " -> " << r;
    }
  }
  EXPECT_EQ(reg.at("Humidity By Date").description, "A variant of Humidity By Date with different parameters.");
  EXPECT_TRUE(reg.at("Weather Alert").synthetic);
  EXPECT_FALSE(reg.at("Humidity").synthetic);
  EXPECT_EQ(reg.to_json(), synthetic().to_json());
}
