#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "support.hpp"

using namespace toolverify;

namespace {

ToolSpec tool(std::string name, std::string description) {
  ToolSpec t;
  t.name = std::move(name);
  t.description = std::move(description);
  return t;
}

std::shared_ptr<tvtest::FunctionBackend> question_backend() {
  return std::make_shared<tvtest::FunctionBackend>([](const GenerationRequest& r) {
    auto a = tvtest::after_last(r.prompt, "\na. "), b = tvtest::after_last(r.prompt, "\nb. ");
    return "Q(" + a.substr(0, a.find(" - ")) + "|" + b.substr(0, b.find(" - ")) + ")";
  });
}

}  // namespace

TEST(VQCacheKey, SymmetricOverRandomPairs) {
  std::mt19937 gen(1);
  std::uniform_int_distribution<int> c('a', 'z'), len(1, 12);
  auto word = [&] {
    std::string s;
    for (int n = len(gen); n > 0; --n) s += static_cast<char>(c(gen));
    return s;
  };
  for (int i = 0; i < 1000; ++i) {
    auto a = tool(word(), word()), b = tool(word(), word());
    EXPECT_EQ(VQCacheKey::of(a, b), VQCacheKey::of(b, a));
  }
  // the description is part of the key
  EXPECT_NE(VQCacheKey::of(tool("A", "x"), tool("B", "y")), VQCacheKey::of(tool("A", "x2"), tool("B", "y")));
  EXPECT_NE(tool_digest("ab", "c"), tool_digest("a", "bc"));
}

TEST(VQCache, PrecomputeFillsEveryPairOnce) {
  auto backend = question_backend();
  Backends backends(backend);
  const auto& reg = tvtest::toolbench();
  Context ctx{reg, backends};
  VQCache cache;
  EXPECT_EQ(precompute_questions(ctx, cache), 136u);
  EXPECT_EQ(cache.size(), 136u);
  EXPECT_EQ(backend->count(StageTag::kVqGen), 136u);
  EXPECT_EQ(precompute_questions(ctx, cache), 0u);
  EXPECT_EQ(backend->total(), 136u);
}

TEST(VQCache, WarmCacheAnswersSwappedPairWithoutTraffic) {
  auto backend = question_backend();
  Backends backends(backend);
  const auto& reg = tvtest::figure2();
  Context ctx{reg, backends};
  VQCache cache;
  const auto& a = reg.at("CarLocator");
  const auto& b = reg.at("CarFinder");
  auto q1 = contrastive_question(ctx, a, b, &cache);
  auto q2 = contrastive_question(ctx, b, a, &cache);
  EXPECT_EQ(q1, "Q(CarLocator|CarFinder)");
  EXPECT_EQ(q1, q2);
  EXPECT_EQ(backend->total(), 1u);
  EXPECT_THROW(contrastive_question(ctx, a, a, &cache), PreconditionError);
}

TEST(VQCache, PersistsAndReloads) {
  tvtest::TempDir dir;
  auto path = dir.file("vq.jsonl");
  auto backend = question_backend();
  Backends backends(backend);
  Context ctx{tvtest::figure2(), backends};
  {
    VQCache cache(path);
    EXPECT_EQ(precompute_questions(ctx, cache), 6u);
  }
  auto first = text::read_file(path);
  EXPECT_EQ(text::split_lines(text::trim(first)).size(), 6u);
  VQCache reloaded(path);
  EXPECT_EQ(reloaded.size(), 6u);
  EXPECT_EQ(precompute_questions(ctx, reloaded), 0u);
  EXPECT_EQ(text::read_file(path), first);
  EXPECT_FALSE(reloaded.insert(ctx.registry.at("CarFinder"), ctx.registry.at("CarLocator"), "other"));
  EXPECT_EQ(*reloaded.find(VQCacheKey::of(ctx.registry.at("CarFinder"), ctx.registry.at("CarLocator"))), "Q(CarLocator|CarFinder)");
}

TEST(VQCache, CorruptLineIsNamed) {
  tvtest::TempDir dir;
  auto path = dir.file("vq.jsonl");
  auto good = VQCache::to_json({"a", "b", "A", "B", "q"}).dump();
  text::write_file(path, good + "\n\n" + "{\"digest_a\": \"x\"\n");
  try {
    VQCache cache(path);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 3u);
    EXPECT_NE(std::string(e.what()).find("vq.jsonl:3"), std::string::npos);
  }
}

TEST(VQCache, ConcurrentInsertsKeepOneEntryPerPair) {
  VQCache cache;
  std::vector<ToolSpec> tools;
  for (int i = 0; i < 20; ++i) tools.push_back(tool("T" + std::to_string(i), "d"));
  std::vector<std::thread> threads;
  std::atomic<int> inserted{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (std::size_t i = 0; i < tools.size(); ++i) {
        for (std::size_t j = 0; j < tools.size(); ++j) {
          if (i != j && cache.insert(tools[i], tools[j], "q" + std::to_string(t))) ++inserted;
          cache.find(VQCacheKey::of(tools[j], tools[i]));
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(cache.size(), 190u);
  EXPECT_EQ(inserted.load(), 190);
}
