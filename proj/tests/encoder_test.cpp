#include <atomic>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "crisisscope/encoder.hpp"
#include "fixtures.hpp"

namespace cs = crisisscope;

namespace {

// Returns vectors of a configurable dimension / count; counts overlapping calls.
class FaultyEncoder final : public cs::EncoderBackend {
 public:
  std::size_t dim = 4;
  std::size_t returned_dim = 4;
  bool drop_one = false;
  bool nan = false;
  bool safe = true;
  mutable std::atomic<int> active{0};
  mutable std::atomic<int> max_active{0};

  std::string name() const override { return "faulty"; }
  std::size_t dimension() const override { return dim; }
  std::string identity() const override { return "faulty"; }
  bool concurrent_safe() const override { return safe; }

 protected:
  std::vector<cs::Embedding> do_encode(std::span<const std::string> texts) const override {
    const int now = ++active;
    int prev = max_active.load();
    while (now > prev && !max_active.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    std::vector<cs::Embedding> out(texts.size(), cs::Embedding::Ones(static_cast<Eigen::Index>(returned_dim)));
    if (drop_one) out.pop_back();
    if (nan && !out.empty()) out[0][0] = std::nan("");
    --active;
    return out;
  }
};

}  // namespace

TEST(MockEncoder, UnitNormAndDimension) {
  cs::MockEncoder enc(32, 1);
  auto v = enc.encode_one("Heavy rain in the north");
  EXPECT_EQ(v.size(), 32);
  EXPECT_NEAR(v.norm(), 1.0, 1e-12);
}

TEST(MockEncoder, DeterministicAcrossInstancesAndBatches) {
  cs::MockEncoder a(16, 9), b(16, 9);
  std::vector<std::string> texts = {"one two", "three four five"};
  auto batch = a.encode(texts);
  EXPECT_EQ(batch[1], b.encode_one("three four five"));
  EXPECT_EQ(batch[0], b.encode_one("one two"));
}

TEST(MockEncoder, SeedChangesVectorsAndIdentity) {
  cs::MockEncoder a(16, 1), b(16, 2);
  EXPECT_NE(a.encode_one("flood"), b.encode_one("flood"));
  EXPECT_NE(a.identity(), b.identity());
}

TEST(MockEncoder, AliasesMapTranslationsTogether) {
  cs::MockEncoder plain(64, 0);
  cs::MockEncoder aliased(64, 0, fixtures::alias_table());
  const std::string en = "River overflowing and streets flooded";
  const std::string xb = fixtures::translate("xb", en);
  EXPECT_NE(xb, en);
  EXPECT_NEAR(cs::cosine(aliased.encode_one(en), aliased.encode_one(xb)), 1.0, 1e-12);
  EXPECT_LT(cs::cosine(plain.encode_one(en), plain.encode_one(xb)), 0.5);
  EXPECT_NE(plain.identity(), aliased.identity());
}

TEST(MockEncoder, AliasTableFromJson) {
  auto t = cs::alias_table_from_json(nlohmann::json::parse(R"({"Pluja":"rain"})"));
  EXPECT_EQ(t.at("pluja"), "rain");
  EXPECT_THROW(cs::alias_table_from_json(nlohmann::json::array()), cs::SchemaError);
}

TEST(EncoderBackend, EmptyTextIsBackendErrorWithIndex) {
  cs::MockEncoder enc(8);
  std::vector<std::string> texts = {"fine", "  "};
  try {
    enc.encode(texts);
    FAIL();
  } catch (const cs::BackendError& e) {
    EXPECT_EQ(e.input_index(), 1u);
  }
}

TEST(EncoderBackend, ContractViolationsAreBackendErrors) {
  std::vector<std::string> texts = {"a", "b"};
  FaultyEncoder wrong_dim;
  wrong_dim.returned_dim = 3;
  EXPECT_THROW(wrong_dim.encode(texts), cs::BackendError);
  FaultyEncoder short_batch;
  short_batch.drop_one = true;
  EXPECT_THROW(short_batch.encode(texts), cs::BackendError);
  FaultyEncoder nan;
  nan.nan = true;
  EXPECT_THROW(nan.encode(texts), cs::BackendError);
}

TEST(EncoderBackend, UnsafeBackendsAreSerialized) {
  FaultyEncoder enc;
  enc.safe = false;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 5; ++i) enc.encode_one("x");
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(enc.max_active.load(), 1);
}

TEST(Cosine, ZeroVectorAndMismatch) {
  cs::Embedding z = cs::Embedding::Zero(3);
  cs::Embedding u(3);
  u << 1, 0, 0;
  bool zero = false;
  EXPECT_EQ(cs::cosine(z, u, &zero), 0.0);
  EXPECT_TRUE(zero);
  EXPECT_THROW(cs::cosine(u, cs::Embedding::Ones(4)), cs::ValidationError);
}

TEST(Cosine, MatchesDefinition) {
  cs::Embedding u(3), v(3);
  u << 1, 2, 3;
  v << -2, 0.5, 4;
  const double expected = (1 * -2 + 2 * 0.5 + 3 * 4) / (std::sqrt(14.0) * std::sqrt(4 + 0.25 + 16));
  EXPECT_NEAR(cs::cosine(u, v), expected, 1e-15);
  EXPECT_DOUBLE_EQ(cs::cosine(u, u), 1.0);
}

TEST(SentenceSequence, OneVectorPerSentence) {
  cs::MockEncoder enc(8);
  EXPECT_EQ(cs::sentence_sequence("Rain. More rain! Still raining", enc).size(), 3u);
}

TEST(EmbeddingJson, RoundTrip) {
  cs::MockEncoder enc(8);
  auto v = enc.encode_one("abc");
  EXPECT_EQ(cs::embedding_from_json(cs::embedding_to_json(v)), v);
}
