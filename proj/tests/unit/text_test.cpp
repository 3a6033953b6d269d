#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "mmhs/error.hpp"
#include "mmhs/rng.hpp"
#include "mmhs/text_encoder.hpp"
#include "test_support.hpp"

namespace mmhs {
namespace {

std::shared_ptr<StubTextBackbone> bert_like() {
  return std::make_shared<StubTextBackbone>(StubTextBackbone::Options{});
}

std::shared_ptr<StubTextBackbone> xlnet_like() {
  StubTextBackbone::Options o;
  o.seed = 29;
  o.specials = SpecialTokens::xlnet_style();
  return std::make_shared<StubTextBackbone>(o);
}

int mask_sum(const TokenSequence& t) { return std::accumulate(t.attention_mask.begin(), t.attention_mask.end(), 0); }

TEST(TokenizerTest, PreTokenizeSplitsPunctuation) {
  const auto pieces = HashingTokenizer::pre_tokenize("  Hello,world!  it's\tok ");
  const std::vector<std::string> expected{"Hello", ",", "world", "!", "it", "'", "s", "ok"};
  EXPECT_EQ(pieces, expected);
  EXPECT_TRUE(HashingTokenizer::pre_tokenize(" \n\t ").empty());
}

TEST(TokenizerTest, HashedIdsStayInVocabRange) {
  HashingTokenizer tok(SpecialTokens::bert_style());
  EXPECT_EQ(tok.encode_pieces("hello"), std::vector<int>{17491});
  for (int id : tok.encode_pieces("the quick brown fox jumps over the lazy dog 12345 ??")) {
    EXPECT_GE(id, 1000);
    EXPECT_LT(id, 31000);
  }
  EXPECT_EQ(fnv1a64(""), 0xCBF29CE484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xAF63DC4C8601EC8CULL);
}

TEST(TextTest, EmptyStringGivesOnlySpecials) {
  for (auto bb : {std::static_pointer_cast<const TextBackbone>(bert_like()),
                  std::static_pointer_cast<const TextBackbone>(xlnet_like())}) {
    const TokenSequence t = tokenize("", *bb, 512);
    EXPECT_EQ(t.size(), 512u);
    EXPECT_EQ(mask_sum(t), 2);
    TextEncoder enc(bb, BranchRole::kTextA);
    enc.projection().init_uniform_fan_in(2);
    const TextFeature f = enc.encode(t);
    EXPECT_EQ(f.values().size(), kBranchDim);
    EXPECT_TRUE(f.values().allFinite());
  }
}

TEST(TextTest, SpecialLayouts) {
  const TokenSequence a = tokenize("hello", *bert_like(), 6);
  EXPECT_EQ(a.token_ids, (std::vector<int>{101, 17491, 102, 0, 0, 0}));
  EXPECT_EQ(a.attention_mask, (std::vector<std::uint8_t>{1, 1, 1, 0, 0, 0}));
  const TokenSequence b = tokenize("hello", *xlnet_like(), 6);
  EXPECT_EQ(b.token_ids, (std::vector<int>{5, 5, 5, 17491, 4, 3}));
  EXPECT_EQ(b.attention_mask, (std::vector<std::uint8_t>{0, 0, 0, 1, 1, 1}));
  EXPECT_EQ(a.backbone_id, bert_like()->identity());
}

TEST(TextTest, LongTextIsTruncated) {
  const std::string text(10000, 'a');
  std::string words;
  for (int i = 0; i < 2000; ++i) words += "w" + std::to_string(i) + " ";
  for (const std::string& s : {text, words}) {
    const TokenSequence t = tokenize(s, *bert_like(), 512);
    EXPECT_EQ(t.size(), 512u);
    EXPECT_LE(mask_sum(t), 512);
  }
  const TokenSequence t = tokenize(words, *bert_like(), 512);
  EXPECT_EQ(mask_sum(t), 512);
  EXPECT_EQ(t.token_ids.front(), 101);
  EXPECT_EQ(t.token_ids.back(), 102);
}

TEST(TextTest, MaxLenBelowTwoIsConfigError) {
  try {
    tokenize("x", *bert_like(), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kConfigError);
  }
}

// Property: padding never changes the feature.
TEST(TextTest, PaddingInvariance) {
  Rng rng(12);
  for (auto bb : {std::static_pointer_cast<const TextBackbone>(bert_like()),
                  std::static_pointer_cast<const TextBackbone>(xlnet_like())}) {
    TextEncoder enc(bb, BranchRole::kTextB);
    enc.projection().init_uniform_fan_in(8);
    for (int trial = 0; trial < 10; ++trial) {
      std::string text;
      const auto words = 1 + rng.below(12);
      for (std::size_t i = 0; i < words; ++i) text += "tok" + std::to_string(rng.below(50)) + " ";
      const Vector short_pad = enc.encode(tokenize(text, *bb, 16)).values();
      const Vector long_pad = enc.encode(tokenize(text, *bb, 200)).values();
      EXPECT_LT((short_pad - long_pad).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(TextTest, PoolingRules) {
  Matrix states(2, 4);
  states << 1, 2, 3, 4,
            5, 6, 7, 8;
  const std::vector<std::uint8_t> mask{0, 1, 1, 0};
  EXPECT_EQ(pool_states(states, mask, PoolingRule::kFirstToken), (Vector(2) << 2, 6).finished());
  EXPECT_EQ(pool_states(states, mask, PoolingRule::kLastToken), (Vector(2) << 3, 7).finished());
  EXPECT_EQ(pool_states(states, mask, PoolingRule::kMean), (Vector(2) << 2.5, 6.5).finished());
  EXPECT_EQ(pool_states(states, {0, 0, 0, 0}, PoolingRule::kMean), Vector::Zero(2));
  EXPECT_EQ(parse_pooling_rule("mean"), PoolingRule::kMean);
}

// Regression fixtures from tests/oracles/stub_fixtures.py.
TEST(TextTest, FrozenStubFeatures) {
  TextEncoder a(bert_like(), BranchRole::kTextA);
  a.set_identity_projection();
  const Vector f2 = a.encode(tokenize("hello", a.backbone(), 512)).values();
  const std::array<double, 8> head{0.07776157806292483, 0, 0.63103100243660859, 0.40811302843687408, 0, 0, 0, 0};
  for (std::size_t i = 0; i < head.size(); ++i) EXPECT_NEAR(f2(static_cast<Eigen::Index>(i)), head[i], 1e-12);
  EXPECT_NEAR(f2.sum(), 66.819380438950631, 1e-9);

  TextEncoder b(xlnet_like(), BranchRole::kTextB);
  b.set_identity_projection();
  EXPECT_NEAR(b.encode(tokenize("hello", b.backbone(), 512)).values().sum(), 71.965665980804644, 1e-9);
}

TEST(TextTest, TokensFromOtherBackboneRejected) {
  TextEncoder a(bert_like(), BranchRole::kTextA);
  const TokenSequence foreign = tokenize("hello", *xlnet_like(), 8);
  try {
    a.encode(foreign);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kBackboneMismatch);
  }
}

TEST(TextTest, VisionRoleRejected) {
  try {
    TextEncoder enc(bert_like(), BranchRole::kVision);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kRoleMismatch);
  }
}

TEST(TextTest, BranchesHaveDisjointParameters) {
  FusionModel model = testing::make_stub_model(1);
  std::vector<Parameter*> a;
  std::vector<Parameter*> b;
  model.text_a().projection().collect(a);
  model.text_b().projection().collect(b);
  std::set<std::string> names;
  std::set<const void*> storage;
  for (Parameter* p : a) {
    names.insert(p->name);
    storage.insert(p->value.data());
  }
  for (Parameter* p : b) {
    EXPECT_FALSE(names.count(p->name));
    EXPECT_FALSE(storage.count(p->value.data()));
  }
  // Updating one branch leaves the other untouched.
  const Matrix before = model.text_b().projection().weight().value;
  model.text_a().projection().weight().value.array() += 1.0;
  EXPECT_EQ(model.text_b().projection().weight().value, before);
}

TEST(TextTest, CaseSensitiveIds) {
  HashingTokenizer tok(SpecialTokens::bert_style());
  EXPECT_NE(tok.encode_pieces("Hate"), tok.encode_pieces("hate"));
}

}  // namespace
}  // namespace mmhs
