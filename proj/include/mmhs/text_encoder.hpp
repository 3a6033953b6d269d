#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mmhs/features.hpp"
#include "mmhs/nn.hpp"
#include "mmhs/tokenizer.hpp"

namespace mmhs {

inline constexpr std::size_t kDefaultMaxSeqLen = 512;

struct TokenSequence {
  std::vector<int> token_ids;
  std::vector<std::uint8_t> attention_mask;
  std::string backbone_id;

  std::size_t size() const noexcept { return token_ids.size(); }
  std::size_t real_tokens() const;
};

enum class PoolingRule { kFirstToken, kLastToken, kMean };

std::string_view pooling_rule_name(PoolingRule rule) noexcept;
PoolingRule parse_pooling_rule(std::string_view text);

// Frozen text encoder producing per-position hidden states.
class TextBackbone {
 public:
  virtual ~TextBackbone() = default;

  virtual std::string identity() const = 0;
  virtual Eigen::Index pooled_dim() const = 0;
  virtual PoolingRule pooling_rule() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  // hidden x length. Columns at masked-out positions are unspecified.
  virtual Matrix token_states(const TokenSequence& tokens) const = 0;
};

// Pools the unmasked columns of `states` according to `rule`. A sequence
// with no unmasked positions pools to zeros.
Vector pool_states(const Matrix& states, const std::vector<std::uint8_t>& mask, PoolingRule rule);

// Deterministic stand-in for a pretrained transformer: every token id maps to
// a hashed 768-d embedding
//   e(id)[d] = 2*u(seed, 3, id*hidden + d) - 1
// (u as in StubVisionBackbone), without any contextual mixing. Mean pooling
// by default.
class StubTextBackbone final : public TextBackbone {
 public:
  struct Options {
    std::uint64_t seed = 23;
    SpecialTokens specials = SpecialTokens::bert_style();
    PoolingRule pooling = PoolingRule::kMean;
    Eigen::Index hidden = 768;
  };

  explicit StubTextBackbone(const Options& options);

  std::string identity() const override;
  Eigen::Index pooled_dim() const override { return options_.hidden; }
  PoolingRule pooling_rule() const override { return options_.pooling; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  Matrix token_states(const TokenSequence& tokens) const override;

  Vector embedding(int token_id) const;

 private:
  Options options_;
  HashingTokenizer tokenizer_;
};

// Truncates content pieces to max_len - 2, adds the backbone's special
// tokens, and pads to exactly max_len. Throws ConfigError if max_len < 2.
TokenSequence tokenize(std::string_view text, const TextBackbone& backbone, std::size_t max_len);

// Backbone + trainable 768->512 projection + ReLU, producing F2 or F3.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(std::shared_ptr<const TextBackbone> backbone, BranchRole role);

  const TextBackbone& backbone() const { return *backbone_; }
  std::shared_ptr<const TextBackbone> backbone_ptr() const { return backbone_; }
  BranchRole role() const noexcept { return role_; }

  Linear& projection() { return projection_; }
  const Linear& projection() const { return projection_; }
  void set_identity_projection();

  // Pooled backbone encoding (pooled_dim). Throws BackboneMismatch if the
  // tokens were produced for another backbone.
  Vector pooled(const TokenSequence& tokens) const;
  TextFeature encode(const TokenSequence& tokens) const;
  Matrix project(const Matrix& pooled) const;

 private:
  std::shared_ptr<const TextBackbone> backbone_;
  BranchRole role_ = BranchRole::kTextA;
  Linear projection_;
};

TextFeature encode_text(const TokenSequence& tokens, const TextEncoder& encoder);

}  // namespace mmhs
