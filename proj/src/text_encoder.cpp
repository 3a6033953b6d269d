#include "mmhs/text_encoder.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "mmhs/error.hpp"
#include "mmhs/rng.hpp"

namespace mmhs {

std::size_t TokenSequence::real_tokens() const {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), std::uint8_t{1}));
}

std::string_view pooling_rule_name(PoolingRule rule) noexcept {
  switch (rule) {
    case PoolingRule::kFirstToken: return "first_token";
    case PoolingRule::kLastToken: return "last_token";
    case PoolingRule::kMean: return "mean";
  }
  return "mean";
}

PoolingRule parse_pooling_rule(std::string_view text) {
  if (text == "first_token") return PoolingRule::kFirstToken;
  if (text == "last_token") return PoolingRule::kLastToken;
  if (text == "mean") return PoolingRule::kMean;
  throw Error(Errc::kConfigError, fmt::format("unknown pooling rule '{}'", text));
}

Vector pool_states(const Matrix& states, const std::vector<std::uint8_t>& mask, PoolingRule rule) {
  if (static_cast<std::size_t>(states.cols()) != mask.size()) {
    throw Error(Errc::kShapeMismatch, fmt::format("{} states for {} mask entries", states.cols(), mask.size()));
  }
  Vector out = Vector::Zero(states.rows());
  switch (rule) {
    case PoolingRule::kFirstToken: {
      const auto it = std::find(mask.begin(), mask.end(), std::uint8_t{1});
      if (it != mask.end()) out = states.col(it - mask.begin());
      break;
    }
    case PoolingRule::kLastToken: {
      const auto it = std::find(mask.rbegin(), mask.rend(), std::uint8_t{1});
      if (it != mask.rend()) out = states.col(static_cast<Eigen::Index>(mask.rend() - it) - 1);
      break;
    }
    case PoolingRule::kMean: {
      std::size_t n = 0;
      for (std::size_t t = 0; t < mask.size(); ++t) {
        if (mask[t] == 1) {
          out += states.col(static_cast<Eigen::Index>(t));
          ++n;
        }
      }
      if (n > 0) out /= static_cast<double>(n);
      break;
    }
  }
  return out;
}

StubTextBackbone::StubTextBackbone(const Options& options)
    : options_(options), tokenizer_(options.specials) {
  if (options.hidden <= 0) throw Error(Errc::kConfigError, "stub text hidden size must be positive");
}

std::string StubTextBackbone::identity() const {
  return fmt::format("stub-text/seed={}/hidden={}/pool={}/{}", options_.seed, options_.hidden,
                     pooling_rule_name(options_.pooling), tokenizer_.identity());
}

Vector StubTextBackbone::embedding(int token_id) const {
  Vector e(options_.hidden);
  const auto base = static_cast<std::uint64_t>(token_id) * static_cast<std::uint64_t>(options_.hidden);
  for (Eigen::Index d = 0; d < options_.hidden; ++d) {
    e(d) = 2.0 * unit_from_bits(mix_seed(options_.seed, (std::uint64_t{3} << 56) ^ (base + d))) - 1.0;
  }
  return e;
}

Matrix StubTextBackbone::token_states(const TokenSequence& tokens) const {
  Matrix states = Matrix::Zero(options_.hidden, static_cast<Eigen::Index>(tokens.size()));
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens.attention_mask[t] == 1) states.col(static_cast<Eigen::Index>(t)) = embedding(tokens.token_ids[t]);
  }
  return states;
}

TokenSequence tokenize(std::string_view text, const TextBackbone& backbone, std::size_t max_len) {
  if (max_len < SpecialTokens::kCount) {
    throw Error(Errc::kConfigError, fmt::format("max_len {} cannot hold the {} special tokens", max_len,
                                                SpecialTokens::kCount));
  }
  const Tokenizer& tok = backbone.tokenizer();
  const SpecialTokens sp = tok.specials();
  std::vector<int> pieces = tok.encode_pieces(text);
  if (pieces.size() > max_len - SpecialTokens::kCount) pieces.resize(max_len - SpecialTokens::kCount);

  std::vector<int> body;
  body.reserve(pieces.size() + SpecialTokens::kCount);
  if (sp.layout == SpecialLayout::kClsFirst) {
    body.push_back(sp.cls);
    body.insert(body.end(), pieces.begin(), pieces.end());
    body.push_back(sp.sep);
  } else {
    body.insert(body.end(), pieces.begin(), pieces.end());
    body.push_back(sp.sep);
    body.push_back(sp.cls);
  }

  TokenSequence seq;
  seq.backbone_id = backbone.identity();
  const std::size_t pad = max_len - body.size();
  if (sp.layout == SpecialLayout::kClsFirst) {
    seq.token_ids = body;
    seq.token_ids.resize(max_len, sp.pad);
    seq.attention_mask.assign(body.size(), 1);
    seq.attention_mask.resize(max_len, 0);
  } else {
    seq.token_ids.assign(pad, sp.pad);
    seq.token_ids.insert(seq.token_ids.end(), body.begin(), body.end());
    seq.attention_mask.assign(pad, 0);
    seq.attention_mask.resize(max_len, 1);
  }
  return seq;
}

TextEncoder::TextEncoder(std::shared_ptr<const TextBackbone> backbone, BranchRole role)
    : backbone_(std::move(backbone)),
      role_(role),
      projection_(role == BranchRole::kTextA ? "text_a.projection" : "text_b.projection",
                  backbone_->pooled_dim(), kBranchDim) {
  if (role == BranchRole::kVision) throw Error(Errc::kRoleMismatch, "text encoder cannot fill the F1 slot");
}

void TextEncoder::set_identity_projection() {
  projection_.weight().value.setZero();
  const Eigen::Index n = std::min<Eigen::Index>(kBranchDim, backbone_->pooled_dim());
  for (Eigen::Index i = 0; i < n; ++i) projection_.weight().value(i, i) = 1.0;
  projection_.bias().value.setZero();
}

Vector TextEncoder::pooled(const TokenSequence& tokens) const {
  if (tokens.backbone_id != backbone_->identity()) {
    throw Error(Errc::kBackboneMismatch,
                fmt::format("tokens for '{}' fed to '{}'", tokens.backbone_id, backbone_->identity()));
  }
  if (tokens.token_ids.size() != tokens.attention_mask.size()) {
    throw Error(Errc::kShapeMismatch, "token ids and attention mask differ in length");
  }
  return pool_states(backbone_->token_states(tokens), tokens.attention_mask, backbone_->pooling_rule());
}

Matrix TextEncoder::project(const Matrix& pooled) const {
  if (pooled.rows() != backbone_->pooled_dim()) {
    throw Error(Errc::kShapeMismatch,
                fmt::format("pooled text feature has {} rows, expected {}", pooled.rows(), backbone_->pooled_dim()));
  }
  return relu(projection_.forward(pooled));
}

TextFeature TextEncoder::encode(const TokenSequence& tokens) const {
  return TextFeature(role_, project(pooled(tokens)).col(0));
}

TextFeature encode_text(const TokenSequence& tokens, const TextEncoder& encoder) { return encoder.encode(tokens); }

}  // namespace mmhs
