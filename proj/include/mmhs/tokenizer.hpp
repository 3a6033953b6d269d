#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mmhs {

// Where the summary/separator tokens go and which side is padded.
//   kClsFirst:  [CLS] pieces [SEP] pad...      (bidirectional-encoder convention)
//   kClsLast:   pad... pieces <sep> <cls>      (permutation-LM convention)
enum class SpecialLayout { kClsFirst, kClsLast };

struct SpecialTokens {
  int pad = 0;
  int unk = 100;
  int cls = 101;
  int sep = 102;
  SpecialLayout layout = SpecialLayout::kClsFirst;

  static SpecialTokens bert_style() { return {0, 100, 101, 102, SpecialLayout::kClsFirst}; }
  static SpecialTokens xlnet_style() { return {5, 0, 3, 4, SpecialLayout::kClsLast}; }
  // Both layouts add exactly two special tokens.
  static constexpr std::size_t kCount = 2;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::string identity() const = 0;
  virtual SpecialTokens specials() const = 0;
  // Content pieces only; specials are added by tokenize().
  virtual std::vector<int> encode_pieces(std::string_view text) const = 0;
};

// Splits on whitespace, emits ASCII punctuation as separate pieces and maps
// each piece to first_id + fnv1a64(piece) % vocab_size. Case-sensitive.
class HashingTokenizer final : public Tokenizer {
 public:
  HashingTokenizer(SpecialTokens specials, int vocab_size = 30000, int first_id = 1000);

  std::string identity() const override;
  SpecialTokens specials() const override { return specials_; }
  std::vector<int> encode_pieces(std::string_view text) const override;

  static std::vector<std::string> pre_tokenize(std::string_view text);

 private:
  SpecialTokens specials_;
  int vocab_size_;
  int first_id_;
};

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace mmhs
