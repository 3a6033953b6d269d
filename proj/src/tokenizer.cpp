#include "mmhs/tokenizer.hpp"

#include <cctype>

#include <fmt/format.h>

#include "mmhs/error.hpp"

namespace mmhs {

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

HashingTokenizer::HashingTokenizer(SpecialTokens specials, int vocab_size, int first_id)
    : specials_(specials), vocab_size_(vocab_size), first_id_(first_id) {
  if (vocab_size <= 0 || first_id < 0) throw Error(Errc::kConfigError, "invalid hashing tokenizer vocabulary");
}

std::string HashingTokenizer::identity() const {
  return fmt::format("hash-tok/{}/v={}/first={}",
                     specials_.layout == SpecialLayout::kClsFirst ? "cls-first" : "cls-last", vocab_size_,
                     first_id_);
}

std::vector<std::string> HashingTokenizer::pre_tokenize(std::string_view text) {
  std::vector<std::string> pieces;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) pieces.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      pieces.emplace_back(1, ch);
    } else {
      current += ch;
    }
  }
  flush();
  return pieces;
}

std::vector<int> HashingTokenizer::encode_pieces(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& piece : pre_tokenize(text)) {
    ids.push_back(first_id_ + static_cast<int>(fnv1a64(piece) % static_cast<std::uint64_t>(vocab_size_)));
  }
  return ids;
}

}  // namespace mmhs
