#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace thinkstop {

/// Token counting used for compression rates and length verification.
///
/// WhitespacePunct segmentation (id "ws-punct-v1"):
///   1. ASCII whitespace (space, \t, \n, \v, \f, \r) separates tokens and is never counted.
///   2. A maximal run of ASCII letters [A-Za-z] is one token.
///   3. A maximal run of ASCII digits [0-9] is one token.
///   4. Every other ASCII character (punctuation, symbols, control) is one token by itself.
///   5. Every non-ASCII code point is one token by itself. Malformed UTF-8 bytes count
///      one token each.
///
/// Hence "Final Answer" is 2 tokens (two letter runs) and "\boxed{1351884285}" is 5
/// (backslash, "boxed", "{", digit run, "}"). Concatenation can only merge adjacent runs,
/// so count(a + b) <= count(a) + count(b).
///
/// VocabFile segmentation: the file holds one token per line (UTF-8, lines starting
/// with '#' are comments, blank lines are ignored, a trailing '\r' is dropped). At each
/// position the longest vocabulary entry matching the text is consumed as one token. If
/// no entry matches, one code point is consumed; it counts as a token unless it is ASCII
/// whitespace.
enum class TokenizerKind { WhitespacePunct, VocabFile };

inline constexpr std::string_view kDefaultTokenizerId = "ws-punct-v1";

struct TokenizerSpec {
  std::string id{kDefaultTokenizerId};
  TokenizerKind kind = TokenizerKind::WhitespacePunct;
  std::optional<std::filesystem::path> vocab_path;

  static TokenizerSpec whitespace_punct();
  /// Id defaults to "vocab:<filename>".
  static TokenizerSpec vocab_file(std::filesystem::path path, std::string id = {});

  bool operator==(const TokenizerSpec&) const = default;
};

/// Half-open byte range of one token inside the counted text.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const TokenSpan&) const = default;
};

class Vocabulary;

/// A loaded, immutable tokenizer. Cheap to copy; copies share the vocabulary.
class Tokenizer {
 public:
  Tokenizer();

  /// Throws ConfigError naming the path when a vocabulary cannot be loaded.
  static Tokenizer load(const TokenizerSpec& spec);

  const std::string& id() const noexcept { return spec_.id; }
  const TokenizerSpec& spec() const noexcept { return spec_; }

  std::size_t count(std::string_view text) const;
  std::vector<TokenSpan> segment(std::string_view text) const;

  /// Longest prefix of `text` holding at most `max_tokens` tokens, cut at a token end.
  std::string_view truncate(std::string_view text, std::size_t max_tokens) const;

 private:
  explicit Tokenizer(TokenizerSpec spec, std::shared_ptr<const Vocabulary> vocab);

  TokenizerSpec spec_;
  std::shared_ptr<const Vocabulary> vocab_;
};

std::size_t count_tokens(const TokenizerSpec& spec, std::string_view text);

}  // namespace thinkstop
