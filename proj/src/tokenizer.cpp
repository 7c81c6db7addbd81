#include "thinkstop/tokenizer.hpp"

#include "thinkstop/error.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

namespace thinkstop {

class Vocabulary {
 public:
  std::unordered_set<std::string> entries;
  std::size_t max_len = 0;
};

namespace {

bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}
bool is_ascii_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }

// Byte length of the UTF-8 sequence starting at `pos`; malformed input yields 1.
std::size_t code_point_len(std::string_view s, std::size_t pos) {
  const auto c = static_cast<unsigned char>(s[pos]);
  std::size_t len = 1;
  if (c < 0x80) return 1;
  if ((c & 0xE0) == 0xC0) len = 2;
  else if ((c & 0xF0) == 0xE0) len = 3;
  else if ((c & 0xF8) == 0xF0) len = 4;
  else return 1;
  if (pos + len > s.size()) return 1;
  for (std::size_t i = 1; i < len; ++i) {
    if ((static_cast<unsigned char>(s[pos + i]) & 0xC0) != 0x80) return 1;
  }
  return len;
}

bool valid_utf8(std::string_view s) {
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    const std::size_t len = code_point_len(s, i);
    if (c >= 0x80 && len == 1) return false;
    i += len;
  }
  return true;
}

std::vector<TokenSpan> segment_ws_punct(std::string_view text) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_ascii_space(c)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (is_ascii_alpha(c)) {
      while (j < text.size() && is_ascii_alpha(static_cast<unsigned char>(text[j]))) ++j;
    } else if (is_ascii_digit(c)) {
      while (j < text.size() && is_ascii_digit(static_cast<unsigned char>(text[j]))) ++j;
    } else if (c >= 0x80) {
      j = i + code_point_len(text, i);
    }
    out.push_back({i, j});
    i = j;
  }
  return out;
}

std::vector<TokenSpan> segment_vocab(const Vocabulary& vocab, std::string_view text) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  std::string probe;
  while (i < text.size()) {
    std::size_t matched = 0;
    for (std::size_t len = std::min(vocab.max_len, text.size() - i); len > 0; --len) {
      probe.assign(text.substr(i, len));
      if (vocab.entries.contains(probe)) {
        matched = len;
        break;
      }
    }
    if (matched > 0) {
      out.push_back({i, i + matched});
      i += matched;
      continue;
    }
    const std::size_t cp = code_point_len(text, i);
    if (!(cp == 1 && is_ascii_space(static_cast<unsigned char>(text[i])))) out.push_back({i, i + cp});
    i += cp;
  }
  return out;
}

std::shared_ptr<const Vocabulary> load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("vocabulary file not found or unreadable: " + path.string());
  auto vocab = std::make_shared<Vocabulary>();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!valid_utf8(line)) {
      throw ConfigError("vocabulary file " + path.string() + " line " + std::to_string(line_no) +
                        ": invalid UTF-8");
    }
    vocab->max_len = std::max(vocab->max_len, line.size());
    vocab->entries.insert(std::move(line));
  }
  if (vocab->entries.empty()) throw ConfigError("vocabulary file has no entries: " + path.string());
  return vocab;
}

}  // namespace

TokenizerSpec TokenizerSpec::whitespace_punct() { return TokenizerSpec{}; }

TokenizerSpec TokenizerSpec::vocab_file(std::filesystem::path path, std::string id) {
  TokenizerSpec spec;
  spec.kind = TokenizerKind::VocabFile;
  spec.id = id.empty() ? "vocab:" + path.filename().string() : std::move(id);
  spec.vocab_path = std::move(path);
  return spec;
}

Tokenizer::Tokenizer() = default;

Tokenizer::Tokenizer(TokenizerSpec spec, std::shared_ptr<const Vocabulary> vocab)
    : spec_(std::move(spec)), vocab_(std::move(vocab)) {}

Tokenizer Tokenizer::load(const TokenizerSpec& spec) {
  if (spec.kind == TokenizerKind::WhitespacePunct) return Tokenizer(spec, nullptr);
  if (!spec.vocab_path) throw ConfigError("tokenizer '" + spec.id + "' is VocabFile but has no vocab_path");
  return Tokenizer(spec, load_vocabulary(*spec.vocab_path));
}

std::vector<TokenSpan> Tokenizer::segment(std::string_view text) const {
  if (vocab_) return segment_vocab(*vocab_, text);
  return segment_ws_punct(text);
}

std::size_t Tokenizer::count(std::string_view text) const { return segment(text).size(); }

std::string_view Tokenizer::truncate(std::string_view text, std::size_t max_tokens) const {
  if (max_tokens == 0) return text.substr(0, 0);
  const auto spans = segment(text);
  if (spans.size() <= max_tokens) return text;
  return text.substr(0, spans[max_tokens - 1].end);
}

std::size_t count_tokens(const TokenizerSpec& spec, std::string_view text) {
  return Tokenizer::load(spec).count(text);
}

}  // namespace thinkstop
