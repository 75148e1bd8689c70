#include "codesumm/tokenizer.hpp"

#include "codesumm/errors.hpp"

namespace codesumm {

namespace {

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alnum(char c) { return is_upper(c) || is_lower(c) || is_digit(c); }
char to_lower(char c) { return is_upper(c) ? (char)(c - 'A' + 'a') : c; }

// Splits one identifier at camel-case and letter/digit boundaries.
// A run of capitals breaks before its last capital when a lowercase
// letter follows ("HTTPServer" -> http, server).
void split_identifier(const std::string& word, std::vector<std::string>& out) {
  std::size_t start = 0;
  for (std::size_t i = 1; i < word.size(); ++i) {
    const char prev = word[i - 1];
    const char cur = word[i];
    bool boundary = false;
    if (is_lower(prev) && is_upper(cur)) {
      boundary = true;
    } else if (is_upper(prev) && is_upper(cur) && i + 1 < word.size() &&
               is_lower(word[i + 1])) {
      boundary = true;
    } else if (is_digit(prev) != is_digit(cur)) {
      boundary = true;
    }
    if (boundary) {
      std::string piece = word.substr(start, i - start);
      for (char& c : piece) c = to_lower(c);
      out.push_back(std::move(piece));
      start = i;
    }
  }
  std::string piece = word.substr(start);
  for (char& c : piece) c = to_lower(c);
  out.push_back(std::move(piece));
}

}  // namespace

std::vector<std::string> tokenize_code(const std::string& method_source) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < method_source.size()) {
    if (!is_alnum(method_source[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < method_source.size() && is_alnum(method_source[j])) ++j;
    split_identifier(method_source.substr(i, j - i), tokens);
    i = j;
  }
  if (tokens.empty()) {
    throw EmptySequenceError("tokenize_code: input has no tokens");
  }
  return tokens;
}

std::vector<std::string> tokenize_comment(const std::string& comment_source) {
  std::size_t end = comment_source.size();
  for (std::size_t i = 0; i < comment_source.size(); ++i) {
    const char c = comment_source[i];
    if (c == '\n' || c == '\r' || c == '.') {
      end = i;
      break;
    }
  }
  std::vector<std::string> tokens;
  std::string current;
  for (std::size_t i = 0; i < end; ++i) {
    const char c = comment_source[i];
    if (is_alnum(c)) {
      current.push_back(to_lower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  if (tokens.empty()) {
    throw EmptySequenceError("tokenize_comment: input has no tokens");
  }
  return tokens;
}

bool filter_pair(const std::vector<std::string>& method_tokens,
                 const std::vector<std::string>& comment_tokens) {
  return method_tokens.size() <= kMaxMethodTokens &&
         comment_tokens.size() >= kMinCommentTokens &&
         comment_tokens.size() <= kMaxCommentTokens;
}

}  // namespace codesumm
