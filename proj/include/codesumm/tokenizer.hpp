#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace codesumm {

// Corpus length filters: methods over 100 tokens and comments outside
// [3, 13] tokens are dropped. Counts apply to post-split tokens.
inline constexpr std::size_t kMaxMethodTokens = 100;
inline constexpr std::size_t kMinCommentTokens = 3;
inline constexpr std::size_t kMaxCommentTokens = 13;

/// Tokenizes one method body: non-alphanumeric bytes separate tokens,
/// identifiers split at camel-case and letter/digit boundaries, output
/// lowercased. An input with no tokens raises EmptySequenceError.
std::vector<std::string> tokenize_code(const std::string& method_source);

/// Tokenizes a doc comment: content up to the first line break or
/// sentence-ending period, lowercased, special characters stripped,
/// whitespace split. An input with no tokens raises EmptySequenceError.
std::vector<std::string> tokenize_comment(const std::string& comment_source);

/// True iff the pair survives the corpus length filters.
bool filter_pair(const std::vector<std::string>& method_tokens,
                 const std::vector<std::string>& comment_tokens);

}  // namespace codesumm
