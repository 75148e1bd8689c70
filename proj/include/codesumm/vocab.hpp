#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace codesumm {

/// Bidirectional token <-> id map. Ids 0..3 are reserved for
/// <pad>, <s>, </s>, <unk>; the tokenizer can never produce those
/// strings, so the reserved rows stay reserved.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kBosId = 1;
  static constexpr int kEosId = 2;
  static constexpr int kUnkId = 3;
  static const std::array<std::string, 4>& reserved_tokens();

  Vocabulary();  // reserved entries only

  /// Keeps tokens with frequency >= min_count, most frequent first
  /// (ties broken lexicographically), truncated to max_size learned
  /// entries; ids follow the four reserved slots.
  static Vocabulary build(const std::vector<std::vector<std::string>>& seqs,
                          std::size_t min_count, std::size_t max_size);

  /// One token per line; the line number is the id. The first four
  /// lines must be exactly the reserved tokens.
  static Vocabulary load_file(const std::string& path);
  void save_file(const std::string& path) const;

  std::size_t size() const { return id_to_token_.size(); }
  /// Id of a token, <unk> when absent.
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;

  /// Unknown tokens map to <unk>.
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  /// Drops reserved ids.
  std::vector<std::string> decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  void append(const std::string& token);
};

}  // namespace codesumm
