#include "codesumm/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "codesumm/errors.hpp"

namespace codesumm {

const std::array<std::string, 4>& Vocabulary::reserved_tokens() {
  static const std::array<std::string, 4> reserved = {"<pad>", "<s>", "</s>",
                                                      "<unk>"};
  return reserved;
}

Vocabulary::Vocabulary() {
  for (const std::string& t : reserved_tokens()) append(t);
}

void Vocabulary::append(const std::string& token) {
  if (token_to_id_.count(token)) {
    throw FormatError("vocabulary: duplicate token '" + token + "'");
  }
  token_to_id_.emplace(token, (int)id_to_token_.size());
  id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(
    const std::vector<std::vector<std::string>>& seqs, std::size_t min_count,
    std::size_t max_size) {
  if (seqs.empty()) {
    throw std::invalid_argument("vocabulary: no sequences to build from");
  }
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& seq : seqs) {
    for (const auto& tok : seq) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, count] : counts) {
    if (count >= min_count) ranked.emplace_back(tok, count);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_size) ranked.resize(max_size);

  Vocabulary vocab;
  for (const auto& [tok, count] : ranked) vocab.append(tok);
  return vocab;
}

Vocabulary Vocabulary::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("vocabulary: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < 4) {
    throw FormatError("vocabulary: " + path + " has fewer than 4 entries");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (lines[i] != reserved_tokens()[i]) {
      throw FormatError("vocabulary: " + path + " line " + std::to_string(i) +
                        " must be " + reserved_tokens()[i]);
    }
  }
  Vocabulary vocab;
  for (std::size_t i = 4; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      throw FormatError("vocabulary: empty token at line " +
                        std::to_string(i));
    }
    vocab.append(lines[i]);
  }
  return vocab;
}

void Vocabulary::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("vocabulary: cannot write " + path);
  for (const std::string& tok : id_to_token_) out << tok << '\n';
}

int Vocabulary::id_of(const std::string& token) const {
  const auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || (std::size_t)id >= id_to_token_.size()) {
    throw std::invalid_argument("vocabulary: id " + std::to_string(id) +
                                " out of range");
  }
  return id_to_token_[(std::size_t)id];
}

std::vector<int> Vocabulary::encode(
    const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(id_of(tok));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) {
    if (id > kUnkId) tokens.push_back(token_of(id));
  }
  return tokens;
}

}  // namespace codesumm
