#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "stackvs/metrics.hpp"

namespace stackvs {

/// Token <-> id map. Ids 0..3 are <pad>, <bos>, <eos>, <unk>; content tokens
/// follow by descending corpus count, ties in lexicographic order.
class Vocabulary {
 public:
  Vocabulary();

  /// Tokens seen fewer than `min_count` times are left out and encode to <unk>.
  static Vocabulary build(const std::vector<std::string>& captions, std::size_t min_count = 5);
  /// Rebuilds from an id-ordered token list (as stored in checkpoints).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const;
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Content ids of `caption` followed by <eos>, cut to at most `max_len` ids
  /// (the <eos> is always kept).
  std::vector<std::size_t> encode(const std::string& caption, std::size_t max_len) const;
  /// Joins content tokens with single spaces, stopping at <eos> and skipping other specials.
  std::string decode(const std::vector<std::size_t>& ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> ids_;
};

}  // namespace stackvs
