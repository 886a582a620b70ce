#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace stackvs {

using TokenSeq = std::vector<std::string>;
using Ngram = std::vector<std::string>;

/// Lowercases ASCII, turns ASCII punctuation into spaces and splits on whitespace.
TokenSeq tokenize(std::string_view text);

/// Counts of every n-gram with 1 <= n <= max_n.
std::map<Ngram, std::size_t> ngram_counts(const TokenSeq& tokens, std::size_t max_n);

/// Corpus BLEU-1..max_n: clipped n-gram precisions pooled over all candidates,
/// geometric mean, brevity penalty from the closest reference lengths.
/// No smoothing; a zero precision gives a zero score from that order on.
std::vector<double> bleu(const std::vector<TokenSeq>& candidates, const std::vector<std::vector<TokenSeq>>& references,
                         std::size_t max_n = 4);

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);

/// Best LCS F-measure over the references.
double rouge_l(const TokenSeq& candidate, const std::vector<TokenSeq>& references, double beta = 1.2);

/// Document frequencies of 1..4-grams, one document per image.
struct IdfTable {
  std::size_t n_images = 0;
  std::map<Ngram, std::size_t> df;

  /// ln(N / df); n-grams outside the corpus are treated as df = N.
  double idf(const Ngram& g) const;
};

IdfTable build_idf(const std::vector<std::vector<TokenSeq>>& references_by_image);

struct CiderScores {
  std::vector<double> per_candidate;
  double mean = 0.0;
};

/// TF-IDF cosine similarity averaged over references and n = 1..4, times 10.
double cider_single(const TokenSeq& candidate, const std::vector<TokenSeq>& references, const IdfTable& idf);
CiderScores cider(const std::vector<TokenSeq>& candidates, const std::vector<std::vector<TokenSeq>>& references,
                  const IdfTable& idf);

}  // namespace stackvs
