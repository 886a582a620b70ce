#include "stackvs/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "stackvs/errors.hpp"

namespace stackvs {

namespace {

constexpr std::size_t kCiderOrder = 4;

bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c); }
bool is_ascii_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

using TfIdf = std::map<Ngram, double>;

// Per-order TF-IDF vectors of one sentence.
std::vector<TfIdf> tfidf_vectors(const TokenSeq& tokens, const IdfTable& idf) {
  std::vector<TfIdf> out(kCiderOrder);
  for (const auto& [g, count] : ngram_counts(tokens, kCiderOrder)) {
    out[g.size() - 1][g] = static_cast<double>(count) * idf.idf(g);
  }
  return out;
}

double norm(const TfIdf& v) {
  double s = 0.0;
  for (const auto& [g, x] : v) s += x * x;
  return std::sqrt(s);
}

double cosine(const TfIdf& a, const TfIdf& b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  for (const auto& [g, x] : a) {
    auto it = b.find(g);
    if (it != b.end()) dot += x * it->second;
  }
  return dot / (na * nb);
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_ascii_space(c) || is_ascii_punct(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::map<Ngram, std::size_t> ngram_counts(const TokenSeq& tokens, std::size_t max_n) {
  std::map<Ngram, std::size_t> counts;
  for (std::size_t n = 1; n <= max_n; ++n) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                     tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
  }
  return counts;
}

std::vector<double> bleu(const std::vector<TokenSeq>& candidates, const std::vector<std::vector<TokenSeq>>& references,
                         std::size_t max_n) {
  if (candidates.empty()) throw DataError("bleu: no candidates");
  if (candidates.size() != references.size()) throw DataError("bleu: candidate and reference counts differ");
  if (max_n == 0) throw ConfigError("bleu: max_n must be positive");

  std::vector<double> matched(max_n, 0.0), total(max_n, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw DataError("bleu: candidate " + std::to_string(i) + " has no references");

    std::map<Ngram, std::size_t> max_ref;
    for (const auto& r : refs) {
      for (const auto& [g, c] : ngram_counts(r, max_n)) max_ref[g] = std::max(max_ref[g], c);
    }
    for (const auto& [g, c] : ngram_counts(cand, max_n)) {
      auto it = max_ref.find(g);
      matched[g.size() - 1] += static_cast<double>(std::min(c, it == max_ref.end() ? 0 : it->second));
    }
    for (std::size_t n = 1; n <= max_n; ++n) {
      if (cand.size() >= n) total[n - 1] += static_cast<double>(cand.size() - n + 1);
    }

    // Closest reference length, the shorter one on ties.
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t len) { return len > cand.size() ? len - cand.size() : cand.size() - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    cand_len += static_cast<double>(cand.size());
    ref_len += static_cast<double>(best);
  }

  std::vector<double> scores(max_n, 0.0);
  if (cand_len == 0.0) return scores;
  const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (matched[n - 1] == 0.0) break;
    log_sum += std::log(matched[n - 1] / total[n - 1]);
    scores[n - 1] = bp * std::exp(log_sum / static_cast<double>(n));
  }
  return scores;
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const TokenSeq& candidate, const std::vector<TokenSeq>& references, double beta) {
  if (references.empty()) throw DataError("rouge_l: no references");
  if (candidate.empty()) return 0.0;
  const double b2 = beta * beta;
  double best = 0.0;
  for (const auto& ref : references) {
    const auto lcs = static_cast<double>(lcs_length(candidate, ref));
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(ref.size());
    best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
  }
  return best;
}

double IdfTable::idf(const Ngram& g) const {
  auto it = df.find(g);
  if (it == df.end()) return 0.0;
  return std::log(static_cast<double>(n_images) / static_cast<double>(it->second));
}

IdfTable build_idf(const std::vector<std::vector<TokenSeq>>& references_by_image) {
  IdfTable t;
  t.n_images = references_by_image.size();
  for (const auto& refs : references_by_image) {
    std::set<Ngram> seen;
    for (const auto& r : refs) {
      for (const auto& [g, c] : ngram_counts(r, kCiderOrder)) seen.insert(g);
    }
    for (const auto& g : seen) ++t.df[g];
  }
  return t;
}

double cider_single(const TokenSeq& candidate, const std::vector<TokenSeq>& references, const IdfTable& idf) {
  if (references.empty()) throw DataError("cider: no references");
  const auto cv = tfidf_vectors(candidate, idf);
  double total = 0.0;
  for (const auto& ref : references) {
    const auto rv = tfidf_vectors(ref, idf);
    for (std::size_t n = 0; n < kCiderOrder; ++n) total += cosine(cv[n], rv[n]);
  }
  return 10.0 * total / static_cast<double>(kCiderOrder * references.size());
}

CiderScores cider(const std::vector<TokenSeq>& candidates, const std::vector<std::vector<TokenSeq>>& references,
                  const IdfTable& idf) {
  if (candidates.empty()) throw DataError("cider: no candidates");
  if (candidates.size() != references.size()) throw DataError("cider: candidate and reference counts differ");
  CiderScores out;
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.per_candidate.push_back(cider_single(candidates[i], references[i], idf));
    sum += out.per_candidate.back();
  }
  out.mean = sum / static_cast<double>(candidates.size());
  return out;
}

}  // namespace stackvs
