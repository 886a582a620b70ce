#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "stackvs/errors.hpp"
#include "stackvs/metrics.hpp"
#include "stackvs/rng.hpp"

using namespace stackvs;

namespace {

TokenSeq toks(const char* s) { return tokenize(s); }

// Longest common subsequence by trying every subsequence of `a` (exponential, tiny inputs only).
std::size_t brute_lcs(const TokenSeq& a, const TokenSeq& b) {
  std::size_t best = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << a.size()); ++mask) {
    std::size_t j = 0, len = 0;
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size())
        ok = false;
      else
        ++j, ++len;
    }
    if (ok) best = std::max(best, len);
  }
  return best;
}

TokenSeq random_seq(Rng& rng, std::size_t max_len, std::size_t alphabet) {
  TokenSeq s;
  const std::size_t n = 1 + rng.below(max_len);
  for (std::size_t i = 0; i < n; ++i) s.push_back(std::string(1, static_cast<char>('a' + rng.below(alphabet))));
  return s;
}

}  // namespace

TEST_CASE("tokenize examples") {
  CHECK(tokenize("A man, riding.") == TokenSeq{"a", "man", "riding"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("  Hello\tWORLD!!  ") == TokenSeq{"hello", "world"});
  const TokenSeq once = tokenize("It's a dog-eat-dog world");
  std::string joined;
  for (const auto& t : once) joined += (joined.empty() ? "" : " ") + t;
  CHECK(tokenize(joined) == once);
}

TEST_CASE("bleu examples") {
  const auto same = bleu({toks("a cat on the mat")}, {{toks("a cat on the mat")}});
  for (double b : same) CHECK(b == doctest::Approx(1.0).epsilon(1e-12));

  const auto clipped = bleu({toks("the the the the")}, {{toks("the cat is on the mat")}});
  CHECK(std::abs(clipped[0] - 0.5 * std::exp(-0.5)) < 1e-9);

  const auto disjoint = bleu({toks("x y z")}, {{toks("a b c")}});
  for (double b : disjoint) CHECK(b == 0.0);

  CHECK_THROWS(bleu({}, {}));
}

TEST_CASE("bleu takes the closest reference length, shorter on ties") {
  // Candidate of length 4, references of length 3 and 5: tie, so r = 3 and no penalty.
  const auto b = bleu({toks("a b c d")}, {{toks("a b c"), toks("a b c d e")}}, 1);
  CHECK(b[0] == doctest::Approx(1.0));
  // Single longer reference: BP = exp(1 - 6/4).
  const auto p = bleu({toks("a b c d")}, {{toks("a b c d e f")}}, 1);
  CHECK(std::abs(p[0] - std::exp(1.0 - 6.0 / 4.0)) < 1e-12);
}

TEST_CASE("bleu is corpus-level and permutation stable") {
  std::vector<TokenSeq> cands = {toks("a b c d"), toks("x y a b"), toks("c d e f g")};
  std::vector<std::vector<TokenSeq>> refs = {{toks("a b c e")}, {toks("x y z a b")}, {toks("c d e f")}};
  const auto base = bleu(cands, refs);
  std::swap(cands[0], cands[2]);
  std::swap(refs[0], refs[2]);
  CHECK(bleu(cands, refs) == base);
  for (double b : base) {
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);
  }
}

TEST_CASE("rouge_l examples") {
  CHECK(rouge_l(toks("a b c"), {toks("a b c")}) == doctest::Approx(1.0));
  CHECK(rouge_l(toks("a b c"), {toks("x y")}) == 0.0);
  CHECK(std::abs(rouge_l(toks("a b c d"), {toks("a c b d")}) - 0.75) < 1e-9);
  CHECK(rouge_l({}, {toks("a b")}) == 0.0);
  // Best reference wins.
  CHECK(rouge_l(toks("a b"), {toks("x y"), toks("a b")}) == doctest::Approx(1.0));
}

TEST_CASE("lcs matches brute force and rouge_l ignores replaced non-matching tokens") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const TokenSeq a = random_seq(rng, 8, 4), b = random_seq(rng, 8, 4);
    REQUIRE(lcs_length(a, b) == brute_lcs(a, b));
  }
  // Tokens outside the LCS replaced by other tokens absent from the reference.
  const TokenSeq ref = toks("a b c d e");
  CHECK(rouge_l(toks("a q c r e"), {ref}) == rouge_l(toks("a z c w e"), {ref}));
}

TEST_CASE("idf examples and brute-force document frequencies") {
  const IdfTable two = build_idf({{toks("a b")}, {toks("c d")}});
  CHECK(two.idf({"a"}) == doctest::Approx(std::log(2.0)));
  CHECK(two.idf({"c", "d"}) == doctest::Approx(std::log(2.0)));
  CHECK(two.idf({"zzz"}) == 0.0);

  const std::vector<std::vector<TokenSeq>> corpus = {
      {toks("a b a"), toks("b c")}, {toks("a c")}, {toks("d e f"), toks("a b")}, {toks("b b b")}, {toks("c a b")}};
  const IdfTable idf = build_idf(corpus);
  CHECK(idf.n_images == 5);
  std::set<Ngram> all;
  for (const auto& refs : corpus)
    for (const auto& r : refs)
      for (std::size_t n = 1; n <= 4; ++n)
        for (std::size_t i = 0; i + n <= r.size(); ++i) all.insert(Ngram(r.begin() + i, r.begin() + i + n));
  for (const auto& g : all) {
    std::size_t df = 0;
    for (const auto& refs : corpus) {
      bool found = false;
      for (const auto& r : refs)
        for (std::size_t i = 0; i + g.size() <= r.size(); ++i) found |= std::equal(g.begin(), g.end(), r.begin() + i);
      df += found;
    }
    INFO(g.front() << " n=" << g.size());
    CHECK(idf.df.at(g) == df);
    CHECK(idf.idf(g) == doctest::Approx(std::log(5.0 / df)));
  }
  CHECK(idf.df.size() == all.size());
}

TEST_CASE("cider examples") {
  const std::vector<std::vector<TokenSeq>> refs = {{toks("a cat sits on a mat")}, {toks("dogs run in the park")}};
  const IdfTable idf = build_idf(refs);
  CHECK(std::abs(cider_single(toks("dogs run in the park"), refs[1], idf) - 10.0) < 1e-9);
  CHECK(cider_single(toks("zebra"), refs[1], idf) == 0.0);

  const std::vector<std::vector<TokenSeq>> single = {{toks("a cat sits")}};
  CHECK(cider_single(toks("a cat sits"), single[0], build_idf(single)) == 0.0);

  // An n-gram present for every image contributes nothing.
  const std::vector<std::vector<TokenSeq>> shared = {{toks("the x")}, {toks("the y")}};
  const IdfTable sidf = build_idf(shared);
  CHECK(sidf.idf({"the"}) == 0.0);
  CHECK(cider_single(toks("the"), shared[0], sidf) == 0.0);
}

TEST_CASE("cider: self-match maximizes, scores stay in range, corpus mean is permutation stable") {
  Rng rng(9);
  std::vector<std::vector<TokenSeq>> refs;
  for (int i = 0; i < 6; ++i) refs.push_back({random_seq(rng, 6, 8), random_seq(rng, 6, 8)});
  const IdfTable idf = build_idf(refs);
  std::vector<TokenSeq> cands;
  for (int i = 0; i < 6; ++i) cands.push_back(random_seq(rng, 6, 8));
  const CiderScores s = cider(cands, refs, idf);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    CHECK(s.per_candidate[i] >= 0.0);
    CHECK(s.per_candidate[i] <= 10.0 + 1e-12);
    CHECK(s.per_candidate[i] == cider_single(cands[i], refs[i], idf));
  }
  auto rc = cands;
  auto rr = refs;
  std::reverse(rc.begin(), rc.end());
  std::reverse(rr.begin(), rr.end());
  CHECK(cider(rc, rr, idf).mean == doctest::Approx(s.mean).epsilon(1e-15));

  // Against a single reference, the reference itself is the best candidate.
  const std::vector<TokenSeq> one_ref = {toks("a b c d")};
  const std::vector<std::vector<TokenSeq>> corpus = {one_ref, {toks("e f")}, {toks("a e")}};
  const IdfTable cidf = build_idf(corpus);
  const double self = cider_single(toks("a b c d"), one_ref, cidf);
  for (int i = 0; i < 50; ++i) CHECK(cider_single(random_seq(rng, 5, 6), one_ref, cidf) <= self + 1e-12);
  CHECK(rouge_l(toks("a b c d"), one_ref) == 1.0);
}

TEST_CASE("metrics are bitwise deterministic") {
  const std::vector<TokenSeq> cands = {toks("a b c"), toks("d e")};
  const std::vector<std::vector<TokenSeq>> refs = {{toks("a b d")}, {toks("d e f"), toks("e f")}};
  const IdfTable idf = build_idf(refs);
  CHECK(bleu(cands, refs) == bleu(cands, refs));
  CHECK(cider(cands, refs, idf).per_candidate == cider(cands, refs, idf).per_candidate);
  CHECK(rouge_l(cands[1], refs[1]) == rouge_l(cands[1], refs[1]));
}
