#include "stackvs/selfcheck.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <utility>

#include "stackvs/decoder_cell.hpp"
#include "stackvs/grad_check.hpp"
#include "stackvs/metrics.hpp"

namespace stackvs {

namespace {

using Build = std::function<Vard(Taped&, std::span<const Vard>)>;
using Case = std::pair<Build, std::vector<Tensord>>;

Tensord draw(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensord t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Magnitudes in [0.3, 0.9] with random signs.
Tensord draw_away_from_zero(Shape shape, Rng& rng) {
  Tensord t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.3, 0.9);
  return t;
}

constexpr double kResolvableGradient = 1e-6;
constexpr int kMaxRedraws = 50;

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Contracts an op's output with fixed random weights so every output
// coordinate carries its own gradient. The weights come from `seed` so that
// perturbed re-evaluations see the same ones.
Build contracted(std::uint64_t seed, std::function<Vard(std::span<const Vard>)> op) {
  return [seed, op](Taped& tape, std::span<const Vard> a) {
    Rng wr(seed);
    Vard out = op(a);
    return sum(mul(out, tape.leaf(draw(out.shape(), wr))));
  };
}

std::string describe(const GradCheckResult& r, const std::string& where) {
  std::ostringstream os;
  os.precision(6);
  os << "max relative error " << r.max_rel_error << " at " << where << "[" << r.coordinate << "]"
     << " (analytic " << r.analytic << ", numeric " << r.numeric << ")";
  return os.str();
}

std::vector<std::pair<std::string, std::function<Case(Rng&)>>> op_cases() {
  using V = std::span<const Vard>;
  return {
      {"matmul",
       [](Rng& rng) {
         auto m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);
         return Case{contracted(rng.next(), [](V a) { return matmul(a[0], a[1]); }),
                     {draw({m, k}, rng), draw({k, n}, rng)}};
       }},
      {"matmul (matrix-vector)",
       [](Rng& rng) {
         auto m = dim(rng, 1, 4), k = dim(rng, 1, 4);
         return Case{contracted(rng.next(), [](V a) { return matmul(a[0], a[1]); }),
                     {draw({m, k}, rng), draw({k}, rng)}};
       }},
      {"matmul (vector-matrix)",
       [](Rng& rng) {
         auto k = dim(rng, 1, 4), n = dim(rng, 1, 4);
         return Case{contracted(rng.next(), [](V a) { return matmul(a[0], a[1]); }),
                     {draw({k}, rng), draw({k, n}, rng)}};
       }},
      {"add",
       [](Rng& rng) {
         Shape s{dim(rng, 1, 4), dim(rng, 1, 4)};
         return Case{contracted(rng.next(), [](V a) { return add(a[0], a[1]); }), {draw(s, rng), draw(s, rng)}};
       }},
      {"add (row broadcast)",
       [](Rng& rng) {
         auto m = dim(rng, 1, 4), n = dim(rng, 1, 4);
         return Case{contracted(rng.next(), [](V a) { return add(a[0], a[1]); }), {draw({m, n}, rng), draw({n}, rng)}};
       }},
      {"mul",
       [](Rng& rng) {
         Shape s{dim(rng, 1, 6)};
         return Case{contracted(rng.next(), [](V a) { return mul(a[0], a[1]); }), {draw(s, rng), draw(s, rng)}};
       }},
      {"tanh",
       [](Rng& rng) {
         return Case{contracted(rng.next(), [](V a) { return tanh(a[0]); }), {draw({dim(rng, 1, 6)}, rng, -2, 2)}};
       }},
      {"sigmoid",
       [](Rng& rng) {
         return Case{contracted(rng.next(), [](V a) { return sigmoid(a[0]); }), {draw({dim(rng, 1, 6)}, rng, -3, 3)}};
       }},
      {"softmax",
       [](Rng& rng) {
         return Case{contracted(rng.next(), [](V a) { return softmax(a[0]); }), {draw({dim(rng, 1, 6)}, rng, -2, 2)}};
       }},
      {"softmax (rows)",
       [](Rng& rng) {
         return Case{contracted(rng.next(), [](V a) { return softmax(a[0]); }),
                     {draw({dim(rng, 1, 3), dim(rng, 1, 5)}, rng, -2, 2)}};
       }},
      {"concat",
       [](Rng& rng) {
         return Case{contracted(rng.next(), [](V a) { return concat(a[0], a[1]); }),
                     {draw({dim(rng, 1, 4)}, rng), draw({dim(rng, 1, 4)}, rng)}};
       }},
      {"concat (rows)",
       [](Rng& rng) {
         auto m = dim(rng, 1, 3);
         return Case{contracted(rng.next(), [](V a) { return concat(a[0], a[1]); }),
                     {draw({m, dim(rng, 1, 3)}, rng), draw({m, dim(rng, 1, 3)}, rng)}};
       }},
      {"row_select",
       [](Rng& rng) {
         auto v = dim(rng, 2, 5);
         std::vector<std::size_t> idx{rng.below(v), rng.below(v), rng.below(v)};
         return Case{contracted(rng.next(), [idx](V a) { return row_select(a[0], idx); }),
                     {draw({v, dim(rng, 1, 4)}, rng)}};
       }},
      {"scale",
       [](Rng& rng) {
         const double c = rng.uniform(-3, 3);
         return Case{contracted(rng.next(), [c](V a) { return scale(a[0], c); }), {draw({dim(rng, 1, 6)}, rng)}};
       }},
      {"sum",
       [](Rng& rng) {
         return Case{contracted(rng.next(), [](V a) { return sum(a[0]); }),
                     {draw({dim(rng, 1, 3), dim(rng, 1, 3)}, rng)}};
       }},
      {"log",
       [](Rng& rng) {
         return Case{contracted(rng.next(), [](V a) { return log(a[0]); }), {draw({dim(rng, 1, 6)}, rng, 0.2, 3.0)}};
       }},
      {"nll_gather",
       [](Rng& rng) {
         auto n = dim(rng, 1, 6);
         auto target = rng.below(n);
         return Case{Build([target](Taped&, V a) { return nll_gather(a[0], target); }), {draw({n}, rng, 0.1, 1.0)}};
       }},
      {"slice",
       [](Rng& rng) {
         auto n = dim(rng, 2, 8);
         auto off = rng.below(n - 1);
         auto len = 1 + rng.below(n - off);
         return Case{contracted(rng.next(), [off, len](V a) { return slice(a[0], off, len); }), {draw({n}, rng)}};
       }},
      {"reshape",
       [](Rng& rng) {
         auto m = dim(rng, 1, 3), n = dim(rng, 1, 3);
         return Case{contracted(rng.next(), [m, n](V a) { return reshape(a[0], Shape{m * n}); }), {draw({m, n}, rng)}};
       }},
      {"transpose",
       [](Rng& rng) {
         return Case{contracted(rng.next(), [](V a) { return transpose(a[0]); }),
                     {draw({dim(rng, 1, 4), dim(rng, 1, 4)}, rng)}};
       }},
  };
}

CheckOutcome expect_near(const std::string& name, double got, double want, double tol = 1e-9) {
  std::ostringstream os;
  os.precision(17);
  os << "got " << got << ", expected " << want;
  return {name, std::abs(got - want) <= tol, os.str()};
}

}  // namespace

std::vector<CheckOutcome> op_gradient_suite(std::uint64_t seed, int trials) {
  Rng rng(seed);
  std::vector<CheckOutcome> out;
  for (const auto& [name, make] : op_cases()) {
    GradCheckResult worst;
    for (int t = 0; t < trials; ++t) {
      auto [build, point] = make(rng);
      auto r = grad_check<Real>(build, point, kGradCheckEps);
      if (t == 0 || r.max_rel_error > worst.max_rel_error) worst = r;
    }
    out.push_back({"gradient " + name, worst.max_rel_error < kGradCheckTolerance,
                   describe(worst, "argument " + std::to_string(worst.tensor))});
  }
  return out;
}

CheckOutcome cell_gradient_check(std::uint64_t seed, int trials) {
  Rng rng(seed);
  GradCheckResult worst;
  std::string where;
  for (int trial = 0; trial < trials; ++trial) {
    for (int attempt = 0;; ++attempt) {
      StackConfig c;
      c.n_stages = 1;
      c.d_v = dim(rng, 2, 3);
      c.d_e = 2;
      c.d_h = 2;
      c.d_a = 2;
      c.d_s = 2;
      c.d_p = dim(rng, 4, 5);
      c.n_v = dim(rng, 3, 4);
      c.n_e = dim(rng, 3, 4);
      c.t_max = 1;
      c.n_attributes = 1;

      // Attention weights wider than the init range: near tanh's linear regime
      // the shared query term barely moves the softmax, and its gradient sinks
      // below what central differences can resolve.
      DecoderCellParams p = init_cell_params(c, rng);
      visit_params(p.attn_v, "", [&](const std::string&, Tensord& t) { t = draw(t.shape(), rng); });
      visit_params(p.attn_s, "", [&](const std::string&, Tensord& t) { t = draw(t.shape(), rng); });

      const Tensord word = draw_away_from_zero({c.d_s}, rng);
      const Tensord visual = draw({c.n_v, c.d_v}, rng);
      const Tensord semantic = draw({c.n_e, c.d_e}, rng);
      std::vector<Tensord> state;  // h_v, c_v, h_s, c_s, h_l, c_l
      for (int k = 0; k < 6; ++k) state.push_back(draw_away_from_zero({c.d_h}, rng));
      const Tensord h_carry = draw_away_from_zero({c.d_h}, rng);
      const Tensord v_carry = draw_away_from_zero({c.d_v}, rng);
      const Tensord e_carry = draw_away_from_zero({c.d_e}, rng);
      const std::size_t target = rng.below(c.d_p);

      // Random read-out of every output, so the carry and state paths are checked too.
      std::vector<Tensord> readout;
      for (std::size_t n : {c.d_h, c.d_h, c.d_h, c.d_h, c.d_h, c.d_h, c.d_h, c.d_v, c.d_e, c.n_v, c.n_e}) {
        readout.push_back(draw({n}, rng));
      }

      auto flat = flatten(p);
      std::vector<Tensord> point;
      for (const auto& [name, t] : flat) point.push_back(*t);

      auto build = [&](Taped& tape, std::span<const Vard> args) {
        DecoderCellParamsT<Vard> bp;
        std::size_t i = 0;
        visit_params(bp, "", [&](const std::string&, Vard& v) { v = args[i++]; });
        DecoderCellState s{{tape.leaf(state[0]), tape.leaf(state[1])},
                           {tape.leaf(state[2]), tape.leaf(state[3])},
                           {tape.leaf(state[4]), tape.leaf(state[5])}};
        StageCarry carry{tape.leaf(h_carry), tape.leaf(v_carry), tape.leaf(e_carry)};
        auto out = cell_step(bp, s, tape.leaf(word), tape.leaf(visual), tape.leaf(semantic), carry);
        const Vard parts[] = {out.state.state_v.h,
                              out.state.state_v.c,
                              out.state.state_s.h,
                              out.state.state_s.c,
                              out.state.state_l.c,
                              out.carry.h_lang,
                              out.fc_v,
                              out.carry.v_hat,
                              out.carry.e_hat,
                              out.alpha_v,
                              out.alpha_s};
        Vard loss = nll_gather(softmax(out.logits), target);
        for (std::size_t k = 0; k < readout.size(); ++k) loss = add(loss, sum(mul(parts[k], tape.leaf(readout[k]))));
        return loss;
      };
      // Central differences at eps 1e-5 carry roughly 1e-11 of rounding noise
      // here, so a coordinate whose gradient is within a few hundred times that
      // cannot be resolved to the tolerance. Such points are redrawn; a gradient
      // that stays unresolvable (a dead path) fails the check.
      Taped tape;
      std::vector<Vard> args;
      for (const auto& t : point) args.push_back(tape.leaf(t));
      tape.backward(build(tape, args));
      double smallest = std::numeric_limits<double>::infinity();
      std::size_t smallest_at = 0;
      for (std::size_t k = 0; k < args.size(); ++k) {
        const double m = tape.grad(args[k]).values().cwiseAbs().minCoeff();
        if (m < smallest) {
          smallest = m;
          smallest_at = k;
        }
      }
      if (smallest < kResolvableGradient) {
        if (attempt + 1 < kMaxRedraws) continue;
        return {"gradient decoder cell step", false,
                "no resolvable point after " + std::to_string(kMaxRedraws) + " draws; " + flat[smallest_at].first +
                    " keeps a gradient below " + std::to_string(kResolvableGradient)};
      }

      auto r = grad_check<Real>(build, point, kGradCheckEps);
      if (trial == 0 || r.max_rel_error > worst.max_rel_error) {
        worst = r;
        where = flat[r.tensor].first;
      }
      break;
    }
  }
  return {"gradient decoder cell step", worst.max_rel_error < kGradCheckTolerance, describe(worst, where)};
}

std::vector<CheckOutcome> metric_oracle_suite() {
  std::vector<CheckOutcome> out;
  const auto tok = tokenize("A man, riding.");
  out.push_back({"tokenize strips punctuation and case", tok == TokenSeq{"a", "man", "riding"}, ""});

  const TokenSeq cat{"the", "cat", "is", "on", "the", "mat"};
  auto same = bleu({cat}, {{cat}});
  bool all_one = true;
  for (double b : same) all_one = all_one && std::abs(b - 1.0) <= 1e-12;
  out.push_back({"bleu of a candidate equal to its reference is 1", all_one, ""});
  out.push_back(expect_near("bleu-1 clipping and brevity penalty", bleu({{"the", "the", "the", "the"}}, {{cat}})[0],
                            0.5 * std::exp(-0.5)));

  out.push_back(
      expect_near("rouge-l of a transposed pair", rouge_l({"a", "b", "c", "d"}, {{"a", "c", "b", "d"}}), 0.75));
  out.push_back(expect_near("rouge-l of disjoint sequences", rouge_l({"a", "b"}, {{"c", "d"}}), 0.0));

  const TokenSeq other{"a", "dog", "runs", "in", "the", "park"};
  const TokenSeq third{"two", "birds", "sit", "on", "a", "wire"};
  const IdfTable idf = build_idf({{{"red", "car", "parked", "outside"}}, {other}, {third}});
  out.push_back(
      expect_near("cider of a candidate equal to its unique reference",
                  cider_single({"red", "car", "parked", "outside"}, {{"red", "car", "parked", "outside"}}, idf), 10.0));
  out.push_back(expect_near("cider of a disjoint candidate", cider_single({"blue", "boat"}, {other}, idf), 0.0));
  const IdfTable single = build_idf({{cat}});
  out.push_back(expect_near("cider on a single-image corpus", cider_single(cat, {cat}, single), 0.0));
  const IdfTable pair = build_idf({{{"x", "y"}}, {{"z"}}});
  out.push_back(expect_near("idf over two disjoint images", pair.idf({"x"}), std::numbers::ln2));
  return out;
}

std::vector<CheckOutcome> run_selfcheck(std::uint64_t seed) {
  auto out = op_gradient_suite(seed);
  out.push_back(cell_gradient_check(seed));
  for (auto& m : metric_oracle_suite()) out.push_back(std::move(m));
  return out;
}

}  // namespace stackvs
