#include <cmath>
#include <random>

#include "doctest.h"
#include "fpmt/error.hpp"
#include "fpmt/grad_check.hpp"
#include "fpmt/losses.hpp"
#include "fpmt/random.hpp"

using namespace fpmt;

namespace {

Matrix random_simplex(std::size_t n, std::size_t c, Rng& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Matrix m(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double& v : m.row(i)) s += (v = g(rng) + 1e-3);
    for (double& v : m.row(i)) v /= s;
  }
  return m;
}

MixPair pair(std::size_t q, std::size_t p, Origin oq, Origin op) { return {q, p, 0.5, oq, op}; }

}  // namespace

TEST_CASE("cross_entropy examples") {
  constexpr double eps = kLogEps;
  CHECK(cross_entropy(Matrix{{1, 0}}, Matrix{{1 - eps, eps}}) < 1e-11);
  CHECK(std::abs(cross_entropy(Matrix{{1, 0}}, Matrix{{0.5, 0.5}}) - std::log(2.0)) < 1e-9);
  const double batch = cross_entropy(Matrix{{1, 0}, {0, 1}}, Matrix{{0.5, 0.5}, {0.25, 0.75}});
  CHECK(batch == doctest::Approx((std::log(2.0) + std::log(4.0 / 3.0)) / 2.0).epsilon(1e-14));
  CHECK(batch == doctest::Approx(0.490415).epsilon(1e-6));
  CHECK_THROWS_AS(cross_entropy(Matrix{{1, 0}}, Matrix{{1, 0, 0}}), DimensionError);
  // A zero probability is clamped, not rejected.
  CHECK(std::isfinite(cross_entropy(Matrix{{1, 0}}, Matrix{{0, 1}})));
}

TEST_CASE("cross_entropy is at least the target entropy") {
  Rng rng = make_rng(10);
  const Matrix y = random_simplex(200, 3, rng), p = random_simplex(200, 3, rng);
  for (std::size_t i = 0; i < 200; ++i) {
    const Matrix yi(1, 3, {y.row(i).begin(), y.row(i).end()});
    const Matrix pi(1, 3, {p.row(i).begin(), p.row(i).end()});
    CHECK(cross_entropy(yi, pi) >= cross_entropy(yi, yi) - 1e-9);
  }
}

TEST_CASE("kl_consistency examples") {
  CHECK(kl_consistency(Matrix{{0.3, 0.7}}, Matrix{{0.3, 0.7}}) == 0.0);
  const double kl = kl_consistency(Matrix{{0.5, 0.5}}, Matrix{{0.25, 0.75}});
  CHECK(kl == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-14));
  CHECK(std::abs(kl - 0.143841) < 1e-6);
  // Reverse order: 0.25 ln 0.5 + 0.75 ln 1.5
  const double rev = kl_consistency(Matrix{{0.5, 0.5}}, Matrix{{0.25, 0.75}}, KlDirection::TargetFirst);
  CHECK(rev == doctest::Approx(0.25 * std::log(0.5) + 0.75 * std::log(1.5)).epsilon(1e-14));

  Rng rng = make_rng(3);
  const Matrix p = random_simplex(500, 4, rng), q = random_simplex(500, 4, rng);
  for (std::size_t i = 0; i < 500; ++i) {
    const Matrix pi(1, 4, {p.row(i).begin(), p.row(i).end()});
    const Matrix qi(1, 4, {q.row(i).begin(), q.row(i).end()});
    CHECK(kl_consistency(pi, qi) >= -1e-12);
    CHECK(kl_consistency(pi, qi, KlDirection::TargetFirst) >= -1e-12);
  }
  CHECK_THROWS_AS(kl_consistency(Matrix{{1, 0}}, Matrix{{1, 0}, {0, 1}}), DimensionError);
}

TEST_CASE("combine") {
  CHECK(combine(1.0, 0.5, 1.0).total == 1.5);
  CHECK(combine(0.7, 123.0, 0.0).total == 0.7);
  CHECK(combine(0.49, 0.144, 2.0).total == doctest::Approx(0.778).epsilon(1e-14));
  CHECK_THROWS_AS(combine(1.0, 1.0, -0.1), ConfigError);
}

TEST_CASE("route_losses") {
  const Var logits = Var::constant({{0.2, -0.1}, {1.0, 0.5}, {-0.4, 0.3}, {0.0, 0.0}});
  const Matrix targets{{1, 0}, {0.25, 0.75}, {0.6, 0.4}, {0.5, 0.5}};
  const Matrix probs = softmax_stable(logits.value());
  constexpr auto L = Origin::Labeled;
  constexpr auto U = Origin::Unlabeled;

  SUBCASE("all labeled → L_u = 0") {
    const std::vector<MixPair> pairs{pair(0, 1, L, L), pair(1, 0, L, L), pair(2, 3, L, L), pair(3, 2, L, L)};
    const RoutedLoss r = route_losses(pairs, logits, targets, 1.0);
    CHECK(r.breakdown.consistency == 0.0);
    CHECK(r.breakdown.supervised == doctest::Approx(cross_entropy(targets, probs)).epsilon(1e-14));
  }
  SUBCASE("all unlabeled → L_x = 0") {
    const std::vector<MixPair> pairs{pair(0, 1, U, U), pair(1, 0, U, U), pair(2, 3, U, U), pair(3, 2, U, U)};
    const RoutedLoss r = route_losses(pairs, logits, targets, 1.0);
    CHECK(r.breakdown.supervised == 0.0);
    CHECK(r.breakdown.consistency == doctest::Approx(kl_consistency(probs, targets)).epsilon(1e-14));
  }
  SUBCASE("one pair of each kind against a per-pair hand sum") {
    const std::vector<MixPair> pairs{pair(0, 1, L, L), pair(1, 2, U, U), pair(2, 3, L, U), pair(3, 0, U, L)};
    const double w = 0.7;
    const RoutedLoss r = route_losses(pairs, logits, targets, w);
    auto ce_row = [&](std::size_t i) {
      return -(targets(i, 0) * std::log(probs(i, 0)) + targets(i, 1) * std::log(probs(i, 1)));
    };
    auto kl_row = [&](std::size_t i) {
      return probs(i, 0) * std::log(probs(i, 0) / targets(i, 0)) + probs(i, 1) * std::log(probs(i, 1) / targets(i, 1));
    };
    const double lx = (ce_row(0) + ce_row(2) + ce_row(3)) / 3.0;
    const double lu = (kl_row(1) + kl_row(2) + kl_row(3)) / 3.0;
    CHECK(r.supervised_rows == 3);
    CHECK(r.consistency_rows == 3);
    CHECK(r.breakdown.supervised == doctest::Approx(lx).epsilon(1e-13));
    CHECK(r.breakdown.consistency == doctest::Approx(lu).epsilon(1e-13));
    CHECK(std::abs(r.breakdown.total - (r.breakdown.supervised + w * r.breakdown.consistency)) < 1e-12);
    CHECK(r.total.value()[0] == r.breakdown.total);

    // Removing the unlabeled-origin pairs leaves L_x of the LL rows and zeroes L_u.
    const std::vector<MixPair> only_ll{pair(0, 1, L, L)};
    const RoutedLoss ll = route_losses(only_ll, Var::constant(Matrix{{0.2, -0.1}}), Matrix{{1, 0}}, w);
    CHECK(ll.breakdown.consistency == 0.0);
    CHECK(ll.breakdown.supervised == doctest::Approx(ce_row(0)).epsilon(1e-13));
  }
  SUBCASE("a pair without a target is a contract error") {
    const std::vector<MixPair> pairs{pair(0, 1, L, L), pair(1, 0, L, L), pair(2, 3, L, L), pair(3, 2, L, L)};
    CHECK_THROWS_AS(route_losses(pairs, logits, Matrix{{1, 0}, {0, 1}}, 1.0), ContractError);
  }
}

TEST_CASE("loss gradients with respect to logits pass grad_check") {
  Rng rng = make_rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix init(6, 3);
  for (double& v : init.data()) v = n(rng);
  const Matrix targets = random_simplex(6, 3, rng);

  for (KlDirection dir : {KlDirection::ModelFirst, KlDirection::TargetFirst}) {
    ParameterSet ps;
    ps.add("logits", init);
    auto kl = [&] { return kl_consistency(softmax(ps.get("logits")), Var::constant(targets), dir); };
    CHECK(grad_check(ps, kl).passed);
  }
  ParameterSet ps;
  ps.add("logits", init);
  auto ce = [&] { return cross_entropy(Var::constant(targets), softmax(ps.get("logits"))); };
  CHECK(grad_check(ps, ce).passed);

  constexpr auto L = Origin::Labeled;
  constexpr auto U = Origin::Unlabeled;
  const std::vector<MixPair> pairs{pair(0, 1, L, L), pair(1, 2, U, U), pair(2, 3, L, U),
                                   pair(3, 0, U, L), pair(4, 5, U, U), pair(5, 4, L, L)};
  auto routed = [&] { return route_losses(pairs, ps.get("logits"), targets, 0.8).total; };
  CHECK(grad_check(ps, routed).passed);
}

TEST_CASE("masked_recon_loss") {
  const Matrix x{{1, 2}};
  CHECK(masked_recon_loss(x, Matrix{{1, 1}}, x) == 0.0);
  CHECK(masked_recon_loss(x, Matrix{{1, 0}}, Matrix{{0, 0}}) == 1.0);
  CHECK(masked_recon_loss(x, Matrix{{1, 1}}, Matrix{{0, 0}}) == 2.5);
  CHECK_THROWS_AS(masked_recon_loss(x, Matrix{{0, 0}}, x), DomainError);
  CHECK_THROWS_AS(masked_recon_loss(x, Matrix{{0.5, 1}}, x), DomainError);
  CHECK_THROWS_AS(masked_recon_loss(x, Matrix{{1}}, x), DimensionError);
}
