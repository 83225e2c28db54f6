#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fpmt/error.hpp"
#include "fpmt/grad_check.hpp"
#include "fpmt/losses.hpp"
#include "fpmt/mixing.hpp"
#include "fpmt/random.hpp"

using namespace fpmt;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng = make_rng(seed, 55);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}

EncoderConfig config(std::size_t d, std::size_t depth, std::size_t width) {
  EncoderConfig c;
  c.input_dim = d;
  c.depth = depth;
  c.width = width;
  return c;
}

Matrix one_hot_rows(std::size_t n) {
  Matrix y(n, 2);
  for (std::size_t i = 0; i < n; ++i) y(i, i % 2) = 1.0;
  return y;
}

}  // namespace

TEST_CASE("input and label mixup") {
  const double a[] = {1, 2}, b[] = {3, 4};
  CHECK(mixup_inputs(a, b, 1.0) == std::vector<double>{1, 2});
  CHECK(mixup_inputs(a, b, 0.5) == std::vector<double>{2, 3});
  const double yq[] = {1, 0}, yp[] = {0, 1};
  const ProbVector y = mixup_labels(yq, yp, 0.75);
  CHECK(y[0] == 0.75);
  CHECK(y[1] == 0.25);
  const double c3[] = {1, 2, 3};
  CHECK_THROWS_AS(mixup_inputs(a, c3, 0.5), DimensionError);
  CHECK_THROWS_AS(mixup_inputs(a, b, 1.5), DomainError);
}

TEST_CASE("Beta(α, α) sampling") {
  Rng rng = make_rng(2024);
  SUBCASE("alpha = 1 is uniform: KS statistic over 1e5 draws") {
    std::vector<double> xs(100000);
    for (double& x : xs) x = sample_lambda_beta(1.0, rng);
    std::sort(xs.begin(), xs.end());
    double d = 0.0;
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      d = std::max({d, (static_cast<double>(i) + 1.0) / n - xs[i], xs[i] - static_cast<double>(i) / n});
    }
    CHECK(d < 0.02);
  }
  SUBCASE("symmetric mean and bounds for several alphas") {
    for (double alpha : {0.2, 1.0, 16.0}) {
      double s = 0.0;
      for (int i = 0; i < 100000; ++i) {
        const double x = sample_lambda_beta(alpha, rng);
        REQUIRE(x >= 0.0);
        REQUIRE(x <= 1.0);
        s += x;
      }
      CHECK(std::abs(s / 100000.0 - 0.5) < 0.01);
    }
  }
  CHECK_THROWS_AS(sample_lambda_beta(0.0, rng), ConfigError);
  CHECK_THROWS_AS(sample_lambda_beta(-1.0, rng), ConfigError);
}

TEST_CASE("confidence_lambda") {
  CHECK(confidence_lambda(0.5, 0.5) == 0.5);
  CHECK(confidence_lambda(0.9, 0.3) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(confidence_lambda(1.0, 1.0) == 0.5);
  CHECK_THROWS_AS(confidence_lambda(0.0, 0.0), DomainError);
  Rng rng = make_rng(8);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), b = u(rng);
    CHECK(std::abs(confidence_lambda(a, b) - (1.0 - confidence_lambda(b, a))) < 1e-15);
  }
  CHECK(mixtext_lambda(0.3) == 0.7);
  CHECK(mixtext_lambda(0.8) == 0.8);
}

TEST_CASE("tmix_forward identities") {
  const Encoder enc(config(4, 4, 6), 17);
  const Matrix x = random_matrix(5, 4, 1), xp = random_matrix(5, 4, 2);
  const Matrix y = one_hot_rows(5);
  Matrix yp(5, 2);
  for (std::size_t i = 0; i < 5; ++i) yp(i, 1 - i % 2) = 1.0;
  const Matrix full = enc.forward_full(Var::constant(x)).value();

  SUBCASE("λ = 1 reproduces the plain forward bitwise") {
    for (std::size_t e = 1; e <= 4; ++e) {
      const TmixResult r = tmix_forward(enc, x, xp, y, yp, 1.0, e);
      CHECK(r.logits.value() == full);
      CHECK(r.mixed_targets == y);
    }
  }
  SUBCASE("x == x′ for any λ") {
    for (double lam : {0.0, 0.3, 0.5, 0.9}) {
      const TmixResult r = tmix_forward(enc, x, x, y, y, lam, 3);
      const Matrix& l = r.logits.value();
      for (std::size_t i = 0; i < l.size(); ++i) CHECK(l[i] == doctest::Approx(full[i]).epsilon(1e-14));
    }
  }
  SUBCASE("convexity of the mixed hidden state") {
    const double lams[] = {0.2, 0.5, 0.7, 0.9, 0.0};
    const HiddenState h = enc.forward_to_layer(Var::constant(x), 2);
    const HiddenState hp = enc.forward_to_layer(Var::constant(xp), 2);
    const Matrix m = mix_hidden(h.activations, hp.activations, lams).value();
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) {
        const double lo = std::min(h.activations.value()(i, j), hp.activations.value()(i, j));
        const double hi = std::max(h.activations.value()(i, j), hp.activations.value()(i, j));
        CHECK(m(i, j) >= lo - 1e-15);
        CHECK(m(i, j) <= hi + 1e-15);
      }
    }
  }
}

TEST_CASE("tmix with one hidden layer at λ = 0.5 by hand") {
  const Encoder enc(config(3, 1, 4), 6);
  const Matrix x = random_matrix(1, 3, 3), xp = random_matrix(1, 3, 4);
  const TmixResult r = tmix_forward(enc, x, xp, one_hot_rows(1), one_hot_rows(1), 0.5, 1);
  const Matrix& w1 = enc.parameters().get("layer1.weight").value();
  const Matrix& wc = enc.parameters().get("class_head.weight").value();
  const Matrix& bc = enc.parameters().get("class_head.bias").value();
  for (std::size_t c = 0; c < 2; ++c) {
    double logit = bc(0, c);
    for (std::size_t j = 0; j < 4; ++j) {
      double z = 0.0, zp = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        z += x(0, k) * w1(k, j);
        zp += xp(0, k) * w1(k, j);
      }
      logit += 0.5 * (std::tanh(z) + std::tanh(zp)) * wc(j, c);
    }
    CHECK(r.logits.value()(0, c) == doctest::Approx(logit).epsilon(1e-13));
  }
}

TEST_CASE("tmix gradients pass grad_check at λ ∈ {0, 0.5, 1}") {
  for (double lam : {0.0, 0.5, 1.0}) {
    Encoder enc(config(4, 3, 5), 31);
    const Matrix x = random_matrix(4, 4, 7), xp = random_matrix(4, 4, 8);
    Matrix yp(4, 2);
    for (std::size_t i = 0; i < 4; ++i) yp(i, 1 - i % 2) = 1.0;
    auto loss = [&] {
      const TmixResult r = tmix_forward(enc, x, xp, one_hot_rows(4), yp, lam, 2);
      return cross_entropy(Var::constant(r.mixed_targets), softmax(r.logits));
    };
    const GradCheckReport report = grad_check(enc.parameters(), loss);
    CHECK_MESSAGE(report.passed, "λ=" << lam << " worst " << report.worst_parameter << " " << report.max_rel_error);
  }
}

TEST_CASE("ptmix_forward") {
  const Encoder enc(config(4, 3, 5), 41);
  const Matrix x = random_matrix(2, 4, 9), xp = random_matrix(2, 4, 10);

  SUBCASE("two labeled inputs mix at exactly 0.5") {
    const std::vector<MixTarget> t{MixTarget::labeled({1, 0}), MixTarget::labeled({0, 1})};
    const std::vector<MixTarget> tp{MixTarget::labeled({0, 1}), MixTarget::labeled({0, 1})};
    const PtmixResult r = ptmix_forward(enc, x, xp, t, tp, 2);
    CHECK(r.lambdas == std::vector<double>{0.5, 0.5});
    const TmixResult tm = tmix_forward(enc, x, xp, Matrix{{1, 0}, {0, 1}}, Matrix{{0, 1}, {0, 1}}, 0.5, 2);
    CHECK(r.logits.value() == tm.logits.value());
    CHECK(r.mixed_targets == tm.mixed_targets);
  }
  SUBCASE("pseudo confidences 0.9 and 0.3 give λ = 0.75") {
    const PseudoLabel a{{0.9, 0.1}, 0.9}, b{{0.7, 0.3}, 0.7}, c{{0.3, 0.7}, 0.7}, d{{0.5, 0.5}, 0.3};
    const std::vector<MixTarget> t{MixTarget::unlabeled(a), MixTarget::unlabeled(b)};
    const std::vector<MixTarget> tp{MixTarget::unlabeled(d), MixTarget::unlabeled(c)};
    const PtmixResult r = ptmix_forward(enc, x, xp, t, tp, 2);
    CHECK(r.lambdas[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(r.mixed_targets(0, 0) == doctest::Approx(0.75 * 0.9 + 0.25 * 0.5).epsilon(1e-15));
    CHECK(r.lambdas[1] == 0.5);
  }
  SUBCASE("swapping the arguments leaves ỹ and h̃ unchanged") {
    const PseudoLabel a{{0.8, 0.2}, 0.8}, b{{0.4, 0.6}, 0.6};
    const std::vector<MixTarget> t{MixTarget::unlabeled(a), MixTarget::labeled({0, 1})};
    const std::vector<MixTarget> tp{MixTarget::unlabeled(b), MixTarget::unlabeled(a)};
    const PtmixResult r1 = ptmix_forward(enc, x, xp, t, tp, 2);
    const PtmixResult r2 = ptmix_forward(enc, xp, x, tp, t, 2);
    for (std::size_t i = 0; i < r1.mixed_targets.size(); ++i) {
      CHECK(r1.mixed_targets[i] == doctest::Approx(r2.mixed_targets[i]).epsilon(1e-15));
    }
    const Matrix& h1 = r1.mixed_hidden.value();
    const Matrix& h2 = r2.mixed_hidden.value();
    for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == doctest::Approx(h2[i]).epsilon(1e-14));
  }
  SUBCASE("unlabeled input without a pseudo-label is a contract error") {
    MixTarget missing;
    missing.origin = Origin::Unlabeled;
    const std::vector<MixTarget> t{missing, MixTarget::labeled({1, 0})};
    const std::vector<MixTarget> tp{MixTarget::labeled({1, 0}), MixTarget::labeled({1, 0})};
    CHECK_THROWS_AS(ptmix_forward(enc, x, xp, t, tp, 2), ContractError);
  }
}

TEST_CASE("pair_batch") {
  Rng rng = make_rng(4);
  SUBCASE("a batch of one pairs with itself") {
    const auto pairs = pair_batch(1, 0, rng);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].index_p == 0);
    CHECK(pairs[0].kind() == PairKind::LabeledLabeled);
  }
  SUBCASE("partners form a permutation and kinds partition the batch") {
    const auto pairs = pair_batch(7, 9, rng);
    std::vector<std::size_t> partners;
    std::size_t ll = 0, uu = 0, mixed = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(pairs[i].index_q == i);
      partners.push_back(pairs[i].index_p);
      CHECK((pairs[i].origin_q == Origin::Labeled) == (i < 7));
      CHECK((pairs[i].origin_p == Origin::Labeled) == (pairs[i].index_p < 7));
      switch (pairs[i].kind()) {
        case PairKind::LabeledLabeled: ++ll; break;
        case PairKind::UnlabeledUnlabeled: ++uu; break;
        case PairKind::Mixed: ++mixed; break;
      }
    }
    std::sort(partners.begin(), partners.end());
    for (std::size_t i = 0; i < partners.size(); ++i) CHECK(partners[i] == i);
    CHECK(ll + uu + mixed == 16);
  }
  CHECK_THROWS_AS(pair_batch(0, 0, rng), DataError);
}

TEST_CASE("assign_lambdas draws once per batch for Beta and per pair for confidence") {
  Rng rng = make_rng(12);
  auto pairs = pair_batch(4, 4, rng);
  assign_lambdas(pairs, MixPolicy::beta(16.0), {}, rng);
  for (const auto& p : pairs) CHECK(p.lambda == pairs[0].lambda);

  const std::vector<double> conf{1, 1, 1, 1, 0.6, 0.9, 0.55, 0.7};
  assign_lambdas(pairs, MixPolicy::confidence(), conf, rng);
  for (const auto& p : pairs) {
    CHECK(p.lambda == confidence_lambda(conf[p.index_q], conf[p.index_p]));
  }
  assign_lambdas(pairs, MixPolicy::beta(0.5), {}, rng, /*use_mixtext_max=*/true);
  CHECK(pairs[0].lambda >= 0.5);
  CHECK_THROWS_AS(MixPolicy::beta(0.0).validate(), ConfigError);
}
