#include <cmath>

#include "dial/objective.hpp"
#include "helpers.hpp"

using namespace dial;

namespace {

// Logit row whose softmax is `probs`.
Matrix logits_for(std::initializer_list<double> probs) {
  std::vector<double> v;
  for (double p : probs) v.push_back(std::log(p));
  return Matrix(1, v.size(), v);
}

}  // namespace

TEST_CASE("source cross-entropy values") {
  const auto src = uniform_mask(1, Domain::Source);
  const std::vector<int> one{1};
  CHECK(source_cross_entropy(Matrix(1, 4), one, src).value ==
        doctest::Approx(1.3862943611198906).epsilon(1e-14));
  CHECK(source_cross_entropy(logits_for({0.25, 0.75}), one, src).value ==
        doctest::Approx(0.2876820724517809).epsilon(1e-14));
  CHECK(source_cross_entropy(Matrix::from_rows({{0, 800}}), one, src).value == 0.0);
}

TEST_CASE("source cross-entropy ignores target rows and averages over source rows") {
  const Matrix z = Matrix::from_rows({{0, 0}, {5, -5}, {0, 0}});
  const std::vector<int> y{0, -1, 1};
  const DomainMask mask{Domain::Source, Domain::Target, Domain::Source};
  const auto t = source_cross_entropy(z, y, mask);
  CHECK(t.value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(t.grad(1, 0) == 0.0);
  CHECK(t.grad(1, 1) == 0.0);
  CHECK(t.grad(0, 0) == doctest::Approx(-0.25));
  CHECK(t.grad(0, 1) == doctest::Approx(0.25));
}

TEST_CASE("source cross-entropy errors and empty batches") {
  const DomainMask src = uniform_mask(2, Domain::Source);
  const std::vector<int> bad{0, -1};
  CHECK_THROWS_CODE(source_cross_entropy(Matrix(2, 3), bad, src), ErrorCode::MissingLabel);
  const std::vector<int> out_of_range{0, 3};
  CHECK_THROWS_CODE(source_cross_entropy(Matrix(2, 3), out_of_range, src),
                    ErrorCode::MissingLabel);
  const std::vector<int> short_labels{0};
  CHECK_THROWS_CODE(source_cross_entropy(Matrix(2, 3), short_labels, src),
                    ErrorCode::ShapeMismatch);

  const std::vector<int> none{-1, -1};
  const auto t = source_cross_entropy(Matrix(2, 3), none, uniform_mask(2, Domain::Target));
  CHECK(t.value == 0.0);
  CHECK(t.no_rows);
  CHECK(t.grad == Matrix(2, 3));
}

TEST_CASE("target entropy values") {
  const auto tgt = uniform_mask(1, Domain::Target);
  CHECK(target_entropy(Matrix(1, 2), tgt).value ==
        doctest::Approx(0.6931471805599453).epsilon(1e-14));
  CHECK(target_entropy(logits_for({0.75, 0.25}), tgt).value ==
        doctest::Approx(0.5623351446188083).epsilon(1e-14));
  const auto hot = target_entropy(Matrix::from_rows({{0, 2000, 0}}), tgt);
  CHECK(hot.value == 0.0);
  for (double g : hot.grad.values()) CHECK(std::isfinite(g));

  const auto none = target_entropy(Matrix(3, 2), uniform_mask(3, Domain::Source));
  CHECK(none.value == 0.0);
  CHECK(none.no_rows);
}

TEST_CASE("target entropy stays within [0, ln K]") {
  RngStream rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.below(6);
    Matrix z = rng.standard_normal(4, k);
    const double spread = std::pow(10.0, 3.0 * rng.uniform01() - 1.0);
    for (double& v : z.values()) v *= spread;
    const double h = target_entropy(z, uniform_mask(4, Domain::Target)).value;
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(k)) + 1e-12);
  }
}

TEST_CASE("loss gradients match central differences") {
  RngStream rng(22);
  const DomainMask mask{Domain::Source, Domain::Target, Domain::Target, Domain::Source,
                        Domain::Target};
  const std::vector<int> y{2, -1, -1, 0, -1};
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = rng.standard_normal(5, 3);
    const auto ce = source_cross_entropy(z, y, mask);
    const auto ent = target_entropy(z, mask);
    for (std::size_t i = 0; i < z.size(); ++i) {
      Matrix zp = z;
      Matrix zm = z;
      zp.values()[i] += 1e-6;
      zm.values()[i] -= 1e-6;
      const double nce = (source_cross_entropy(zp, y, mask).value -
                          source_cross_entropy(zm, y, mask).value) / 2e-6;
      const double nent = (target_entropy(zp, mask).value - target_entropy(zm, mask).value) / 2e-6;
      CHECK(ce.grad.values()[i] == doctest::Approx(nce).epsilon(1e-6).scale(1.0));
      CHECK(ent.grad.values()[i] == doctest::Approx(nent).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("total loss reductions") {
  auto [net, params] = Network::build({LayerSpec::dense(2, 3)}, 1);
  RngStream rng(23);
  const Matrix z = rng.standard_normal(4, 3);
  const DomainMask mask{Domain::Source, Domain::Target, Domain::Source, Domain::Target};
  const std::vector<int> y{1, -1, 2, -1};

  SUBCASE("all weights zero is the source-only objective") {
    const auto l = total_loss(z, y, mask, 3.0, params, {0.0, 0.0, 0.0});
    CHECK(l.total == source_cross_entropy(z, y, mask).value);
    CHECK(l.d_logits == source_cross_entropy(z, y, mask).grad);
  }
  SUBCASE("source-free batch") {
    const auto tgt = uniform_mask(4, Domain::Target);
    const std::vector<int> none(4, -1);
    const auto l = total_loss(z, none, tgt, 0.0, params, {1.0, 0.0, 0.2});
    CHECK(l.no_source_rows);
    CHECK(l.source_ce == 0.0);
    CHECK(l.total == doctest::Approx(target_entropy(z, tgt).value +
                                     0.1 * param_sq_norm(params)).epsilon(1e-15));
  }
  SUBCASE("every term is weighted") {
    const auto l = total_loss(z, y, mask, 3.0, params, {0.5, 0.01, 0.2});
    const double expect = source_cross_entropy(z, y, mask).value +
                          0.5 * target_entropy(z, mask).value + 0.01 * 3.0 +
                          0.1 * param_sq_norm(params);
    CHECK(l.total == doctest::Approx(expect).epsilon(1e-15));
    CHECK(l.sparse == 3.0);
    CHECK(l.weight_decay == param_sq_norm(params));
  }
  SUBCASE("negative weights are rejected") {
    CHECK_THROWS_CODE(total_loss(z, y, mask, 0.0, params, {-1.0, 0.0, 0.0}), ErrorCode::BadSpec);
  }
}
