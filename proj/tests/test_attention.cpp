#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rdsgan/gradcheck.hpp"
#include "rdsgan/model.hpp"

using namespace rdsgan;

namespace {

ModelDims small_dims() {
  ModelDims d;
  d.vocab_size = 12;
  d.n_relations = 53;  // full relation inventory for the uniform-loss value
  d.word_dim = 4;
  d.pos_dim = 2;
  d.n_filters = 6;
  d.aligned_length = 6;
  d.h_g = 3;
  d.h_d = 4;
  return d;
}

Matrix<double> random_vec(Index n, SeededRng& rng) {
  Matrix<double> v(n, 1);
  for (Index i = 0; i < n; ++i) v(i, 0) = rng.uniform(-1, 1);
  return v;
}

}  // namespace

TEST_CASE("match_score") {
  auto dims = small_dims();
  auto model = Model<double>::init(dims, 1);

  SUBCASE("identity bilinear with x equal to the query gives the squared norm") {
    auto m = model;
    m.attention.bilinear.setIdentity();
    Tape<double> t;
    auto bm = m.bind(t, Trainable::none());
    Matrix<double> q = m.attention.query_table.row(2).transpose();
    auto e = match_score(bm.attention, t.constant(q), 2);
    CHECK(scalar_value(e) == doctest::Approx(q.squaredNorm()).epsilon(1e-12));
  }
  SUBCASE("orthogonal vector scores zero") {
    auto m = model;
    m.attention.bilinear.setIdentity();
    m.attention.query_table.setZero();
    m.attention.query_table(1, 0) = 1.0;
    Tape<double> t;
    auto bm = m.bind(t, Trainable::none());
    Matrix<double> x = Matrix<double>::Zero(dims.n_filters, 1);
    x(1, 0) = 3.0;  // orthogonal to e_0
    auto e = match_score(bm.attention, t.constant(x), 1);
    CHECK(scalar_value(e) == doctest::Approx(0.0));
  }
  SUBCASE("random inputs match the arithmetic oracle") {
    Tape<double> t;
    auto bm = model.bind(t, Trainable::none());
    SeededRng rng(3);
    Matrix<double> x = random_vec(dims.n_filters, rng);
    auto e = match_score(bm.attention, t.constant(x), 4);
    double oracle = (x.transpose() * model.attention.bilinear *
                     model.attention.query_table.row(4).transpose())(0, 0);
    CHECK(scalar_value(e) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("attention weights and bag representation") {
  Tape<double> t;
  SUBCASE("equal scores give uniform weights") {
    Matrix<double> e(3, 1);
    e.setConstant(1.7);
    auto alpha = attention_weights(t.constant(e));
    for (Index i = 0; i < 3; ++i) CHECK(alpha.value()(i, 0) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("two-score reference value") {
    Matrix<double> e(2, 1);
    e << 1, 0;
    auto alpha = attention_weights(t.constant(e));
    CHECK(alpha.value()(0, 0) == doctest::Approx(0.731).epsilon(1e-3));
    CHECK(alpha.value()(1, 0) == doctest::Approx(0.269).epsilon(1e-3));
  }
  SUBCASE("constant shift leaves weights unchanged") {
    SeededRng rng(5);
    Matrix<double> e = random_vec(4, rng);
    auto a1 = attention_weights(t.constant(e));
    auto a2 = attention_weights(t.constant(Matrix<double>(e.array() + 13.5)));
    CHECK((a1.value() - a2.value()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("single instance bag is that instance") {
    SeededRng rng(6);
    auto x = t.constant(random_vec(5, rng));
    Matrix<double> one(1, 1);
    one << 1.0;
    auto q = bag_representation(t.constant(one), {x});
    CHECK((q.value() - x.value()).norm() == doctest::Approx(0));
  }
  SUBCASE("opposite vectors under equal weights cancel") {
    SeededRng rng(7);
    Matrix<double> v = random_vec(5, rng);
    auto q = bag_representation(t.constant((Matrix<double>(2, 1) << 0.5, 0.5).finished()),
                                {t.constant(v), t.constant(Matrix<double>(-v))});
    CHECK(q.value().norm() == doctest::Approx(0));
  }
  SUBCASE("weighted sum matches the summation oracle") {
    SeededRng rng(8);
    std::vector<Var<double>> xs;
    Matrix<double> alpha = random_vec(3, rng).cwiseAbs();
    alpha /= alpha.sum();
    Matrix<double> oracle = Matrix<double>::Zero(5, 1);
    for (Index i = 0; i < 3; ++i) {
      Matrix<double> v = random_vec(5, rng);
      xs.push_back(t.constant(v));
      oracle += alpha(i, 0) * v;
    }
    auto q = bag_representation(t.constant(alpha), xs);
    CHECK((q.value() - oracle).norm() == doctest::Approx(0).epsilon(1e-12));
  }
  SUBCASE("length mismatch rejected") {
    SeededRng rng(9);
    auto x = t.constant(random_vec(5, rng));
    Matrix<double> w(2, 1);
    w << 0.5, 0.5;
    CHECK_THROWS_AS(bag_representation(t.constant(w), {x}), ShapeError);
  }
}

TEST_CASE("relation distribution") {
  auto dims = small_dims();
  auto model = Model<double>::init(dims, 2);

  SUBCASE("zero weights give the uniform distribution") {
    auto m = model;
    m.attention.w_r.setZero();
    m.attention.b2.setZero();
    Tape<double> t;
    auto bm = m.bind(t, Trainable::none());
    SeededRng rng(1);
    auto [o, p] = relation_distribution(bm.attention, t.constant(random_vec(dims.n_filters, rng)));
    for (Index i = 0; i < dims.n_relations; ++i) {
      CHECK(p.value()(i, 0) == doctest::Approx(1.0 / dims.n_relations));
    }
  }
  SUBCASE("large bias wins the argmax") {
    auto m = model;
    m.attention.b2(7, 0) = 100.0;
    Tape<double> t;
    auto bm = m.bind(t, Trainable::none());
    SeededRng rng(2);
    auto [o, p] = relation_distribution(bm.attention, t.constant(random_vec(dims.n_filters, rng)));
    Index argmax;
    p.value().col(0).maxCoeff(&argmax);
    CHECK(argmax == 7);
  }
  SUBCASE("random case matches the affine+softmax oracle") {
    Tape<double> t;
    auto bm = model.bind(t, Trainable::none());
    SeededRng rng(3);
    Matrix<double> q = random_vec(dims.n_filters, rng);
    auto [o, p] = relation_distribution(bm.attention, t.constant(q));
    Matrix<double> logits = model.attention.w_r * q + model.attention.b2;
    Matrix<double> probs = (logits.array() - logits.maxCoeff()).exp();
    probs /= probs.sum();
    CHECK((o.value() - logits).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p.value() - probs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("rank loss") {
  Tape<double> t;
  SUBCASE("dominant generated score drives the default loss to zero") {
    Matrix<double> e(4, 1);
    e << 50.0, 1.0, 0.5, -2.0;  // generated at index 0
    auto loss = rank_loss_generated(t.constant(e), 0, 2, false);
    CHECK(scalar_value(loss) < 1e-4);
  }
  SUBCASE("tie with the single real instance at k=1 gives -log(1/2)") {
    Matrix<double> e(2, 1);
    e << 1.3, 1.3;
    auto loss = rank_loss_generated(t.constant(e), 0, 1, false);
    CHECK(scalar_value(loss) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  }
  SUBCASE("literal form is exactly 1 with zero gradient when the generated tops the bag") {
    Matrix<double> e(3, 1);
    e << 5.0, 1.0, 0.0;
    auto ev = t.variable(e);
    auto loss = rank_loss_generated(ev, 0, 1, true);
    CHECK(scalar_value(loss) == doctest::Approx(1.0));
    t.backward(loss);
    CHECK(t.grad(ev).norm() == doctest::Approx(0.0));
  }
  SUBCASE("k out of range rejected") {
    Matrix<double> e(3, 1);
    e << 1, 2, 3;
    CHECK_THROWS_AS(rank_loss_generated(t.constant(e), 0, 0, false), ShapeError);
    CHECK_THROWS_AS(rank_loss_generated(t.constant(e), 0, 3, false), ShapeError);
  }
  SUBCASE("default loss strictly decreases as the generated score rises") {
    double prev = std::numeric_limits<double>::infinity();
    for (double eg : {-2.0, -1.0, 0.0, 1.0, 2.0, 4.0}) {
      Matrix<double> e(4, 1);
      e << eg, 1.0, 0.2, -0.5;
      double v = scalar_value(rank_loss_generated(t.constant(e), 0, 2, false));
      CHECK(v < prev);
      prev = v;
    }
  }
  SUBCASE("margin of 10 pushes the loss below 1e-4 at the default k=1") {
    SeededRng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      Index m = 1 + static_cast<Index>(rng.uniform_int(5));
      Matrix<double> e(m + 1, 1);
      for (Index i = 1; i <= m; ++i) e(i, 0) = rng.uniform(-1, 1);
      e(0, 0) = e.bottomRows(m).maxCoeff() + 10.0;
      double v = scalar_value(rank_loss_generated(t.constant(e), 0, 1, false));
      CHECK(v < 1e-4);
      // For larger k the loss is log(1 + sum over k margins), so a wider
      // margin gives the same bound.
      Matrix<double> wide = e;
      wide(0, 0) = e.bottomRows(m).maxCoeff() + 15.0;
      int k = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(m)));
      CHECK(scalar_value(rank_loss_generated(t.constant(wide), 0, k, false)) < 1e-4);
    }
  }
}

TEST_CASE("total rank loss and classification loss") {
  Tape<double> t;
  SUBCASE("identical bags average to the per-bag value") {
    auto a = t.scalar_constant(0.7);
    double v = scalar_value(total_rank_loss<double>({a, a, a}));
    CHECK(v == doctest::Approx(0.7));
  }
  SUBCASE("two bags average their losses") {
    double v = scalar_value(total_rank_loss<double>({t.scalar_constant(1.0),
                                                     t.scalar_constant(3.0)}));
    CHECK(v == doctest::Approx(2.0));
  }
  SUBCASE("empty batch rejected") {
    CHECK_THROWS_AS(total_rank_loss<double>({}), DataError);
  }
  SUBCASE("random batch matches the brute-force per-bag summation") {
    SeededRng rng(14);
    std::vector<Var<double>> terms;
    double oracle = 0.0;
    const int bags = 7;
    for (int b = 0; b < bags; ++b) {
      Index m = 1 + static_cast<Index>(rng.uniform_int(5));
      Matrix<double> e(m + 1, 1);
      for (Index i = 0; i <= m; ++i) e(i, 0) = rng.uniform(-2, 2);
      int k = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(m)));
      auto loss = rank_loss_generated(t.constant(e), 0, k, false);
      terms.push_back(loss);
      oracle += scalar_value(loss);
    }
    CHECK(scalar_value(total_rank_loss(terms)) == doctest::Approx(oracle / bags).epsilon(1e-12));
  }
  SUBCASE("certain gold gives zero loss") {
    Matrix<double> logits = Matrix<double>::Zero(5, 1);
    logits(2, 0) = 60.0;
    double v = scalar_value(classification_loss<double>({bag_class_loss(t.constant(logits), 2)}));
    CHECK(v == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("uniform distribution over 53 relations costs log 53") {
    Matrix<double> logits = Matrix<double>::Zero(53, 1);
    double v = scalar_value(classification_loss<double>({bag_class_loss(t.constant(logits), 7)}));
    CHECK(v == doctest::Approx(std::log(53.0)).epsilon(1e-9));
  }
  SUBCASE("random case matches a brute-force oracle") {
    SeededRng rng(6);
    std::vector<Var<double>> terms;
    double oracle = 0.0;
    for (int b = 0; b < 5; ++b) {
      Matrix<double> logits = random_vec(9, rng);
      int gold = static_cast<int>(rng.uniform_int(9));
      terms.push_back(bag_class_loss(t.constant(logits), gold));
      Matrix<double> p = (logits.array() - logits.maxCoeff()).exp();
      p /= p.sum();
      oracle += -std::log(p(gold, 0));
    }
    double v = scalar_value(classification_loss(terms));
    CHECK(v == doctest::Approx(oracle / 5.0).epsilon(1e-9));
  }
}

TEST_CASE("combined loss") {
  Tape<double> t;
  SUBCASE("weights must be positive") {
    auto l1 = t.scalar_constant(2.0), l2 = t.scalar_constant(3.0);
    CHECK_THROWS_AS(combined_loss(l1, l2, 1.0, 0.0), ShapeError);
    CHECK_THROWS_AS(combined_loss(l1, l2, -1.0, 1.0), ShapeError);
  }
  SUBCASE("unit weights add") {
    auto l1 = t.scalar_constant(2.0), l2 = t.scalar_constant(3.0);
    CHECK(scalar_value(combined_loss(l1, l2, 1.0, 1.0)) == doctest::Approx(5.0));
  }
  SUBCASE("gradient is the weighted sum of gradients") {
    Matrix<double> xv(1, 1);
    xv << 0.8;
    const double lam1 = 0.3, lam2 = 1.7;
    auto build = [&](Tape<double>&, Var<double> x) {
      auto l1 = cwise_mul(x, x);       // x^2, d = 2x
      auto l2 = tanh(x);               // d = 1 - tanh^2
      return combined_loss(l1, l2, lam1, lam2);
    };
    Tape<double> tt;
    auto x = tt.variable(xv);
    tt.backward(build(tt, x));
    double expect = lam1 * 2.0 * xv(0, 0) + lam2 * (1.0 - std::pow(std::tanh(xv(0, 0)), 2));
    CHECK(tt.grad(x)(0, 0) == doctest::Approx(expect).epsilon(1e-12));
    auto eval = [&] {
      Tape<double> t3;
      return scalar_value(build(t3, t3.constant(xv)));
    };
    double err = finite_diff_check(eval, {{"x", &xv}}, {tt.grad(x)});
    CHECK(err < 1e-8);
  }
}

TEST_CASE("normalization invariants over random trials") {
  auto dims = small_dims();
  dims.n_relations = 7;
  auto model = Model<double>::init(dims, 9);
  SeededRng rng(10);
  for (int trial = 0; trial < 300; ++trial) {
    Tape<double> t;
    auto bm = model.bind(t, Trainable::none());
    const Index m = 1 + static_cast<Index>(rng.uniform_int(6));
    std::vector<Var<double>> xs;
    for (Index i = 0; i < m; ++i) xs.push_back(t.constant(random_vec(dims.n_filters, rng)));
    int rel = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(dims.n_relations)));
    auto alpha = attention_weights(bag_scores(bm.attention, xs, rel));
    CHECK(alpha.value().sum() == doctest::Approx(1.0).epsilon(1e-9));
    auto q = bag_representation(alpha, xs);
    auto [o, p] = relation_distribution(bm.attention, q);
    CHECK(p.value().sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("whole-module gradient passes finite differences") {
  auto dims = small_dims();
  dims.n_relations = 5;
  auto model = Model<double>::init(dims, 12);
  SeededRng data_rng(13);
  const int m = 3, gold = 2, k = 2;
  std::vector<Matrix<double>> xs_vals;
  for (int i = 0; i < m + 1; ++i) xs_vals.push_back(random_vec(dims.n_filters, data_rng));

  auto build = [&](Tape<double>& t, Trainable tr) {
    auto bm = model.bind(t, tr);
    std::vector<Var<double>> xs;
    for (const auto& v : xs_vals) xs.push_back(t.constant(v));
    auto e = bag_scores(bm.attention, xs, gold);
    auto l1 = total_rank_loss<double>({rank_loss_generated(e, 0, k, false)});
    auto alpha = attention_weights(e);
    auto q = bag_representation(alpha, xs);
    auto [o, p] = relation_distribution(bm.attention, q);
    (void)p;
    auto l2 = classification_loss<double>({bag_class_loss(o, gold)});
    return std::pair(bm, combined_loss(l1, l2, 0.8, 1.2));
  };

  Tape<double> t;
  auto [bm, loss] = build(t, Trainable::all());
  t.backward(loss);
  std::vector<std::pair<std::string, Matrix<double>*>> params;
  std::vector<Matrix<double>> grads;
  std::size_t i = 0;
  model.visit_params([&](const char* name, ParamGroup g, int, Matrix<double>& mat) {
    const auto& [bname, bgroup, var] = bm.flat.at(i++);
    if (g == ParamGroup::Attention) {
      params.emplace_back(name, &mat);
      grads.push_back(t.grad(var));
    }
  });
  auto eval = [&] {
    Tape<double> tt;
    auto [b2, l2] = build(tt, Trainable::none());
    return scalar_value(l2);
  };
  double err = finite_diff_check(eval, params, grads);
  CHECK(err < 1e-5);
}
