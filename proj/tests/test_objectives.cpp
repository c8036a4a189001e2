#include <doctest.h>

#include <cmath>

#include "metasd/objectives.hpp"
#include "metasd/pruner.hpp"
#include "test_util.hpp"

using namespace metasd;
using namespace testutil;

TEST_CASE("softmax_ce uniform case") {
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(3);
  auto [loss, dl] = softmax_ce(logits, 0);
  CHECK(loss == doctest::Approx(std::log(3.0)));
  CHECK(dl[0] == doctest::Approx(-2.0 / 3.0));
  CHECK(dl[1] == doctest::Approx(1.0 / 3.0));
  CHECK(dl[2] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("softmax_ce saturated case") {
  Eigen::VectorXd logits(3);
  logits << 100.0, 0.0, 0.0;
  auto [loss, dl] = softmax_ce(logits, 0);
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax_ce direct value") {
  Eigen::VectorXd logits(3);
  logits << 1.0, 0.0, 0.0;
  auto [loss, dl] = softmax_ce(logits, 1);
  // -log(1 / (e + 2)) = log(e + 2)
  CHECK(loss == doctest::Approx(std::log(std::exp(1.0) + 2.0)));
  CHECK(loss == doctest::Approx(1.5514).epsilon(1e-4));
}

TEST_CASE("softmax_ce is shift invariant and rejects bad input") {
  Eigen::VectorXd a(4), b(4);
  a << 3.0, -1.0, 0.5, 2.0;
  b = a.array() + 1000.0;
  CHECK(softmax_ce(a, 2).first == doctest::Approx(softmax_ce(b, 2).first));

  CHECK_THROWS_AS(softmax_ce(a, 4), NumericError);
  a[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(softmax_ce(a, 0), NumericError);
}

TEST_CASE("kl_div of identical distributions is zero") {
  Eigen::VectorXd l(4);
  l << 1.0, -0.5, 2.0, 0.0;
  KlResult r = kl_div(l, l, 1.0);
  CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(r.d_student.isZero(1e-14));
  CHECK(r.d_teacher.isZero(1e-14));
}

TEST_CASE("kl_div direct value") {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd t(2);
  t << std::log(3.0), 0.0;
  // p = (.5, .5), q = (.75, .25): KL = .5 ln(2/3) + .5 ln 2 = .5 ln(4/3)
  KlResult r = kl_div(s, t, 1.0);
  CHECK(r.loss == doctest::Approx(0.5 * std::log(4.0 / 3.0)));
  CHECK(r.loss == doctest::Approx(0.1438).epsilon(1e-3));
}

TEST_CASE("kl_div is non-negative and its gradients match FD") {
  Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd s(6), t(6);
    for (int i = 0; i < 6; ++i) {
      s[i] = rng.uniform_sym(3.0);
      t[i] = rng.uniform_sym(3.0);
    }
    const double tau = trial % 2 == 0 ? 1.0 : 2.5;
    KlResult r = kl_div(s, t, tau);
    CHECK(r.loss >= -1e-14);

    const double h = 1e-6;
    for (int i = 0; i < 6; ++i) {
      Eigen::VectorXd sp = s, sm = s;
      sp[i] += h;
      sm[i] -= h;
      double fd = (kl_div(sp, t, tau).loss - kl_div(sm, t, tau).loss) /
                  (2.0 * h);
      CHECK(rel_err(r.d_student[i], fd) < 1e-7);

      Eigen::VectorXd tp = t, tm = t;
      tp[i] += h;
      tm[i] -= h;
      fd = (kl_div(s, tp, tau).loss - kl_div(s, tm, tau).loss) / (2.0 * h);
      CHECK(rel_err(r.d_teacher[i], fd) < 1e-7);
    }
  }
}

TEST_CASE("n3 regularizer direct values") {
  ParamStore p = init_params(Backbone::CP, 2, 2, 1, 1, 0.0);
  CHECK(n3_reg(ModelView(p), std::vector<Triple>{{0, 0, 1}}).first == 0.0);

  p.tensors[0].data.row(0) << 1.0, -2.0; // head row of entity 0
  auto [val, grad] = n3_reg(ModelView(p), std::vector<Triple>{{0, 0, 1}});
  CHECK(val == doctest::Approx(9.0));
  CHECK(grad.buffer(0)(0, 0) == doctest::Approx(3.0));
  CHECK(grad.buffer(0)(0, 1) == doctest::Approx(-12.0));
}

TEST_CASE("n3 counts each participating row once") {
  ParamStore p = init_params(Backbone::ComplEx, 3, 4, 2, 5, 0.6);
  std::vector<Triple> batch = {{0, 0, 1}, {0, 0, 1}, {0, 1, 2}};
  auto [val, grad] = n3_reg(ModelView(p), batch);
  double expect = 0.0;
  for (int row : {0, 1, 2})
    expect += p.tensors[0].data.row(row).array().abs().cube().sum();
  for (int row : {0, 1})
    expect += p.tensors[1].data.row(row).array().abs().cube().sum();
  CHECK(val == doctest::Approx(expect));

  auto f = [&] { return n3_reg(ModelView(p), batch).first; };
  CHECK(max_grad_rel_err(p, grad, f) < 1e-6);
}

namespace {

LossConfig plain_config(double alpha, double beta) {
  LossConfig c;
  c.alpha = alpha;
  c.beta = beta;
  c.rp_weight = 0.0;
  c.n3_weight = 0.0;
  return c;
}

} // namespace

TEST_CASE("student_loss with alpha=1 is plain CE, teacher grad exactly 0") {
  ParamStore sp = init_params(Backbone::ComplEx, 4, 5, 2, 1, 0.5);
  ParamStore tp = init_params(Backbone::ComplEx, 4, 5, 2, 2, 0.5);
  Rng rng(7);
  auto batch = random_triples(rng, 6, 5, 4);

  StudentLossResult r = student_loss(batch, ModelView(sp), ModelView(tp),
                                     plain_config(1.0, 0.5));
  CeLossResult ce = ce_loss(batch, ModelView(sp));
  CHECK(r.value.total == doctest::Approx(ce.loss));
  CHECK(r.value.component("kd") == doctest::Approx(0.0));
  CHECK(r.g_teacher.squared_norm() == 0.0);
  for (std::size_t t = 0; t < sp.tensors.size(); ++t)
    CHECK(r.g_student.buffer(t).isApprox(ce.grad.buffer(t), 1e-12));
}

TEST_CASE("student_loss kd component vanishes when views coincide") {
  ParamStore p = init_params(Backbone::CP, 4, 5, 2, 3, 0.5);
  Rng rng(8);
  auto batch = random_triples(rng, 5, 5, 4);
  StudentLossResult r = student_loss(batch, ModelView(p), ModelView(p),
                                     plain_config(0.0, 0.5));
  CHECK(r.value.component("kd") == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.value.total == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("student_loss gradients match finite differences") {
  for (Backbone b : {Backbone::ComplEx, Backbone::CP, Backbone::RESCAL}) {
    ParamStore sp = init_params(b, 3, 5, 2, 11, 0.6);
    ParamStore tp = init_params(b, 3, 5, 2, 12, 0.6);
    PruneMask m = compute_mask(sp, 0.3);
    ModelView student(sp, &m);
    ModelView teacher(tp);
    Rng rng(13);
    auto batch = random_triples(rng, 5, 5, 4);

    LossConfig cfg = plain_config(0.4, 0.5);
    cfg.rp_weight = 0.05;
    cfg.n3_weight = 0.01;
    cfg.temperature = 1.5;

    StudentLossResult r = student_loss(batch, student, teacher, cfg);
    auto f = [&] {
      return student_loss(batch, student, teacher, cfg,
                          {.want_student_grad = false,
                           .want_teacher_grad = false})
          .value.total;
    };
    // The two views live in distinct stores, so FD against each store
    // isolates the matching partial.
    CHECK(max_grad_rel_err(sp, r.g_student, f) < 1e-5);
    CHECK(max_grad_rel_err(tp, r.g_teacher, f) < 1e-5);
  }
}

TEST_CASE("student gradient at pruned positions is exactly zero") {
  ParamStore sp = init_params(Backbone::ComplEx, 3, 5, 2, 21, 0.6);
  PruneMask m = compute_mask(sp, 0.5);
  Rng rng(14);
  auto batch = random_triples(rng, 4, 5, 4);
  StudentLossResult r = student_loss(batch, ModelView(sp, &m), ModelView(sp),
                                     plain_config(0.5, 0.5));
  for (std::size_t t = 0; t < sp.tensors.size(); ++t)
    for (Eigen::Index i = 0; i < m.bits[t].rows(); ++i)
      for (Eigen::Index j = 0; j < m.bits[t].cols(); ++j)
        if (m.bits[t](i, j) == 0.0)
          CHECK(r.g_student.buffer(t)(i, j) == 0.0);
}

TEST_CASE("teacher_loss with beta=1 is plain teacher CE") {
  ParamStore sp = init_params(Backbone::CP, 4, 5, 2, 31, 0.5);
  ParamStore tp = init_params(Backbone::CP, 4, 5, 2, 32, 0.5);
  Rng rng(15);
  auto batch = random_triples(rng, 6, 5, 4);
  TeacherLossResult r = teacher_loss(batch, ModelView(sp), ModelView(tp),
                                     plain_config(0.5, 1.0));
  CeLossResult ce = ce_loss(batch, ModelView(tp));
  CHECK(r.value.total == doctest::Approx(ce.loss));
  CHECK(r.value.component("kd") == doctest::Approx(0.0));
}

TEST_CASE("teacher_loss kd gradient is zero at the KL minimum") {
  ParamStore p = init_params(Backbone::ComplEx, 3, 5, 2, 41, 0.5);
  Rng rng(16);
  auto batch = random_triples(rng, 4, 5, 4);
  LossConfig cfg = plain_config(0.5, 0.0); // pure KD term
  TeacherLossResult r = teacher_loss(batch, ModelView(p), ModelView(p), cfg);
  CHECK(r.value.total == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::sqrt(r.g_teacher.squared_norm()) ==
        doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("teacher_loss gradient matches finite differences") {
  for (Backbone b : {Backbone::ComplEx, Backbone::CP, Backbone::RESCAL}) {
    ParamStore sp = init_params(b, 3, 5, 2, 51, 0.6);
    ParamStore tp = init_params(b, 3, 5, 2, 52, 0.6);
    PruneMask m = compute_mask(sp, 0.3);
    ModelView student(sp, &m);
    ModelView teacher(tp);
    Rng rng(17);
    auto batch = random_triples(rng, 5, 5, 4);

    LossConfig cfg = plain_config(0.5, 0.4);
    cfg.rp_weight = 0.05;
    cfg.n3_weight = 0.01;

    TeacherLossResult r = teacher_loss(batch, student, teacher, cfg);
    auto f = [&] {
      return teacher_loss(batch, student, teacher, cfg).value.total;
    };
    CHECK(max_grad_rel_err(tp, r.g_teacher, f) < 1e-5);
  }
}

TEST_CASE("ce_loss gradient matches finite differences") {
  ParamStore p = init_params(Backbone::ComplEx, 3, 5, 2, 61, 0.6);
  Rng rng(18);
  auto batch = random_triples(rng, 5, 5, 4);
  CeLossResult r = ce_loss(batch, ModelView(p));
  auto f = [&] { return ce_loss(batch, ModelView(p)).loss; };
  CHECK(max_grad_rel_err(p, r.grad, f) < 1e-5);
}

TEST_CASE("empty batch is rejected") {
  ParamStore p = init_params(Backbone::CP, 2, 3, 1, 1, 0.5);
  std::vector<Triple> none;
  CHECK_THROWS_AS(ce_loss(none, ModelView(p)), ConfigError);
}

TEST_CASE("loss config validation") {
  LossConfig c;
  CHECK_NOTHROW(c.validate());
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.alpha = 0.5;
  c.temperature = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
