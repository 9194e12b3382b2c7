#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "projreg/operators.hpp"
#include "projreg/projected_operator.hpp"
#include "projreg/projection.hpp"
#include "projreg/radon.hpp"
#include "projreg/training.hpp"
#include "projreg/variational.hpp"
#include "test_helpers.hpp"

using namespace projreg;
using testutil::random_gaussian;
using testutil::random_gaussian_vector;
using testutil::random_orthonormal;
using testutil::rel_err;

namespace {

std::vector<GridSignal> gaussian_inputs(int dim, int count, unsigned base_seed) {
  std::vector<GridSignal> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.emplace_back(random_gaussian_vector(dim, base_seed + i));
  }
  return out;
}

struct DenseInstance {
  DenseOperator op;
  TrainingSet pairs;
  InputModel model;

  DenseInstance(int range, int domain, int count, unsigned seed)
      : op(random_gaussian(range, domain, seed)) {
    pairs = make_pairs(op, gaussian_inputs(domain, count, seed + 100));
    model.fit(pairs);
  }
};

double tv_objective(const LinearOperator& op, const GridSignal& y,
                    const GridSignal& u, double alpha) {
  return 0.5 * (op.apply(u) - y).values.squaredNorm() + alpha * tv_value(u);
}

}  // namespace

TEST_CASE("input-side fit keeps orthonormal inputs and their outputs unchanged",
          "[variational]") {
  const int dim = 20, count = 6;
  DenseOperator op(random_gaussian(28, dim, 31));
  Eigen::MatrixXd q = random_orthonormal(dim, count, 32);
  std::vector<GridSignal> inputs;
  for (int i = 0; i < count; ++i) inputs.emplace_back(Eigen::VectorXd(q.col(i)));
  TrainingSet pairs = make_pairs(op, inputs);
  InputModel model;
  model.fit(pairs);

  REQUIRE(model.size() == count);
  for (int i = 0; i < count; ++i) {
    CHECK((model.input_basis().vector(i) - pairs.inputs[i]).values.norm() <= 1e-12);
    CHECK(rel_err(model.mirrored_output(i).values, pairs.outputs[i].values) <= 1e-10);
    CHECK(model.rdiag()[i] == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("input-side fit on singular-vector pairs yields scaled left vectors",
          "[variational]") {
  const int dim = 12;
  auto op = make_power_law_svd(dim, 1.0);
  std::vector<GridSignal> inputs;
  for (int i = 0; i < dim; ++i) inputs.push_back(op->right_vector(i));
  TrainingSet pairs = make_pairs(*op, inputs);
  InputModel model;
  model.fit(pairs);

  REQUIRE(model.size() == dim);
  for (int i = 0; i < dim; ++i) {
    CHECK((model.input_basis().vector(i) - op->right_vector(i)).values.norm() <= 1e-12);
    Eigen::VectorXd expected = op->sigma()[i] * op->left_vector(i).values;
    CHECK((model.mirrored_output(i).values - expected).norm() <= 1e-12);
  }
}

TEST_CASE("mirrored outputs satisfy the operator identity", "[variational]") {
  DenseInstance inst(24, 16, 10, 210);
  REQUIRE(inst.model.size() == 10);
  for (int i = 0; i < inst.model.size(); ++i) {
    GridSignal lhs = inst.op.apply(inst.model.input_basis().vector(i));
    CHECK(rel_err(lhs.values, inst.model.mirrored_output(i).values) <= 1e-8);
  }
}

TEST_CASE("projected operator matches the dense materialisation of A P_n",
          "[variational]") {
  DenseInstance inst(24, 16, 10, 500);
  Eigen::Ref<const Eigen::MatrixXd> q = inst.model.input_basis().matrix();
  for (int n : {1, 4, 10}) {
    ProjectedOperator k(inst.model, n);
    Eigen::MatrixXd learned = materialise(k);
    Eigen::MatrixXd oracle =
        inst.op.matrix() * (q.leftCols(n) * q.leftCols(n).transpose());
    CHECK((learned - oracle).norm() <= 1e-10 * oracle.norm());
  }

  ProjectedOperator k(inst.model);
  SECTION("first basis vector maps to its mirrored output") {
    GridSignal out = k.apply(inst.model.input_basis().vector(0));
    CHECK((out.values - inst.model.mirrored_output(0).values).norm() <= 1e-12);
  }
  SECTION("directions orthogonal to the fitted span are annihilated") {
    Eigen::VectorXd g = random_gaussian_vector(16, 501);
    Eigen::VectorXd w = g - q * (q.transpose() * g);
    REQUIRE(w.norm() > 1e-6);
    CHECK(k.apply(GridSignal(w)).values.norm() <= 1e-8);
  }
}

TEST_CASE("projected operator satisfies the adjoint pairing", "[variational]") {
  DenseInstance inst(24, 16, 10, 620);
  ProjectedOperator k(inst.model, 7);
  for (int trial = 0; trial < 20; ++trial) {
    GridSignal u(random_gaussian_vector(16, 700 + trial));
    GridSignal z(random_gaussian_vector(24, 800 + trial));
    const double lhs = inner(k.apply(u), z);
    const double rhs = inner(u, k.adjoint_apply(z));
    CHECK(std::abs(lhs - rhs) <=
          1e-10 * std::max(1.0, std::max(std::abs(lhs), std::abs(rhs))));
  }
}

TEST_CASE("projected operator rejects invalid sizes and truncations", "[variational]") {
  DenseInstance inst(24, 16, 5, 910);
  CHECK_THROWS_AS(ProjectedOperator(inst.model, 0), DimensionError);
  CHECK_THROWS_AS(ProjectedOperator(inst.model, 6), DimensionError);
  InputModel empty;
  CHECK_THROWS_AS(ProjectedOperator(empty), NumericalError);
  ProjectedOperator k(inst.model);
  CHECK_THROWS_AS(k.apply(GridSignal(Eigen::VectorXd::Zero(3))), DimensionError);
  CHECK_THROWS_AS(k.adjoint_apply(GridSignal(Eigen::VectorXd::Zero(3))), DimensionError);
}

TEST_CASE("tikhonov solution satisfies first-order optimality", "[variational]") {
  DenseInstance inst(24, 16, 10, 1030);
  GridSignal u_true(random_gaussian_vector(16, 1031));
  GridSignal y = inst.op.apply(u_true);
  y = add_noise(y, NoiseSpec{1e-2, NoiseSpec::Mode::relative, 77});

  const double alpha = 1e-3;
  TikhonovResult res = solve_tikhonov(inst.model, y, alpha);

  Eigen::Ref<const Eigen::MatrixXd> m = inst.model.mirrored_outputs();
  Eigen::MatrixXd normal = m.transpose() * m;
  normal.diagonal().array() += 2.0 * alpha;
  Eigen::VectorXd rhs = m.transpose() * y.values;
  CHECK((normal * res.coefficients - rhs).norm() <= 1e-10 * rhs.norm());

  ProjectedOperator k(inst.model);
  Eigen::VectorXd grad =
      k.adjoint_apply(k.apply(res.u) - y).values + 2.0 * alpha * res.u.values;
  CHECK(grad.norm() <= 1e-8 * std::max(1.0, rhs.norm()));

  CHECK(residual_norm(inst.model.input_basis(), res.u) <= 1e-10 * norm(res.u));
}

TEST_CASE("tikhonov solution norm decreases to zero as alpha grows", "[variational]") {
  DenseInstance inst(24, 16, 10, 1140);
  GridSignal y(random_gaussian_vector(24, 1141));
  double prev = std::numeric_limits<double>::infinity();
  std::vector<double> norms;
  for (double alpha : {1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6}) {
    const double value = norm(solve_tikhonov(inst.model, y, alpha).u);
    CHECK(value <= prev + 1e-15);
    prev = value;
    norms.push_back(value);
  }
  CHECK(norms.back() <= 1e-5 * norms.front());
}

TEST_CASE("tikhonov recovers span solutions from clean data as alpha vanishes",
          "[variational]") {
  DenseInstance inst(24, 16, 10, 1250);
  Eigen::VectorXd weights = random_gaussian_vector(10, 1251);
  Eigen::VectorXd truth = Eigen::VectorXd::Zero(16);
  for (int i = 0; i < 10; ++i) truth += weights[i] * inst.pairs.inputs[i].values;
  GridSignal y = inst.op.apply(GridSignal(truth));

  TikhonovResult res = solve_tikhonov(inst.model, y, 1e-12);
  CHECK(rel_err(res.u.values, truth) <= 1e-6);
}

TEST_CASE("variational problem wrapper validates penalty and alpha", "[variational]") {
  DenseInstance inst(24, 16, 6, 1360);
  GridSignal y(random_gaussian_vector(24, 1361));

  VariationalProblem p{ProjectedOperator(inst.model), y, 1e-3, Penalty::tikhonov, {}};
  TikhonovResult direct = solve_tikhonov(inst.model, y, 1e-3);
  CHECK((solve_tikhonov(p).u - direct.u).values.norm() <= 1e-14);

  p.penalty = Penalty::tv;
  CHECK_THROWS_AS(solve_tikhonov(p), ConfigError);
  CHECK_THROWS_AS(solve_tv(p), ConfigError);  // no grid shape anywhere
  p.penalty = Penalty::tikhonov;
  p.alpha = 0.0;
  CHECK_THROWS_AS(solve_tikhonov(p), ConfigError);
}

TEST_CASE("choose_alpha applies the linear rule with a positive floor",
          "[variational]") {
  CHECK(choose_alpha(1e-2, 1e-3, 2.0) == Catch::Approx(2.0 * 1.1e-2).epsilon(1e-12));
  CHECK(choose_alpha(2e-3, 0.0) == Catch::Approx(2.0 * choose_alpha(1e-3, 0.0)).epsilon(1e-12));
  CHECK(choose_alpha(0.0, 0.0) == 1e-14);
  CHECK_THROWS_AS(choose_alpha(-1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(choose_alpha(0.0, -1.0), ConfigError);
  CHECK_THROWS_AS(choose_alpha(1.0, 1.0, 0.0), ConfigError);
}

TEST_CASE("output span distance measures the off-span component", "[variational]") {
  DenseInstance inst(24, 16, 8, 1470);
  ProjectionModel outputs;
  outputs.fit(inst.pairs);
  Eigen::Ref<const Eigen::MatrixXd> q = outputs.output_basis().matrix();

  GridSignal in_span(Eigen::VectorXd(q * random_gaussian_vector(8, 1471)));
  CHECK(output_span_distance(outputs.output_basis(), in_span) <= 1e-10 * norm(in_span));

  Eigen::VectorXd g = random_gaussian_vector(24, 1472);
  Eigen::VectorXd off = g - q * (q.transpose() * g);
  GridSignal mixed(Eigen::VectorXd(in_span.values + off));
  CHECK(output_span_distance(outputs.output_basis(), mixed) ==
        Catch::Approx(off.norm()).epsilon(1e-10));
}

TEST_CASE("tv solve recovers a constant image exactly flat", "[variational]") {
  const GridShape shape{8, 8};
  RadonOperator op(shape.rows, shape.cols, uniform_angles(10));
  std::vector<GridSignal> inputs;
  GridSignal flat(Eigen::VectorXd::Ones(shape.pixels()), shape);
  inputs.push_back(flat);
  for (int i = 0; i < 20; ++i) {
    GridSignal g(random_gaussian_vector(shape.pixels(), 1600 + i));
    g.shape = shape;
    inputs.push_back(g);
  }
  TrainingSet pairs = make_pairs(op, inputs);
  InputModel model;
  model.fit(pairs);
  REQUIRE(model.size() == 21);

  GridSignal truth(Eigen::VectorXd::Constant(shape.pixels(), 0.5), shape);
  GridSignal y = op.apply(truth);

  ProjectedOperator k(model);
  TvOptions opt;
  opt.alpha = 1e-3;
  opt.tolerance = 1e-11;
  opt.max_iterations = 60000;
  TvResult res = solve_tv(k, y, opt);

  INFO("iterations=" << res.iterations << " residual=" << res.residual);
  CHECK(tv_value(res.u) <= 1e-6);
  CHECK((k.apply(res.u) - y).values.norm() <= 1e-4);
  CHECK(rel_err(res.u.values, truth.values) <= 1e-5);
}

TEST_CASE("tv solve with vanishing alpha matches the least squares solution",
          "[variational]") {
  const GridShape shape{4, 4};
  RadonOperator op(shape.rows, shape.cols, uniform_angles(8));
  std::vector<GridSignal> inputs;
  for (int i = 0; i < 16; ++i) {
    GridSignal g(random_gaussian_vector(shape.pixels(), 1700 + i));
    g.shape = shape;
    inputs.push_back(g);
  }
  TrainingSet pairs = make_pairs(op, inputs);
  InputModel model;
  model.fit(pairs);
  REQUIRE(model.size() == 16);  // full rank: projected operator equals A

  GridSignal truth(random_gaussian_vector(shape.pixels(), 1750));
  truth.shape = shape;
  GridSignal y = op.apply(truth);

  ProjectedOperator k(model);
  TvOptions opt;
  opt.alpha = 1e-12;
  opt.tolerance = 1e-12;
  opt.max_iterations = 40000;
  TvResult res = solve_tv(k, y, opt);
  TikhonovResult tik = solve_tikhonov(model, y, 1e-12);

  INFO("iterations=" << res.iterations << " residual=" << res.residual);
  CHECK(rel_err(res.u.values, tik.u.values) <= 1e-5);
  CHECK(rel_err(res.u.values, truth.values) <= 1e-5);
}

TEST_CASE("tv objective at the solution beats reference candidates", "[variational]") {
  const GridShape shape{8, 8};
  RadonOperator op(shape.rows, shape.cols, uniform_angles(12));
  TrainingSet pairs;
  {
    std::vector<GridSignal> inputs;
    for (int i = 0; i < 30; ++i) {
      GridSignal g(random_gaussian_vector(shape.pixels(), 1800 + i));
      g.shape = shape;
      inputs.push_back(g);
    }
    pairs = make_pairs(op, inputs);
  }
  InputModel model;
  model.fit(pairs);
  GridSignal truth(random_gaussian_vector(shape.pixels(), 1880));
  truth.shape = shape;
  GridSignal y = add_noise(op.apply(truth), NoiseSpec{1e-2, NoiseSpec::Mode::relative, 9});

  ProjectedOperator k(model);
  const double alpha = 1e-3;
  TvOptions opt;
  opt.alpha = alpha;
  opt.tolerance = 1e-9;
  opt.max_iterations = 20000;
  TvResult res = solve_tv(k, y, opt);

  GridSignal zero = GridSignal::zeros(shape);
  GridSignal backprojection = k.adjoint_apply(y);
  const double at_solution = tv_objective(k, y, res.u, alpha);
  CHECK(at_solution <= tv_objective(k, y, zero, alpha) + 1e-12);
  CHECK(at_solution <= tv_objective(k, y, backprojection, alpha) + 1e-12);
  CHECK(at_solution == Catch::Approx(res.objective).epsilon(1e-9));
}

TEST_CASE("tv solve reports non-convergence and returns a finite iterate",
          "[variational]") {
  const GridShape shape{4, 4};
  RadonOperator op(shape.rows, shape.cols, uniform_angles(6));
  std::vector<GridSignal> inputs;
  for (int i = 0; i < 8; ++i) {
    GridSignal g(random_gaussian_vector(shape.pixels(), 1900 + i));
    g.shape = shape;
    inputs.push_back(g);
  }
  InputModel model;
  model.fit(make_pairs(op, inputs));
  GridSignal y = op.apply(inputs[0]);

  ProjectedOperator k(model);
  TvOptions opt;
  opt.alpha = 1e-3;
  opt.tolerance = 1e-16;
  opt.max_iterations = 5;
  TvResult res = solve_tv(k, y, opt);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations == 5);
  CHECK(res.u.all_finite());
  CHECK(res.residual > 0.0);
}

TEST_CASE("learned operator converges to the true operator as n grows",
          "[variational]") {
  const GridShape shape{8, 8};
  RadonOperator op(shape.rows, shape.cols, uniform_angles(12));
  std::vector<GridSignal> inputs;
  for (int i = 0; i < 40; ++i) {
    GridSignal g(random_gaussian_vector(shape.pixels(), 2000 + i));
    g.shape = shape;
    inputs.push_back(g);
  }
  InputModel model;
  model.fit(make_pairs(op, inputs));
  REQUIRE(model.size() == 40);
  const Eigen::MatrixXd a = materialise(op);

  SECTION("operator-norm error is non-increasing (projection nesting)") {
    double prev = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= model.size(); ++n) {
      ProjectedOperator k(model, n);
      const double err =
          (a - materialise(k)).jacobiSvd().singularValues()[0];
      CHECK(err <= prev + 1e-10);
      prev = err;
    }
  }

  SECTION("per-input error trend on validation inputs") {
    Eigen::Ref<const Eigen::MatrixXd> q = model.input_basis().matrix();
    for (unsigned seed : {2100u, 2101u, 2102u}) {
      GridSignal u(random_gaussian_vector(shape.pixels(), seed));
      u.shape = shape;
      GridSignal exact = op.apply(u);
      double prev_neglect = std::numeric_limits<double>::infinity();
      std::vector<double> errs;
      for (int n = 1; n <= model.size(); ++n) {
        ProjectedOperator k(model, n);
        errs.push_back((k.apply(u) - exact).values.norm());
        // the neglected input component shrinks monotonically with nesting
        const double neglected =
            (u.values - q.leftCols(n) * (q.leftCols(n).transpose() * u.values))
                .norm();
        CHECK(neglected <= prev_neglect + 1e-12);
        prev_neglect = neglected;
      }
      CHECK(errs.back() <= 0.75 * errs.front());
    }
  }
}

TEST_CASE("quadratic penalty obeys the bregman rate along the alpha schedule",
          "[variational]") {
  // Ill-posed instance: power-law spectrum rich around every alpha in the
  // schedule, so the O(alpha) rate is tight rather than superconvergent.
  const int dim = 100;
  auto op = make_power_law_svd(dim, 1.0);
  TrainingSet pairs = make_pairs(*op, gaussian_inputs(dim, dim, 2200));
  InputModel model;
  model.fit(pairs);
  REQUIRE(model.size() == dim);  // full rank so the source element is in span

  GridSignal q_src(random_gaussian_vector(dim, 2201));
  GridSignal u_true = op->adjoint_apply(q_src);
  GridSignal y_clean = op->apply(u_true);

  ProjectionModel outputs;
  outputs.fit(pairs);

  const std::vector<double> deltas = {1e-4, 1e-3, 1e-2, 1e-1};
  std::vector<double> ratios;
  for (size_t i = 0; i < deltas.size(); ++i) {
    const double delta_abs = deltas[i] * norm(y_clean);
    GridSignal y = add_noise(y_clean, NoiseSpec{delta_abs, NoiseSpec::Mode::absolute,
                                                2300 + static_cast<unsigned>(i)});
    const double rho = output_span_distance(outputs.output_basis(), y);
    const double alpha = choose_alpha(delta_abs, rho);
    TikhonovResult res = solve_tikhonov(model, y, alpha);
    const double bregman = 0.5 * (res.u - u_true).values.squaredNorm();
    ratios.push_back(bregman / alpha);
    // boundedness along the schedule: no blow-up in norm
    CHECK(norm(res.u) <= 10.0 * norm(u_true));
  }
  const double fitted = ratios.front();  // smallest delta fixes the constant
  for (double r : ratios) {
    CHECK(r <= 2.0 * fitted);
  }
}
