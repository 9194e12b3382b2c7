#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "projreg/dual.hpp"
#include "projreg/model_io.hpp"
#include "projreg/operators.hpp"
#include "projreg/projected_operator.hpp"
#include "projreg/projection.hpp"
#include "projreg/radon.hpp"
#include "projreg/synthetic.hpp"
#include "projreg/training.hpp"
#include "projreg/variational.hpp"
#include "test_helpers.hpp"

using namespace projreg;
using testutil::random_gaussian;
using testutil::random_gaussian_vector;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("projreg-mio-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

TrainingSet dense_pairs(int range, int domain, int count, unsigned seed) {
  DenseOperator op(random_gaussian(range, domain, seed));
  std::vector<GridSignal> inputs;
  for (int i = 0; i < count; ++i) {
    inputs.emplace_back(random_gaussian_vector(domain, seed + 100 + i));
  }
  return make_pairs(op, inputs);
}

}  // namespace

TEST_CASE("projection model container round trip is exact", "[model-io]") {
  TrainingSet pairs = dense_pairs(25, 18, 14, 5000);
  // one dependent pair so the rejected list is exercised
  pairs.inputs.push_back(pairs.inputs[3]);
  pairs.outputs.push_back(pairs.outputs[3]);
  ProjectionModel model;
  model.fit(pairs);
  REQUIRE(model.size() == 14);
  REQUIRE(model.rejected_indices().size() == 1);

  TempDir dir;
  const auto path = dir.path / "proj.prjm";
  save_model(model, path);
  CHECK(peek_model_kind(path) == ModelKind::projection);

  ProjectionModel back = load_projection_model(path);
  REQUIRE(back.size() == model.size());
  CHECK(back.accepted_indices() == model.accepted_indices());
  CHECK(back.rejected_indices() == model.rejected_indices());
  CHECK(back.refresh_count() == model.refresh_count());
  for (int i = 0; i < model.size(); ++i) {
    CHECK(back.rdiag()[i] == model.rdiag()[i]);
  }
  CHECK((back.output_basis().matrix() - model.output_basis().matrix())
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((back.transformed_inputs() - model.transformed_inputs())
            .cwiseAbs()
            .maxCoeff() == 0.0);

  GridSignal y = add_noise(pairs.outputs[0], {0.05, NoiseSpec::Mode::relative, 9});
  GridSignal a = model.reconstruct(y, 9);
  GridSignal b = back.reconstruct(y, 9);
  CHECK((a - b).values.cwiseAbs().maxCoeff() == 0.0);

  // the loaded model keeps accepting pairs
  back.fit_pair(GridSignal(random_gaussian_vector(18, 5999)),
                GridSignal(random_gaussian_vector(25, 6000)));
  CHECK(back.size() == model.size() + 1);
}

TEST_CASE("dual model container round trip preserves the gram block",
          "[model-io]") {
  auto op = make_power_law_svd(20, 1.0);
  TrainingSet pairs = make_pairs(*op, [&] {
    std::vector<GridSignal> v;
    for (int i = 0; i < 12; ++i) v.emplace_back(random_gaussian_vector(20, 5100 + i));
    return v;
  }());
  DualModel model;
  model.fit(make_adjoint_pairs(*op, pairs.outputs));

  TempDir dir;
  const auto path = dir.path / "dual.prjm";
  save_model(model, path);
  CHECK(peek_model_kind(path) == ModelKind::dual);

  DualModel back = load_dual_model(path);
  REQUIRE(back.size() == model.size());
  CHECK((back.gram() - model.gram()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.transformed_adjoints() - model.transformed_adjoints())
            .cwiseAbs()
            .maxCoeff() == 0.0);
  for (int n = 1; n <= model.size(); ++n) {
    CHECK(back.smallest_singular(n) == model.smallest_singular(n));
  }
  GridSignal y = add_noise(pairs.outputs[2], {0.02, NoiseSpec::Mode::relative, 3});
  CHECK((back.reconstruct(y, 8) - model.reconstruct(y, 8))
            .values.cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("input model container round trip preserves shapes and solves",
          "[model-io]") {
  const GridShape shape{12, 12};
  RadonOperator op(shape.rows, shape.cols, uniform_angles(10));
  InputModel model;
  model.fit(make_pairs(op, synth_blob_dataset(shape, 25, 5200)));
  REQUIRE(model.size() >= 20);

  TempDir dir;
  const auto path = dir.path / "input.prjm";
  save_model(model, path);
  CHECK(peek_model_kind(path) == ModelKind::input);

  InputModel back = load_input_model(path);
  REQUIRE(back.size() == model.size());
  CHECK((back.mirrored_outputs() - model.mirrored_outputs())
            .cwiseAbs()
            .maxCoeff() == 0.0);
  REQUIRE(back.input_basis().shape().has_value());
  CHECK(back.input_basis().shape()->rows == shape.rows);
  REQUIRE(back.range_shape().has_value());
  CHECK(back.range_shape()->rows == op.range_shape()->rows);

  GridSignal y = op.apply(synth_blob_image(shape, 777));
  TikhonovResult a = solve_tikhonov(model, y, 1e-4);
  TikhonovResult b = solve_tikhonov(back, y, 1e-4);
  CHECK((a.u - b.u).values.cwiseAbs().maxCoeff() == 0.0);

  ProjectedOperator ka(model), kb(back);
  GridSignal u = synth_blob_image(shape, 778);
  CHECK((ka.apply(u) - kb.apply(u)).values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sidecar json summarises the container", "[model-io]") {
  ProjectionModel model;
  TrainingSet pairs = dense_pairs(10, 8, 5, 5300);
  model.fit(pairs);

  TempDir dir;
  const auto path = dir.path / "m.prjm";
  save_model(model, path);

  std::ifstream side(path.string() + ".json");
  REQUIRE(side.good());
  nlohmann::json j = nlohmann::json::parse(side);
  CHECK(j["format"] == "projreg-model");
  CHECK(j["version"] == 1);
  CHECK(j["kind"] == "projection");
  CHECK(j["count"] == 5);
  CHECK(j["pairs_seen"] == 5);
  CHECK(j["basis_dim"] == 10);
  CHECK(j["mirror_dim"] == 8);
}

TEST_CASE("container rejects wrong kinds and corrupt files", "[model-io]") {
  TempDir dir;
  ProjectionModel model;
  model.fit(dense_pairs(10, 8, 5, 5400));
  const auto path = dir.path / "m.prjm";
  save_model(model, path);

  CHECK_THROWS_AS(load_dual_model(path), IoError);
  CHECK_THROWS_AS(load_input_model(path), IoError);
  CHECK_THROWS_AS(load_projection_model(dir.path / "missing.prjm"), IoError);

  // truncation
  const auto cut = dir.path / "cut.prjm";
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_projection_model(cut), IoError);

  // bad magic
  const auto junk = dir.path / "junk.prjm";
  {
    std::ofstream out(junk, std::ios::binary);
    out << "not a model container at all";
  }
  CHECK_THROWS_AS(load_projection_model(junk), IoError);
  CHECK_THROWS_AS(peek_model_kind(junk), IoError);
}

TEST_CASE("empty models survive the round trip", "[model-io]") {
  TempDir dir;
  ProjectionModel model;
  const auto path = dir.path / "empty.prjm";
  save_model(model, path);
  ProjectionModel back = load_projection_model(path);
  CHECK(back.empty());
  // and it can start fitting afterwards
  TrainingSet pairs = dense_pairs(10, 8, 3, 5500);
  back.fit(pairs);
  CHECK(back.size() == 3);
}
