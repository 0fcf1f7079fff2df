#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>

#include "cora/backbone.hpp"
#include "cora/datagen.hpp"
#include "cora/embedding.hpp"
#include "cora/errors.hpp"
#include "cora/json_io.hpp"
#include "cora/windows.hpp"

using namespace cora;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  GeneratedData data;
  WindowSplits splits;
};

Fixture ar_fixture(double a, std::uint64_t seed) {
  GeneratorConfig c;
  c.ar_coefficients = {a};
  c.drivers[0].coefficients = {0.0};
  Fixture f{generate_var_dataset(c, seed), {}};
  f.splits = make_windows(f.data.frame, {96, 24, 4, {0.7, 0.1, 0.2}});
  return f;
}

// Last-value-repeat forecast scored in the same normalized space the backbone uses.
double naive_mse(const WindowSet& set) {
  double se = 0.0;
  std::size_t n = 0;
  for (const auto& raw : set.windows) {
    const ForecastWindow w = normalize_window(raw);
    for (double y : w.horizon_truth) {
      se += (y - w.lookback.back()) * (y - w.lookback.back());
      ++n;
    }
  }
  return se / static_cast<double>(n);
}

BackboneArtifact untrained(const BackboneArch& arch, std::uint64_t seed) {
  return BackboneArtifact(arch, init_backbone_weights(arch, seed), {});
}

}  // namespace

TEST_CASE("pretraining on AR(1) beats the last-value forecast") {
  const Fixture f = ar_fixture(0.9, 11);
  const BackboneArtifact bb = pretrain_backbone(f.splits.train, f.splits.val, {}, {}, 1);
  CHECK(bb.metadata().final_val_mse < naive_mse(f.splits.val));
  CHECK(backbone_mse(bb, f.splits.test) < naive_mse(f.splits.test));
  CHECK(bb.metadata().val_mse.size() == PretrainConfig{}.epochs);
  CHECK(bb.frozen());
}

TEST_CASE("zero-epoch pretraining keeps the initialization") {
  const Fixture f = ar_fixture(0.5, 2);
  const BackboneArch arch;
  const BackboneArtifact bb = pretrain_backbone(f.splits.train, f.splits.val, arch, {0, 32, 1e-3}, 5);
  const BackboneArtifact init = untrained(arch, 5);
  CHECK(bb.content_hash() == init.content_hash());
  CHECK(bb.extract_ts_embeddings(f.splits.test.windows[0].lookback).rows() == 6);
}

TEST_CASE("pretraining is deterministic per seed") {
  const Fixture f = ar_fixture(0.7, 3);
  const PretrainConfig cfg{3, 32, 1e-3};
  const BackboneArtifact a = pretrain_backbone(f.splits.train, f.splits.val, {}, cfg, 9);
  const BackboneArtifact b = pretrain_backbone(f.splits.train, f.splits.val, {}, cfg, 9);
  const BackboneArtifact c = pretrain_backbone(f.splits.train, f.splits.val, {}, cfg, 10);
  CHECK(a.content_hash() == b.content_hash());
  CHECK(a.weights().head_w == b.weights().head_w);
  CHECK(a.content_hash() != c.content_hash());
}

TEST_CASE("pretraining errors") {
  const Fixture f = ar_fixture(0.5, 4);
  BackboneArch odd;
  odd.patch = 10;
  CHECK_THROWS_AS(pretrain_backbone(f.splits.train, f.splits.val, odd, {1, 32, 1e-3}, 1), InputError);
  CHECK_THROWS_AS(pretrain_backbone(WindowSet{}, f.splits.val, {}, {1, 32, 1e-3}, 1), InputError);
  try {
    pretrain_backbone(f.splits.train, f.splits.val, {}, {5, 32, 1e200}, 1);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("gaussian head trains and exposes log-std") {
  const Fixture f = ar_fixture(0.8, 5);
  BackboneArch arch;
  arch.gaussian_head = true;
  const BackboneArtifact bb = pretrain_backbone(f.splits.train, f.splits.val, arch, {3, 32, 1e-3}, 2);
  const Tensor2 emb = extract_target_embedding(bb, normalize_window(f.splits.test.windows[0]).lookback);
  const Tensor2 ls = bb.log_std_head(emb);
  CHECK(ls.cols() == arch.h_max);
  CHECK(ls.all_finite());
  CHECK_THROWS_AS(untrained({}, 1).log_std_head(emb), ContractError);
}

TEST_CASE("per-patch embedding extraction") {
  const BackboneArtifact bb = untrained({}, 3);
  std::vector<double> s(16);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sin(0.3 * static_cast<double>(i));
  const Tensor2 one = bb.extract_ts_embeddings(s);
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 32);
  CHECK(bb.extract_ts_embeddings(s) == one);

  std::vector<double> shifted = s;
  for (auto& v : shifted) v = 3.0 * v + 2.0;
  CHECK(max_abs_diff(bb.extract_ts_embeddings(shifted), one) > 1e-3);

  // a leading remainder shorter than a patch is dropped
  std::vector<double> longer = {9.0, -9.0, 4.0};
  longer.insert(longer.end(), s.begin(), s.end());
  CHECK(bb.extract_ts_embeddings(longer) == one);

  CHECK_THROWS_AS(bb.extract_ts_embeddings(std::vector<double>(15, 1.0)), InputError);
  CHECK(bb.extract_ts_embeddings(std::vector<double>(96, 0.5)).rows() == 6);
}

TEST_CASE("aggregation rules") {
  const Tensor2 steps = Tensor2::from_rows({{1, 2}, {3, 4}, {5, 6}});
  CHECK(aggregate_embedding(steps, Modality::kTs) == Tensor2::from_rows({{5, 6}}));
  const Tensor2 same = Tensor2::from_rows({{0.25, -1}, {0.25, -1}});
  CHECK(aggregate_embedding(same, Modality::kTxt) == Tensor2::from_rows({{0.25, -1}}));
  CHECK(aggregate_embedding(Tensor2::from_rows({{0, 2}, {2, 0}}), Modality::kImg) == Tensor2::from_rows({{1, 1}}));
  CHECK_THROWS_AS(aggregate_embedding(Tensor2(0, 2), Modality::kTs), InputError);
}

TEST_CASE("target embedding is the last patch embedding") {
  const BackboneArtifact bb = untrained({}, 4);
  std::vector<double> lookback(96);
  for (std::size_t i = 0; i < lookback.size(); ++i) lookback[i] = std::cos(0.1 * static_cast<double>(i));
  const Tensor2 e = extract_target_embedding(bb, lookback);
  CHECK(e == aggregate_embedding(bb.extract_ts_embeddings(lookback), Modality::kTs));
  CHECK(e.cols() == bb.embedding_dim());
  CHECK(extract_target_embedding(bb, lookback) == e);
}

TEST_CASE("foreign provider") {
  const ForeignProvider p({3, 4, 7});
  const Tensor2 out = p.embed_rows(Tensor2(5, 3, 0.0));
  CHECK(out.cols() == 4);
  for (std::size_t r = 1; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(out(r, c) == out(0, c));
  const Tensor2 again = ForeignProvider({3, 4, 7}).embed_rows(Tensor2(1, 3, 0.0));
  CHECK(slice_rows(out, 0, 1) == again);

  ChannelSlice bad{"doc", Modality::kTxt, 2, false, {1, 2, 3, 4}};
  CHECK_THROWS_AS(p.embed(bad), SchemaError);
}

TEST_CASE("text embeddings preserve the driver signal") {
  GeneratorConfig c;
  c.text_channel = true;
  const auto d = generate_var_dataset(c, 12);
  const Channel& txt = d.frame.channel("u_txt");
  const Channel& u = d.frame.channel("u");
  const ForeignProvider p({txt.width, 16, 3});
  const Tensor2 emb = p.embed_rows(Tensor2(txt.steps(), txt.width, txt.values));

  // least-squares probe from [1, embedding] to u_t
  const auto n = static_cast<Eigen::Index>(emb.rows());
  Eigen::MatrixXd x(n, 17);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < 16; ++j) x(i, j + 1) = emb(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    y(i) = u.values[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  const double ss_res = (y - x * beta).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
  CHECK(1.0 - ss_res / ss_tot > 0.5);
}

TEST_CASE("head truncation") {
  const BackboneArtifact bb = untrained({}, 6);
  const Tensor2 e = extract_target_embedding(bb, std::vector<double>(32, 0.3));
  const Tensor2 full = bb.head(e);
  CHECK(head_forecast(bb, e, 64) == full);
  const Tensor2 first = head_forecast(bb, e, 1);
  CHECK(first.cols() == 1);
  CHECK(first[0] == full[0]);
  CHECK_THROWS_AS(head_forecast(bb, e, 65), ContractError);
  CHECK_THROWS_AS(head_forecast(bb, e, 0), ContractError);
}

TEST_CASE("zero embedding through a zero head is a zero forecast") {
  const BackboneArch arch;
  BackboneWeights w = init_backbone_weights(arch, 1);
  w.head_w.fill(0.0);
  w.head_b.fill(0.0);
  const BackboneArtifact bb(arch, w, {});
  const Tensor2 f = head_forecast(bb, Tensor2(1, 32, 0.0), 24);
  for (double v : f.data()) CHECK(v == 0.0);
}

TEST_CASE("artifact rejects malformed weights") {
  BackboneWeights w = init_backbone_weights({}, 1);
  w.head_w = Tensor2(3, 3);
  CHECK_THROWS_AS(BackboneArtifact({}, w, {}), DimensionError);
}

TEST_CASE("checkpoint round trip is bit-exact and hash-verified") {
  const Fixture f = ar_fixture(0.6, 8);
  BackboneArch arch;
  arch.gaussian_head = true;
  const BackboneArtifact bb = pretrain_backbone(f.splits.train, f.splits.val, arch, {2, 32, 1e-3}, 4);
  const fs::path dir = fs::temp_directory_path() / "cora_test_backbone";
  fs::create_directories(dir);
  save_backbone(bb, dir / "bb.json");
  const BackboneArtifact back = load_backbone(dir / "bb.json");
  CHECK(back.content_hash() == bb.content_hash());
  const auto a = bb.weights().named();
  const auto b = back.weights().named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
  CHECK(back.metadata().val_mse == bb.metadata().val_mse);
  CHECK(back.arch().gaussian_head);

  Json doc = read_json_file(dir / "bb.json");
  doc["weights"]["head_b"]["data"][0] = 123.0;
  write_json_file(doc, dir / "tampered.json");
  CHECK_THROWS_AS(load_backbone(dir / "tampered.json"), ParseError);
  CHECK_THROWS_AS(load_backbone(dir / "missing.json"), InputError);
}
