#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cora/datagen.hpp"
#include "cora/errors.hpp"
#include "cora/granger.hpp"
#include "cora/series.hpp"
#include "cora/windows.hpp"

using namespace cora;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cora_test_datagen_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

bool companion_stable(const std::vector<double>& a) {
  const auto p = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) c(0, j) = a[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < p; ++i) c(i, i - 1) = 1.0;
  const Eigen::VectorXcd ev = c.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (std::abs(ev(i)) >= 1.0) return false;
  return true;
}

double variance(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

SeriesFrame two_channel_frame(std::size_t n) {
  Channel x{"x", Modality::kTs, Role::kTarget, false, 1, {}};
  Channel c{"c", Modality::kTs, Role::kCovariate, false, 1, {}};
  for (std::size_t t = 0; t < n; ++t) {
    x.values.push_back(static_cast<double>(t));
    c.values.push_back(static_cast<double>(t) * 10.0);
  }
  return SeriesFrame({x, c});
}

}  // namespace

TEST_CASE("stability test agrees with companion-matrix eigenvalues") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  int stable = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> a(1 + trial % 4);
    for (auto& c : a) c = u(rng);
    const bool expected = companion_stable(a);
    CHECK(is_stable_ar(a) == expected);
    stable += expected;
  }
  CHECK(stable > 50);
  CHECK(stable < 450);
}

TEST_CASE("generator config validation") {
  GeneratorConfig c;
  c.length = 1999;
  CHECK_THROWS_AS(generate_var_dataset(c, 1), ConfigError);
  c = {};
  c.drivers.clear();
  CHECK_THROWS_AS(generate_var_dataset(c, 1), ConfigError);
  c = {};
  c.reverse_decoys.clear();
  CHECK_THROWS_AS(generate_var_dataset(c, 1), ConfigError);
  c = {};
  c.white_decoys = 0;
  CHECK_THROWS_AS(generate_var_dataset(c, 1), ConfigError);
  c = {};
  c.noise_std = 0.0;
  CHECK_THROWS_AS(generate_var_dataset(c, 1), ConfigError);
}

TEST_CASE("unstable AR specification is a generation error") {
  GeneratorConfig c;
  c.ar_coefficients = {1.5};
  CHECK_THROWS_AS(generate_var_dataset(c, 1), GenerationError);
}

TEST_CASE("random AR draws are stable") {
  GeneratorConfig c;
  c.ar_coefficients.clear();
  c.ar_order = 3;
  c.ar_scale = 0.9;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = generate_var_dataset(c, seed);
    CHECK(d.truth.target_ar.size() == 3);
    CHECK(companion_stable(d.truth.target_ar));
  }
}

TEST_CASE("default dataset layout and ground truth") {
  const auto d = generate_var_dataset({}, 4);
  CHECK(d.frame.length() == 5000);
  CHECK(d.frame.target().name == "x");
  const auto covs = d.frame.covariates();
  REQUIRE(covs.size() == 4);
  CHECK(covs[0]->name == "u");
  CHECK(covs[0]->future_known);
  CHECK(covs[1]->name == "v");
  CHECK_FALSE(covs[1]->future_known);
  REQUIRE(d.truth.covariates.size() == 4);
  CHECK(d.truth.covariates[0].causal);
  CHECK(d.truth.covariates[0].lag == 1);
  CHECK_FALSE(d.truth.covariates[1].causal);
  CHECK_FALSE(d.truth.covariates[2].causal);
  CHECK(d.truth.strongest_causal() == 0);
}

TEST_CASE("same seed gives bitwise-identical frames") {
  GeneratorConfig c;
  c.text_channel = true;
  const auto a = generate_var_dataset(c, 99);
  const auto b = generate_var_dataset(c, 99);
  REQUIRE(a.frame.channels().size() == b.frame.channels().size());
  for (std::size_t i = 0; i < a.frame.channels().size(); ++i) {
    CHECK(a.frame.channels()[i].values == b.frame.channels()[i].values);
  }
  const auto other = generate_var_dataset(c, 100);
  CHECK(other.frame.target().values != a.frame.target().values);
}

TEST_CASE("zero driver coefficients give near-zero causality for every covariate") {
  GeneratorConfig c;
  c.drivers[0].coefficients = {0.0};
  const auto d = generate_var_dataset(c, 7);
  CHECK_FALSE(d.truth.covariates[0].causal);
  const auto x = d.frame.target().values;
  for (const Channel* ch : d.frame.covariates()) {
    const double gc = granger_geweke(x, scalar_proxy(*ch), 5).gc;
    INFO(ch->name);
    CHECK(gc < 0.05);
    CHECK(gc >= -1e-6);
  }
}

TEST_CASE("a strong lag-1 driver is detected") {
  GeneratorConfig c;
  c.drivers[0].coefficients = {0.9};
  c.noise_std = 0.1;
  const auto d = generate_var_dataset(c, 3);
  const double gc = granger_geweke(d.frame.target().values, d.frame.channel("u").values, 5).gc;
  CHECK(gc > 1.0);
}

TEST_CASE("generated targets are stationary in practice") {
  GeneratorConfig random_ar;
  random_ar.ar_coefficients.clear();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (const GeneratorConfig& c : {GeneratorConfig{}, random_ar}) {
      const auto d = generate_var_dataset(c, seed);
      const std::span<const double> x = d.frame.target().values;
      const double first = variance(x.first(x.size() / 2));
      const double last = variance(x.subspan(x.size() / 2));
      CHECK(last <= 3.0 * first);
      CHECK(first <= 3.0 * last);
    }
  }
}

TEST_CASE("text channel is a vector view of the driver") {
  GeneratorConfig c;
  c.text_channel = true;
  c.text_width = 5;
  const auto d = generate_var_dataset(c, 2);
  const Channel& txt = d.frame.channel("u_txt");
  CHECK(txt.modality == Modality::kTxt);
  CHECK(txt.width == 5);
  CHECK(txt.steps() == d.frame.length());
  CHECK(txt.future_known == d.frame.channel("u").future_known);
  for (double v : txt.values) CHECK(std::abs(v) < 1.0);
}

TEST_CASE("ground truth file round trip") {
  const auto d = generate_var_dataset({}, 5);
  const fs::path dir = temp_dir("truth");
  write_ground_truth(d.truth, dir / "truth.json");
  const auto back = read_ground_truth(dir / "truth.json");
  CHECK(back.target_ar == d.truth.target_ar);
  REQUIRE(back.covariates.size() == d.truth.covariates.size());
  for (std::size_t i = 0; i < back.covariates.size(); ++i) {
    CHECK(back.covariates[i].name == d.truth.covariates[i].name);
    CHECK(back.covariates[i].causal == d.truth.covariates[i].causal);
    CHECK(back.covariates[i].coefficients == d.truth.covariates[i].coefficients);
  }
}

TEST_CASE("3-row 2-channel CSV round-trips exactly") {
  const fs::path dir = temp_dir("csv3");
  write_file(dir / "d.csv", "x,c\n1.5,-2\n0.1,3.25\n7,1e-3\n");
  write_schema({{"x", Modality::kTs, Role::kTarget, false, 1}, {"c", Modality::kTs, Role::kCovariate, true, 1}},
               default_schema_path(dir / "d.csv"));
  const SeriesFrame f = load_csv(dir / "d.csv", default_schema_path(dir / "d.csv"));
  CHECK(f.length() == 3);
  CHECK(f.target().values == std::vector<double>{1.5, 0.1, 7});
  CHECK(f.channel("c").values == std::vector<double>{-2, 3.25, 1e-3});
  CHECK(f.channel("c").future_known);

  write_csv(f, dir / "e.csv");
  const SeriesFrame g = load_csv(dir / "e.csv", default_schema_path(dir / "d.csv"));
  CHECK(g.target().values == f.target().values);
  CHECK(g.channel("c").values == f.channel("c").values);
}

TEST_CASE("generated frame round-trips through CSV") {
  GeneratorConfig c;
  c.text_channel = true;
  const auto d = generate_var_dataset(c, 8);
  const fs::path dir = temp_dir("gen");
  write_csv(d.frame, dir / "data.csv");
  write_schema(schema_of(d.frame), dir / "data.schema.json");
  const SeriesFrame back = load_csv(dir / "data.csv", dir / "data.schema.json");
  REQUIRE(back.channels().size() == d.frame.channels().size());
  for (std::size_t i = 0; i < back.channels().size(); ++i) {
    const auto& a = d.frame.channels()[i].values;
    const auto& b = back.channels()[i].values;
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) <= 1e-15 * std::max(1.0, std::abs(a[k])));
  }
}

TEST_CASE("CSV with a width-4 txt channel") {
  const fs::path dir = temp_dir("txt");
  write_file(dir / "d.csv", "step,x,doc[0],doc[1],doc[2],doc[3]\n0,1,0.1,0.2,0.3,0.4\n1,2,0.5,0.6,0.7,0.8\n");
  write_schema({{"x", Modality::kTs, Role::kTarget, false, 1}, {"doc", Modality::kTxt, Role::kCovariate, false, 4}},
               dir / "d.schema.json");
  const SeriesFrame f = load_csv(dir / "d.csv", dir / "d.schema.json");
  const Channel& doc = f.channel("doc");
  CHECK(doc.width == 4);
  CHECK(doc.steps() == 2);
  CHECK(doc.at(1)[2] == 0.7);
}

TEST_CASE("CSV errors") {
  const fs::path dir = temp_dir("errors");
  write_file(dir / "d.csv", "x,c\n1,2\n3\n");
  write_schema({{"x", Modality::kTs, Role::kTarget, false, 1}, {"c", Modality::kTs, Role::kCovariate, false, 1}},
               dir / "d.schema.json");
  try {
    load_csv(dir / "d.csv", dir / "d.schema.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  write_file(dir / "ok.csv", "x,c\n1,2\n3,4\n");
  write_schema({{"c", Modality::kTs, Role::kCovariate, false, 1}}, dir / "notarget.schema.json");
  CHECK_THROWS_AS(load_csv(dir / "ok.csv", dir / "notarget.schema.json"), SchemaError);

  write_file(dir / "bad.schema.json",
             R"({"version":1,"channels":[{"name":"x","modality":"audio","role":"target","future_known":false,"width":1}]})");
  CHECK_THROWS_AS(load_csv(dir / "ok.csv", dir / "bad.schema.json"), SchemaError);
  CHECK_THROWS_AS(parse_modality("video"), SchemaError);
}

TEST_CASE("window counts") {
  const SeriesFrame f = two_channel_frame(100);
  const WindowSet s = windows_in_range(f, 0, 100, 32, 4, 1);
  CHECK(s.size() == 65);
  CHECK(window_count(100, 32, 4, 1) == 65);
  CHECK(window_count(100, 32, 4, 3) == 22);
  CHECK(window_count(30, 32, 4, 1) == 0);

  WindowSpec single{32, 4, 1, {1.0, 0.0, 0.0}};
  const auto splits = make_windows(f, single);
  CHECK(splits.train.size() == 65);
  CHECK(splits.val.empty());
  CHECK_FALSE(splits.val.warnings.empty());
}

TEST_CASE("EPF-shaped windows") {
  const auto d = generate_var_dataset({}, 1);
  const WindowSpec epf{168, 24, 1, {0.7, 0.1, 0.2}};
  const auto splits = make_windows(d.frame, epf);
  CHECK(splits.train.size() == window_count(3500, 168, 24, 1));
  for (const auto& w : splits.test.windows) {
    CHECK(w.lookback.size() == 168);
    CHECK(w.horizon_truth.size() == 24);
  }
}

TEST_CASE("split boundaries never mix data") {
  const SeriesFrame f = two_channel_frame(1000);
  const auto s = make_windows(f, {32, 4, 1, {0.7, 0.1, 0.2}});
  auto check_set = [](const WindowSet& set, std::size_t begin, std::size_t end) {
    for (const auto& w : set.windows) {
      // the target value equals its source index
      CHECK(w.lookback.front() >= static_cast<double>(begin));
      CHECK(w.horizon_truth.back() < static_cast<double>(end));
      for (const auto& c : w.covariates) CHECK(c.values.back() < 10.0 * static_cast<double>(end));
    }
  };
  check_set(s.train, 0, 700);
  check_set(s.val, 700, 800);
  check_set(s.test, 800, 1000);
  CHECK(s.train.size() == window_count(700, 32, 4, 1));
  CHECK(s.val.size() == window_count(100, 32, 4, 1));
  CHECK(s.test.size() == window_count(200, 32, 4, 1));
  double max_train = 0.0;
  for (const auto& w : s.train.windows) max_train = std::max(max_train, w.horizon_truth.back());
  double min_test = 1e9;
  for (const auto& w : s.test.windows) min_test = std::min(min_test, w.horizon_truth.front());
  CHECK(max_train < min_test);
}

TEST_CASE("future-known covariates extend to the horizon") {
  const auto d = generate_var_dataset({}, 1);
  const auto s = make_windows(d.frame, {96, 24, 1, {0.7, 0.1, 0.2}});
  const auto& w = s.train.windows[10];
  for (const auto& c : w.covariates) CHECK(c.steps() == (c.future_known ? 120u : 96u));
}

TEST_CASE("window errors") {
  const SeriesFrame f = two_channel_frame(50);
  CHECK_THROWS_AS(make_windows(f, {48, 4, 1, {0.7, 0.1, 0.2}}), InputError);
  CHECK_THROWS_AS(make_windows(f, {8, 4, 1, {0.7, 0.1, 0.1}}), InputError);
}

TEST_CASE("normalization examples") {
  ForecastWindow w;
  w.lookback = {5, 5, 5, 5};
  w.horizon_truth = {5, 6};
  ForecastWindow n = normalize_window(w);
  for (double v : n.lookback) CHECK(v == 0.0);
  CHECK(n.norm.mean == 5.0);
  CHECK(n.norm.std == 1e-8);

  w.lookback = {0, 2};
  w.horizon_truth = {4};
  n = normalize_window(w);
  CHECK(n.norm.mean == 1.0);
  CHECK(n.norm.std == 1.0);
  CHECK(n.lookback == std::vector<double>{-1, 1});
  CHECK(n.horizon_truth == std::vector<double>{3});
}

TEST_CASE("normalization is invertible and leaves vector channels alone") {
  GeneratorConfig c;
  c.text_channel = true;
  const auto d = generate_var_dataset(c, 6);
  const auto s = make_windows(d.frame, {96, 24, 7, {0.7, 0.1, 0.2}});
  for (const auto& w : s.train.windows) {
    const ForecastWindow n = normalize_window(w);
    const ForecastWindow back = denormalize_window(n);
    for (std::size_t i = 0; i < w.lookback.size(); ++i) CHECK(std::abs(back.lookback[i] - w.lookback[i]) <= 1e-10);
    for (std::size_t i = 0; i < w.horizon_truth.size(); ++i)
      CHECK(std::abs(back.horizon_truth[i] - w.horizon_truth[i]) <= 1e-10);
    for (std::size_t k = 0; k < w.covariates.size(); ++k) {
      if (w.covariates[k].modality == Modality::kTxt) CHECK(n.covariates[k].values == w.covariates[k].values);
      for (std::size_t i = 0; i < w.covariates[k].values.size(); ++i)
        CHECK(std::abs(back.covariates[k].values[i] - w.covariates[k].values[i]) <= 1e-10);
    }
  }
}
