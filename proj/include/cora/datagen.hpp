#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cora/series.hpp"

namespace cora {

/// Exogenous driver u entering the target at lags 1..k with `coefficients`.
/// u itself is AR(1) with unit marginal variance.
struct DriverSpec {
  std::string name = "u";
  std::vector<double> coefficients{1.0};
  double persistence = 0.0;
  bool future_known = true;
};

/// Decoy driven by the target: v_t = coupling * x_{t-1} + noise.
struct ReverseDecoySpec {
  std::string name = "v";
  double coupling = 0.8;
  double noise_std = 1.0;
};

struct GeneratorConfig {
  std::size_t length = 5000;
  std::size_t burn_in = 200;
  /// Fixed target AR coefficients. When empty, `ar_order` coefficients are
  /// drawn from U(-ar_scale, ar_scale) until the polynomial is stable.
  std::vector<double> ar_coefficients{0.5};
  std::size_t ar_order = 2;
  double ar_scale = 0.6;
  double noise_std = 0.5;
  std::vector<DriverSpec> drivers{DriverSpec{}};
  std::vector<ReverseDecoySpec> reverse_decoys{ReverseDecoySpec{}};
  std::size_t white_decoys = 2;
  bool white_future_known = true;
  /// Optional txt channel: per step, tanh(R * u_t + r) with R, r fixed per seed.
  bool text_channel = false;
  std::size_t text_width = 8;
  std::string text_name = "u_txt";

  void validate() const;
};

enum class CovariateKind { kDriver, kReverseDecoy, kWhiteDecoy, kTextView };

std::string_view to_string(CovariateKind k);

struct CovariateTruth {
  std::string name;
  CovariateKind kind = CovariateKind::kWhiteDecoy;
  bool causal = false;
  /// Coefficients on lags 1..k of this channel in the target equation.
  std::vector<double> coefficients;
  /// Largest lag with a nonzero coefficient; 0 for non-causal channels.
  std::size_t lag = 0;
};

struct GroundTruthCausality {
  std::vector<double> target_ar;
  double noise_std = 0.0;
  std::vector<CovariateTruth> covariates;

  /// Index (among covariates, frame order) of the strongest planted driver.
  std::size_t strongest_causal() const;
};

struct GeneratedData {
  SeriesFrame frame;
  GroundTruthCausality truth;
};

/// True iff every root of z^p - a_1 z^{p-1} - ... - a_p lies inside the unit
/// circle (step-down / Schur-Cohn recursion).
bool is_stable_ar(std::span<const double> coefficients);

/// Deterministic per seed. Throws GenerationError when no stable AR
/// polynomial is found within 100 attempts.
GeneratedData generate_var_dataset(const GeneratorConfig& config, std::uint64_t seed);

void write_ground_truth(const GroundTruthCausality& truth, const std::filesystem::path& path);
GroundTruthCausality read_ground_truth(const std::filesystem::path& path);

}  // namespace cora
