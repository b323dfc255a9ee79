#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protoseg/data/case.hpp"
#include "protoseg/model/config.hpp"

namespace protoseg::verify {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  /// Measured error (or other figure of merit) and the bound it was held to.
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  /// Random instances per oracle family.
  int instances = 100;
  /// Random model configurations for the normalization suite.
  int configs = 20;
  /// Flips the sign of the cross-attention gradient inside the gradient suite.
  bool inject_cross_attention_fault = false;
};

/// gradient, oracle, metrics, normalization, shape, determinism.
const std::vector<std::string>& suite_names();

/// Throws ConfigError for an unknown name.
std::vector<CheckResult> run_suite(const std::string& name, const SuiteOptions& options);

std::vector<CheckResult> gradient_suite(const SuiteOptions& options);
std::vector<CheckResult> oracle_suite(const SuiteOptions& options);
std::vector<CheckResult> metrics_suite(const SuiteOptions& options);
std::vector<CheckResult> normalization_suite(const SuiteOptions& options);
/// Full forward at `grid`^3 with the given base width, every output shape
/// checked against the backbone ladder.
std::vector<CheckResult> shape_suite(const SuiteOptions& options, int grid = 32, int base_channels = 4);
/// Bit-identical phantoms and matching losses over `steps` steps of two
/// fresh training runs.
std::vector<CheckResult> determinism_suite(const SuiteOptions& options, int grid = 16, int base_channels = 2,
                                           int steps = 5);

/// Normalized labelled phantoms for training and tests.
std::vector<data::MultiModalCase> phantom_cases(int count, int grid, std::uint64_t seed, double noise = 0.05);

}  // namespace protoseg::verify
