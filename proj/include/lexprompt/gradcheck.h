#pragma once

#include "lexprompt/common.h"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lexprompt {

struct GradCheckResult {
  std::string family;
  std::string param;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
};

// |a - n| / max(|a|, |n|, 1e-5).
double relative_error(double analytic, double numeric);

// Central differences over every entry of param.value against the analytic
// gradient; loss must read the current parameter values.
GradCheckResult check_param(const std::string& family, const NamedParam& param, const Mat& analytic,
                            const std::function<double()>& loss, double eps = 1e-5);

// Small random instances (hidden size <= 16, length <= 24) for each
// trainable family.
std::vector<GradCheckResult> gradcheck_retriever(std::uint64_t seed);
std::vector<GradCheckResult> gradcheck_gru(std::uint64_t seed);
std::vector<GradCheckResult> gradcheck_prompt_model(std::uint64_t seed);
std::vector<GradCheckResult> gradcheck_all(std::uint64_t seed);

}  // namespace lexprompt
