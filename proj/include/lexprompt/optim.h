#pragma once

#include "lexprompt/common.h"

#include <vector>

namespace lexprompt {

class Adam {
 public:
  Adam(ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step();
  double lr() const { return lr_; }

 private:
  ParamList params_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<Mat> m_, v_;
};

// Value snapshot of a parameter list, for best-epoch retention.
std::vector<Mat> snapshot(const ParamList& params);
void restore(const ParamList& params, const std::vector<Mat>& values);

}  // namespace lexprompt
