#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msegnn/parameters.hpp"

namespace msegnn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are keyed by parameter name, so the
// same optimizer can drive any ParameterSet with matching names.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Updates every parameter (optionally only those with `only`) from its
  // accumulated gradient.
  void step(ParameterSet& params, std::optional<ParamTag> only = std::nullopt);

  std::size_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }

  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };
  const std::map<std::string, Moments>& state() const { return state_; }

  std::string to_json() const;
  static Adam from_json(const std::string& text);

 private:
  AdamOptions options_;
  std::size_t step_ = 0;
  std::map<std::string, Moments> state_;
};

// theta <- theta - lr * grad.
void sgd_step(ParameterSet& params, double lr, std::optional<ParamTag> only = std::nullopt);

}  // namespace msegnn
