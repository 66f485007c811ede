#include "msegnn/optimizer.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "msegnn/error.hpp"

namespace msegnn {

void Adam::step(ParameterSet& params, std::optional<ParamTag> only) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(options_.beta1, t);
  const double bc2 = 1.0 - std::pow(options_.beta2, t);
  for (auto& e : params.entries()) {
    if (only && e.tag != *only) continue;
    auto values = e.tensor.mutable_values();
    const auto grad = e.tensor.grad();
    auto& mom = state_[e.name];
    if (mom.first.empty()) {
      mom.first.assign(values.size(), 0.0);
      mom.second.assign(values.size(), 0.0);
    }
    if (mom.first.size() != values.size() || grad.size() != values.size()) {
      throw DimensionError("adam: state of '" + e.name + "' does not match its shape");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      mom.first[i] = options_.beta1 * mom.first[i] + (1.0 - options_.beta1) * g;
      mom.second[i] = options_.beta2 * mom.second[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = mom.first[i] / bc1;
      const double v_hat = mom.second[i] / bc2;
      values[i] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

std::string Adam::to_json() const {
  nlohmann::json j;
  j["lr"] = options_.lr;
  j["beta1"] = options_.beta1;
  j["beta2"] = options_.beta2;
  j["eps"] = options_.eps;
  j["step"] = step_;
  nlohmann::json st = nlohmann::json::object();
  for (const auto& [name, m] : state_) st[name] = {{"m", m.first}, {"v", m.second}};
  j["state"] = std::move(st);
  return j.dump();
}

Adam Adam::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Adam a({j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
          j.at("eps").get<double>()});
  a.step_ = j.at("step").get<std::size_t>();
  for (const auto& [name, m] : j.at("state").items()) {
    a.state_[name] = {m.at("m").get<std::vector<double>>(), m.at("v").get<std::vector<double>>()};
  }
  return a;
}

void sgd_step(ParameterSet& params, double lr, std::optional<ParamTag> only) {
  for (auto& e : params.entries()) {
    if (only && e.tag != *only) continue;
    auto values = e.tensor.mutable_values();
    const auto grad = e.tensor.grad();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grad[i];
  }
}

}  // namespace msegnn
