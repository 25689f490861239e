#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "minimt/model/parameters.hpp"

namespace minimt::model {

struct OptimizerConfig {
  double peak_lr = 3e-3;
  int64_t warmup = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (peak_lr <= 0) throw ValidationError("optimizer peak_lr must be > 0");
    if (warmup < 1) throw ValidationError("optimizer warmup must be >= 1");
  }
};

// Inverse-sqrt schedule: peak * min(t/warmup, sqrt(warmup/t)).
inline double lr_at(const OptimizerConfig& c, int64_t step) {
  double t = static_cast<double>(step < 1 ? 1 : step);
  double w = static_cast<double>(c.warmup);
  return c.peak_lr * std::min(t / w, std::sqrt(w / t));
}

// Rectified Adam. Early steps where the variance estimate is intractable
// (rho_t <= 4) fall back to unrectified momentum updates.
template <typename T>
class RAdam {
 public:
  RAdam(OptimizerConfig cfg, const ModelConfig& mcfg)
      : cfg_(cfg),
        m_(Parameters<T>::shaped(mcfg)),
        v_(Parameters<T>::shaped(mcfg)),
        update_(Parameters<T>::shaped(mcfg)) {
    cfg_.validate();
  }

  const OptimizerConfig& config() const { return cfg_; }
  int64_t step() const { return step_; }
  const Parameters<T>& first_moment() const { return m_; }
  const Parameters<T>& second_moment() const { return v_; }

  void set_state(Parameters<T> m, Parameters<T> v, int64_t step) {
    m_ = std::move(m);
    v_ = std::move(v);
    step_ = step;
  }

  void reset() {
    m_.set_zero();
    v_.set_zero();
    step_ = 0;
  }

  double current_lr() const { return lr_at(cfg_, step_ == 0 ? 1 : step_); }

  // One update. On any non-finite gradient or update this throws and leaves
  // params, moments and the step counter untouched.
  void apply(Parameters<T>& params, const Parameters<T>& grads) {
    const int64_t t = step_ + 1;
    const double lr = lr_at(cfg_, t);
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double b1t = std::pow(b1, static_cast<double>(t));
    const double b2t = std::pow(b2, static_cast<double>(t));
    const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
    const double rho_t =
        rho_inf - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
    double rect = 1.0;
    const bool rectified = rho_t > 4.0;
    if (rectified)
      rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                       ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));

    struct Slot {
      std::string name;
      const Mat<T>* g;
      Mat<T>* m;
      Mat<T>* v;
      Mat<T>* u;
      Mat<T>* p;
    };
    std::vector<Slot> slots;
    grads.for_each([&](const std::string& name, const Mat<T>& g) {
      slots.push_back({name, &g, nullptr, nullptr, nullptr, nullptr});
    });
    size_t i;
    i = 0; m_.for_each([&](const std::string&, Mat<T>& x) { slots[i++].m = &x; });
    i = 0; v_.for_each([&](const std::string&, Mat<T>& x) { slots[i++].v = &x; });
    i = 0; update_.for_each([&](const std::string&, Mat<T>& x) { slots[i++].u = &x; });
    i = 0; params.for_each([&](const std::string&, Mat<T>& x) { slots[i++].p = &x; });

    // Stage the update without touching any state, so a non-finite value
    // leaves everything as it was.
    for (const Slot& s : slots) {
      Mat<T> mhat = (*s.m * T(b1) + *s.g * T(1.0 - b1)) / T(1.0 - b1t);
      if (rectified) {
        *s.u = (*s.v * T(b2) + s.g->cwiseProduct(*s.g) * T(1.0 - b2)) / T(1.0 - b2t);
        *s.u = s.u->cwiseSqrt();
        s.u->array() += T(cfg_.eps);
        *s.u = mhat.cwiseQuotient(*s.u) * T(lr * rect);
      } else {
        *s.u = mhat * T(lr);
      }
      if (!s.u->allFinite())
        throw RuntimeFailure("non-finite optimizer update for parameter " +
                             s.name);
    }
    for (const Slot& s : slots) {
      *s.m = *s.m * T(b1) + *s.g * T(1.0 - b1);
      *s.v = *s.v * T(b2) + s.g->cwiseProduct(*s.g) * T(1.0 - b2);
      *s.p -= *s.u;
    }
    step_ = t;
  }

 private:
  OptimizerConfig cfg_;
  Parameters<T> m_, v_;
  Parameters<T> update_;
  int64_t step_ = 0;
};

}  // namespace minimt::model
