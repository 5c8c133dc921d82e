#include "exciteid/td_filter.hpp"

#include <cmath>

#include "exciteid/error.hpp"

namespace exciteid {

namespace {
double sign(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }
}  // namespace

double fhan(double e1, double e2, double r, double h0) {
  const double d = r * h0;
  const double d0 = h0 * d;
  const double y = e1 + h0 * e2;
  const double a0 = std::sqrt(d * d + 8.0 * r * std::abs(y));
  const double a = std::abs(y) > d0 ? e2 + 0.5 * (a0 - d) * sign(y) : e2 + y / h0;
  return std::abs(a) > d ? -r * sign(a) : -r * a / d;
}

TDState td_step(const TDState& s, double v_meas) {
  TDState n = s;
  n.x1 = s.x1 + s.h * s.x2;
  n.x2 = s.x2 + s.h * fhan(s.x1 - v_meas, s.x2, s.r, s.h0);
  return n;
}

IdentDataset filter_dataset(const IdentDataset& ds, const FilterOptions& options) {
  validate_dataset(ds);
  IdentDataset out = ds;
  if (ds.samples.empty()) return out;
  const int n = ds.dof;
  if (options.joints.size() != 1 && static_cast<int>(options.joints.size()) != n) {
    throw ConfigError("filter: need one parameter set or one per joint");
  }
  if (ds.samples.size() < 2) throw Error("filter: need at least two samples");
  const double h = ds.samples[1].t - ds.samples[0].t;
  for (std::size_t k = 1; k < ds.samples.size(); ++k) {
    const double dt = ds.samples[k].t - ds.samples[k - 1].t;
    if (std::abs(dt - h) > 1e-9) throw Error("filter: non-uniform sampling at row " + std::to_string(k));
  }
  for (int i = 0; i < n; ++i) {
    const TDParams& p = options.joints.size() == 1 ? options.joints[0] : options.joints[static_cast<std::size_t>(i)];
    if (!(p.r > 0.0) || !(p.h0_multiple >= 1.0)) throw ConfigError("filter: need r > 0 and h0 >= h");
    TDState st{ds.samples[0].dq(i), 0.0, h, p.r, p.h0_multiple * h};
    for (std::size_t k = 0; k < ds.samples.size(); ++k) {
      st = td_step(st, ds.samples[k].dq(i));
      out.samples[k].dq(i) = st.x1;
      out.samples[k].ddq(i) = st.x2;
    }
  }
  out.warmup = std::min(out.samples.size(), static_cast<std::size_t>(std::lround(options.warmup_s / h)));
  return out;
}

}  // namespace exciteid
