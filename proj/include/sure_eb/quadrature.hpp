#pragma once
#include <cmath>
#include <sstream>

#include "sure_eb/types.hpp"

namespace sure_eb {

// Adaptive Gauss-Kronrod (G7, K15) with interval bisection.  The K15 value is
// returned; |K15 - G7| serves as the panel error estimate.
namespace detail {

inline constexpr double gk_nodes[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr double gk_wk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double gk_wg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename F>
void gk15_panel(const F& f, double a, double b, double& value, double& err) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double fc = f(c);
  double k = gk_wk[7] * fc, g = gk_wg[3] * fc;
  for (int i = 0; i < 7; ++i) {
    const double fl = f(c - h * gk_nodes[i]);
    const double fr = f(c + h * gk_nodes[i]);
    k += gk_wk[i] * (fl + fr);
    if (i % 2 == 1) g += gk_wg[i / 2] * (fl + fr);
  }
  value = k * h;
  err = std::abs((k - g) * h);
}

template <typename F>
void gk15_adapt(const F& f, double a, double b, double tol, int depth,
                double& total, double& total_err) {
  double v, e;
  gk15_panel(f, a, b, v, e);
  if (e <= tol || depth >= 52) {
    total += v;
    total_err += e;
    return;
  }
  const double c = 0.5 * (a + b);
  gk15_adapt(f, a, c, 0.5 * tol, depth + 1, total, total_err);
  gk15_adapt(f, c, b, 0.5 * tol, depth + 1, total, total_err);
}

}  // namespace detail

struct QuadResult {
  double value = 0;
  double error_est = 0;
};

template <typename F>
QuadResult integrate_adaptive(const F& f, double a, double b, double abs_tol) {
  if (!(b >= a)) throw data_error("integration bounds reversed");
  QuadResult r;
  detail::gk15_adapt(f, a, b, abs_tol, 0, r.value, r.error_est);
  if (r.error_est > 10 * abs_tol) {
    std::ostringstream msg;
    msg << "quadrature did not converge: achieved " << r.error_est
        << ", requested " << abs_tol;
    throw numeric_error(msg.str());
  }
  return r;
}

}  // namespace sure_eb
