#include "flipfree/smallmat.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace flipfree {

namespace {

constexpr int kJacobiSweeps = 64;
const double kSqrtEps = std::sqrt(kMachineEps);

template <int D>
bool is_symmetric(const Mat<D>& s, double rel_tol) {
  const double scale = s.norm();
  return (s - s.transpose()).norm() <= rel_tol * scale;
}

// Rotation (c, s) zeroing the (p, q) entry of a symmetric matrix under
// A' = J^T A J, J(p,p) = J(q,q) = c, J(p,q) = s, J(q,p) = -s.
void jacobi_rotation(double app, double aqq, double apq, double& c, double& s) {
  const double theta = (aqq - app) / (2.0 * apq);
  double t;
  if (std::abs(theta) > 1e150) {
    t = 0.5 / theta;
  } else {
    t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  }
  c = 1.0 / std::sqrt(t * t + 1.0);
  s = t * c;
}

template <int D>
void sort_ascending(Vec<D>& values, Mat<D>& vectors) {
  std::array<int, D> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values(a) < values(b); });
  const Vec<D> v0 = values;
  const Mat<D> m0 = vectors;
  for (int i = 0; i < D; ++i) {
    values(i) = v0(order[i]);
    vectors.col(i) = m0.col(order[i]);
  }
}

Mat2 rot2(double c, double s) {
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

Svd<2> svd2(const Mat2& a) {
  // A = Rot(phi) diag(Q + R, Q - R) Rot(theta)
  const double e = 0.5 * (a(0, 0) + a(1, 1));
  const double f = 0.5 * (a(0, 0) - a(1, 1));
  const double g = 0.5 * (a(1, 0) + a(0, 1));
  const double h = 0.5 * (a(1, 0) - a(0, 1));
  const double q = std::hypot(e, h);
  const double r = std::hypot(f, g);
  const double a1 = std::atan2(g, f);
  const double a2 = std::atan2(h, e);
  const double theta = 0.5 * (a2 - a1);
  const double phi = 0.5 * (a2 + a1);

  Svd<2> out;
  out.left = rot2(std::cos(phi), std::sin(phi));
  out.right = rot2(std::cos(theta), std::sin(theta)).transpose();
  out.sigma << q + r, q - r;
  if (out.sigma(1) < 0.0) {
    out.sigma(1) = -out.sigma(1);
    out.right.col(1) *= -1.0;
  }
  return out;
}

Svd<3> svd3(const Mat3& a_in) {
  Mat3 a = a_in;
  Mat3 v = Mat3::Identity();
  constexpr std::array<std::array<int, 2>, 3> pairs{{{0, 1}, {0, 2}, {1, 2}}};
  for (int sweep = 0; sweep < kJacobiSweeps; ++sweep) {
    bool rotated = false;
    for (const auto& pq : pairs) {
      const int p = pq[0];
      const int q = pq[1];
      const double alpha = a.col(p).squaredNorm();
      const double beta = a.col(q).squaredNorm();
      const double gamma = a.col(p).dot(a.col(q));
      if (gamma == 0.0 || std::abs(gamma) <= kMachineEps * std::sqrt(alpha * beta)) {
        continue;
      }
      rotated = true;
      const double zeta = (beta - alpha) / (2.0 * gamma);
      const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = c * t;
      const Eigen::Vector3d ap = a.col(p);
      const Eigen::Vector3d aq = a.col(q);
      a.col(p) = c * ap - s * aq;
      a.col(q) = s * ap + c * aq;
      const Eigen::Vector3d vp = v.col(p);
      const Eigen::Vector3d vq = v.col(q);
      v.col(p) = c * vp - s * vq;
      v.col(q) = s * vp + c * vq;
    }
    if (!rotated) break;
  }

  Eigen::Vector3d sigma(a.col(0).norm(), a.col(1).norm(), a.col(2).norm());
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return sigma(x) > sigma(y); });

  Svd<3> out;
  Mat3 cols;
  for (int i = 0; i < 3; ++i) {
    out.sigma(i) = sigma(order[i]);
    out.right.col(i) = v.col(order[i]);
    cols.col(i) = a.col(order[i]);
  }

  // Re-orthonormalize the left factor so tiny singular values do not leak
  // direction error into it.
  Mat3& u = out.left;
  if (out.sigma(0) == 0.0) {
    u.setIdentity();
    out.right.setIdentity();
    return out;
  }
  u.col(0) = cols.col(0) / out.sigma(0);
  Eigen::Vector3d u1 = cols.col(1) - u.col(0).dot(cols.col(1)) * u.col(0);
  const double n1 = u1.norm();
  if (n1 > 1e-3 * out.sigma(1) && n1 > 0.0) {
    u1 /= n1;
  } else {
    // Any unit vector orthogonal to u0.
    const Eigen::Vector3d u0 = u.col(0);
    int k = 0;
    u0.cwiseAbs().minCoeff(&k);
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    e(k) = 1.0;
    u1 = (e - u0.dot(e) * u0).normalized();
  }
  u.col(1) = u1;
  Eigen::Vector3d u2 = u.col(0).cross(u.col(1));
  if (u2.dot(cols.col(2)) < 0.0) u2 = -u2;
  u.col(2) = u2;
  return out;
}

template <int D>
Mat<D> eigen_sqrt(const Mat<D>& s) {
  const SymEig<D> eig = sym_eig<D>(s);
  Vec<D> root;
  for (int i = 0; i < D; ++i) {
    root(i) = eig.values(i) > 0.0 ? std::sqrt(eig.values(i)) : std::numeric_limits<double>::min();
  }
  return symm<D>(eig.vectors * root.asDiagonal() * eig.vectors.transpose());
}

bool is_spd2(const Mat2& s) {
  return s(0, 0) > 0.0 && s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0) > 0.0;
}

bool is_spd3(const Mat3& s) {
  const double m1 = s(0, 0);
  const double m2 = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
  return m1 > 0.0 && m2 > 0.0 && s.determinant() > 0.0;
}

bool squares_back(const Mat2& r, const Mat2& s) {
  return (r * r - s).norm() <= 1e-12 * s.norm() && r.trace() > 0.0;
}

bool squares_back(const Mat3& r, const Mat3& s) {
  return (r * r - s).norm() <= 1e-12 * s.norm() && r.trace() > 0.0;
}

Mat2 franca2(const Mat2& c, bool& ok) {
  const double ic = c(0, 0) + c(1, 1);
  const double iic = std::max(0.0, c(0, 0) * c(1, 1) - c(1, 0) * c(0, 1));
  const double iiu = std::sqrt(iic);
  const double discr = ic + 2.0 * iiu;
  if (discr < kSqrtEps) {
    ok = false;
    return c;
  }
  Mat2 u = c;
  u(0, 0) += iiu;
  u(1, 1) += iiu;
  u /= std::sqrt(discr);
  ok = true;
  return u;
}

// Franca (1989), with the known typo in the cubic invariant corrected.
Mat3 franca3(const Mat3& c, bool& ok) {
  ok = false;
  const double ic = c.trace();
  const Mat3 c2 = symm<3>(c * c);
  const double iic = 0.5 * (ic * ic - c2.trace());
  const double iiic = c.determinant();
  const double k = ic * ic - 3.0 * iic;
  if (k < kSqrtEps) return c;
  const double l = ic * (ic * ic - 4.5 * iic) + 13.5 * iiic;
  const double phi = std::acos(std::clamp(l / std::pow(k, 1.5), -1.0, 1.0));
  const double lambda_sq = (ic + 2.0 * std::sqrt(k) * std::cos(phi / 3.0)) / 3.0;
  const double lambda = lambda_sq < kMachineEps ? kSqrtEps : std::sqrt(lambda_sq);
  const double iiiu = iiic < 0.0 ? 0.0 : std::sqrt(iiic);
  const double tsq = -lambda_sq + ic + 2.0 * iiiu / lambda;
  const double iu = tsq < 0.0 ? lambda : lambda + std::sqrt(tsq);
  const double iu_sq = iu * iu;
  const double iiu = 0.5 * (iu_sq - ic);
  const double discr = iu * iiu - iiiu;
  if (std::abs(discr) < kSqrtEps) return c;
  Mat3 u = iu * iiiu * Mat3::Identity() + (iu_sq - iiu) * c - c2;
  u /= discr;
  ok = true;
  return symm<3>(u);
}

// Real roots of the monic cubic x^3 + a x^2 + b x + c; returns the largest.
double largest_cubic_root(double a, double b, double c) {
  const double q = (a * a - 3.0 * b) / 9.0;
  const double r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
  double x;
  if (r * r < q * q * q) {
    const double theta = std::acos(std::clamp(r / std::sqrt(q * q * q), -1.0, 1.0));
    const double sq = -2.0 * std::sqrt(q);
    constexpr double kTwoPi = 6.283185307179586;
    x = std::max({sq * std::cos(theta / 3.0), sq * std::cos((theta + kTwoPi) / 3.0),
                  sq * std::cos((theta - kTwoPi) / 3.0)}) -
        a / 3.0;
  } else {
    double big_a = -std::copysign(std::cbrt(std::abs(r) + std::sqrt(r * r - q * q * q)), r);
    const double big_b = big_a == 0.0 ? 0.0 : q / big_a;
    x = big_a + big_b - a / 3.0;
  }
  // Two Newton steps tighten the trigonometric/Cardano estimate.
  for (int i = 0; i < 2; ++i) {
    const double f = ((x + a) * x + b) * x + c;
    const double df = (3.0 * x + 2.0 * a) * x + b;
    if (df == 0.0) break;
    x -= f / df;
  }
  return x;
}

// Positive real roots of x^4 + a x^3 + d via Ferrari's method.
int closed_form_quartic(double a, double d, std::array<double, 4>& roots) {
  // Depress with x = y - a/4: y^4 + p y^2 + q y + r.
  const double a2 = a * a;
  const double p = -3.0 * a2 / 8.0;
  const double q = a2 * a / 8.0;
  const double r = d - 3.0 * a2 * a2 / 256.0;
  const double shift = -a / 4.0;
  int count = 0;
  auto push_quadratic = [&](double b1, double c1) {
    // y^2 + b1 y + c1 = 0
    const double disc = b1 * b1 - 4.0 * c1;
    if (disc < 0.0) return;
    const double sq = std::sqrt(disc);
    const double t = -0.5 * (b1 + std::copysign(sq, b1));
    if (t != 0.0) {
      roots[count++] = t + shift;
      roots[count++] = c1 / t + shift;
    } else {
      roots[count++] = shift;
      roots[count++] = shift;
    }
  };
  if (q == 0.0) {
    const double disc = p * p - 4.0 * r;
    if (disc < 0.0) return 0;
    const double sq = std::sqrt(disc);
    for (double z : {0.5 * (-p + sq), 0.5 * (-p - sq)}) {
      if (z >= 0.0) {
        roots[count++] = std::sqrt(z) + shift;
        roots[count++] = -std::sqrt(z) + shift;
      }
    }
    return count;
  }
  // Resolvent: m^3 + p m^2 + (p^2/4 - r) m - q^2/8 = 0, largest root m > 0.
  const double m = largest_cubic_root(p, 0.25 * p * p - r, -0.125 * q * q);
  if (!(m > 0.0)) return 0;
  const double s = std::sqrt(2.0 * m);
  const double k = q / (2.0 * s);
  push_quadratic(-s, 0.5 * p + m + k);
  push_quadratic(s, 0.5 * p + m - k);
  return count;
}

}  // namespace

template <int D>
SymEig<D> sym_eig(const Mat<D>& s_in) {
  static_assert(D == 2 || D == 3);
  if (!s_in.allFinite() || !is_symmetric<D>(s_in, 1e-10)) {
    throw InvalidInput("sym_eig: matrix is not symmetric");
  }
  Mat<D> a = symm<D>(s_in);
  Mat<D> v = Mat<D>::Identity();
  const double scale = a.norm();
  for (int sweep = 0; sweep < kJacobiSweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < D; ++p)
      for (int q = p + 1; q < D; ++q) off += a(p, q) * a(p, q);
    if (off == 0.0 || std::sqrt(off) <= 1e-2 * kMachineEps * scale) break;
    for (int p = 0; p < D; ++p) {
      for (int q = p + 1; q < D; ++q) {
        if (a(p, q) == 0.0) continue;
        double c, sn;
        jacobi_rotation(a(p, p), a(q, q), a(p, q), c, sn);
        Mat<D> j = Mat<D>::Identity();
        j(p, p) = c;
        j(q, q) = c;
        j(p, q) = sn;
        j(q, p) = -sn;
        a = (j.transpose() * a * j).eval();
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        v = (v * j).eval();
      }
    }
  }
  SymEig<D> out{a.diagonal(), v};
  sort_ascending<D>(out.values, out.vectors);
  return out;
}

template <int D>
Svd<D> svd(const Mat<D>& a) {
  static_assert(D == 2 || D == 3);
  if constexpr (D == 2) {
    return svd2(a);
  } else {
    return svd3(a);
  }
}

template <int D>
Polar<D> polar_flip_aware(const Mat<D>& a, double eps_floor) {
  const Svd<D> f = svd<D>(a);
  Mat<D> u = f.left * f.right.transpose();
  Vec<D> sigma = f.sigma;
  if (u.determinant() < 0.0) {
    u.col(D - 1) *= -1.0;
    sigma.setConstant(eps_floor);
  }
  sigma = sigma.cwiseMax(eps_floor);
  return {u, symm<D>(f.right * sigma.asDiagonal() * f.right.transpose())};
}

template <int D>
Mat<D> closest_rotation(const Mat<D>& a) {
  const Svd<D> f = svd<D>(a);
  Mat<D> left = f.left;
  if ((f.left * f.right.transpose()).determinant() < 0.0) left.col(D - 1) *= -1.0;
  return left * f.right.transpose();
}

template <int D>
Mat<D> sqrt_spd(const Mat<D>& s) {
  static_assert(D == 2 || D == 3);
  if (!s.allFinite() || !is_symmetric<D>(s, 1e-10)) {
    throw InvalidInput("sqrt_spd: matrix is not symmetric");
  }
  const Mat<D> c = symm<D>(s);
  bool ok = false;
  Mat<D> r;
  if constexpr (D == 2) {
    if (!is_spd2(c)) throw InvalidInput("sqrt_spd: matrix is not positive definite");
    r = franca2(c, ok);
  } else {
    if (!is_spd3(c)) throw InvalidInput("sqrt_spd: matrix is not positive definite");
    r = franca3(c, ok);
  }
  if (ok && squares_back(r, c)) return symm<D>(r);
  return eigen_sqrt<D>(c);
}

double quartic_relative_residual(double c4, double c3, double c0, double x) {
  const double x3 = x * x * x;
  const double value = (c4 * x + c3) * x3 + c0;
  const double scale = c4 * x3 * x + std::abs(c3) * x3 + std::abs(c0);
  return std::abs(value) / scale;
}

double quartic_unique_positive(double c4, double c3, double c0) {
  if (!(c4 > 0.0) || !(c0 < 0.0) || !std::isfinite(c3) || !std::isfinite(c4) ||
      !std::isfinite(c0)) {
    throw InvalidInput("quartic_unique_positive: requires c4 > 0 and c0 < 0");
  }
  constexpr double kTol = 1e-10;
  const auto poly = [&](double x) { return (c4 * x + c3) * x * x * x + c0; };
  const auto dpoly = [&](double x) { return (4.0 * c4 * x + 3.0 * c3) * x * x; };

  // p(lo) <= 0 < p(hi)
  double lo = std::min(1.0, std::cbrt(-c0 / (c4 + std::abs(c3))));
  double hi = std::max(1.0, (std::abs(c3) - c0) / c4) * (1.0 + 1e-12);
  lo = std::max(lo, std::numeric_limits<double>::min());
  while (poly(hi) <= 0.0) hi *= 2.0;
  while (poly(lo) > 0.0) lo *= 0.5;

  double x = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 4> roots{};
  const int n = closed_form_quartic(c3 / c4, c0 / c4, roots);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    if (roots[i] > 0.0 && std::isfinite(roots[i])) {
      const double res = quartic_relative_residual(c4, c3, c0, roots[i]);
      if (res < best) {
        best = res;
        x = roots[i];
      }
    }
  }
  if (std::isfinite(x) && x >= lo && x <= hi && best <= kTol) return x;

  // Safeguarded Newton on the bracket.
  if (!(std::isfinite(x) && x > lo && x < hi)) x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double fx = poly(x);
    if (fx == 0.0) return x;
    if (fx < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double dfx = dpoly(x);
    double next = dfx != 0.0 ? x - fx / dfx : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - x);
    x = next;
    if (step <= 4.0 * kMachineEps * x && quartic_relative_residual(c4, c3, c0, x) <= kTol) break;
    if (hi - lo <= 4.0 * kMachineEps * hi) break;
  }
  return x;
}

template SymEig<2> sym_eig<2>(const Mat2&);
template SymEig<3> sym_eig<3>(const Mat3&);
template Svd<2> svd<2>(const Mat2&);
template Svd<3> svd<3>(const Mat3&);
template Polar<2> polar_flip_aware<2>(const Mat2&, double);
template Polar<3> polar_flip_aware<3>(const Mat3&, double);
template Mat2 closest_rotation<2>(const Mat2&);
template Mat3 closest_rotation<3>(const Mat3&);
template Mat2 sqrt_spd<2>(const Mat2&);
template Mat3 sqrt_spd<3>(const Mat3&);

}  // namespace flipfree
