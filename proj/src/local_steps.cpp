#include "flipfree/local_steps.hpp"

#include "flipfree/smallmat.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace flipfree {

namespace {

const double kSqrtEps = std::sqrt(kMachineEps);

template <int D>
Mat<D> floor_eigenvalues(const Mat<D>& p) {
  if (p.determinant() >= kSqrtEps && p.trace() >= kSqrtEps) return p;
  const SymEig<D> eig = sym_eig<D>(p);
  if (eig.values.minCoeff() >= kSqrtEps) return p;
  const Vec<D> clamped = eig.values.cwiseMax(kSqrtEps);
  return symm<D>(eig.vectors * clamped.asDiagonal() * eig.vectors.transpose());
}

template <int D>
Mat<D> p_step_sg(const Mat<D>& q, double w, double mu) {
  const double c = 4.0 * w * (w + mu);
  const Mat<D> q2 = symm<D>(q * q);
  const double expansion = mu * mu * q2.norm() / c;
  Mat<D> root;
  if (q.squaredNorm() < kSqrtEps && expansion < kSqrtEps) {
    // sqrt(c I + mu^2 Q^2) ~ sqrt(c) (I + mu^2 Q^2 / (2c))
    root = std::sqrt(c) * (Mat<D>::Identity() + (0.5 * mu * mu / c) * q2);
  } else {
    root = sqrt_spd<D>(symm<D>(mu * mu * q2 + c * Mat<D>::Identity()));
  }
  const Mat<D> p = symm<D>((mu * q + root) / (2.0 * (w + mu)));
  const double residual = (w * (p - p.inverse().transpose()) + mu * (p - q)).norm();
  if (std::isfinite(residual) && residual <= 1e-12 * (1.0 + mu * q.norm())) return p;
  // mu Q + root cancels along strongly negative eigenvalues of Q; solve each
  // eigenvalue with the rationalized root instead.
  const SymEig<D> eig = sym_eig<D>(q);
  Vec<D> lambda;
  for (int i = 0; i < D; ++i) {
    const double mq = mu * eig.values(i);
    const double r = std::sqrt(mq * mq + c);
    lambda(i) = mq >= 0.0 ? (mq + r) / (2.0 * (w + mu)) : 2.0 * w / (r - mq);
  }
  return symm<D>(eig.vectors * lambda.asDiagonal() * eig.vectors.transpose());
}

template <int D>
Mat<D> p_step_sd(const Mat<D>& q, double w, double mu) {
  const SymEig<D> eig = sym_eig<D>(q);
  Vec<D> lambda;
  for (int i = 0; i < D; ++i) {
    lambda(i) = quartic_unique_positive(w + mu, -mu * eig.values(i), -w);
  }
  return symm<D>(eig.vectors * lambda.asDiagonal() * eig.vectors.transpose());
}

template <int D>
bool attains(const Mat<D>& u, const Mat<D>& q, double optimum) {
  const double scale = std::max(1.0, q.norm());
  return u.cwiseProduct(q).sum() >= optimum - 1e-12 * scale;
}

}  // namespace

template <int D>
Mat<D> p_step(EnergyKind kind, const Mat<D>& q, double w, double mu) {
  if (!(w > 0.0) || !(mu > 0.0)) throw InvalidInput("p_step: w and mu must be positive");
  const Mat<D> qs = symm<D>(q);
  Mat<D> p;
  switch (kind) {
    case EnergyKind::kSymmetricGradient:
      p = p_step_sg<D>(qs, w, mu);
      break;
    case EnergyKind::kSymmetricDirichlet:
      p = p_step_sd<D>(qs, w, mu);
      break;
    case EnergyKind::kArap:
      throw InvalidInput("p_step: ARAP has no closed-form P-step");
  }
  return floor_eigenvalues<D>(p);
}

template <int D>
Mat<D> procrustes(const Mat<D>& q, const Mat<D>* u_prev) {
  if constexpr (D == 2) {
    const double a = q(0, 0) + q(1, 1);
    const double b = q(1, 0) - q(0, 1);
    const double r = std::hypot(a, b);
    if (r == 0.0) return u_prev ? *u_prev : Mat2::Identity();
    Mat2 u;
    u << a / r, -b / r, b / r, a / r;
    return u;
  } else {
    const Svd<3> f = svd<3>(q);
    Mat3 left = f.left;
    const double sign = (f.left * f.right.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    if (sign < 0.0) left.col(2) *= -1.0;
    const Mat3 best = left * f.right.transpose();
    const double s0 = f.sigma(0);
    const bool degenerate = s0 == 0.0 || f.sigma(1) <= 1e-14 * s0 ||
                            (sign < 0.0 && f.sigma(1) - f.sigma(2) <= 1e-12 * s0);
    if (degenerate) {
      const double optimum = f.sigma(0) + f.sigma(1) + sign * f.sigma(2);
      if (u_prev && attains<3>(*u_prev, q, optimum)) return *u_prev;
      if (attains<3>(Mat3::Identity(), q, optimum)) return Mat3::Identity();
    }
    return best;
  }
}

template <int D>
Mat<D> u_step(const Mat<D>& j, const Mat<D>& lambda, const Mat<D>& p, const Mat<D>& u_prev,
              double mu, double h) {
  const Mat<D> q = (j + lambda) * p + (h / mu) * u_prev;
  return procrustes<D>(q, &u_prev);
}

double polar_floor(EnergyKind kind) {
  return kind == EnergyKind::kSymmetricGradient ? std::pow(kMachineEps, 0.25)
                                                : std::pow(kMachineEps, 0.125);
}

template <int D>
void polar_init(const MatField<D>& j0, EnergyKind kind, MatField<D>& u0, MatField<D>& p0) {
  const double eps = polar_floor(kind);
  u0.resize(j0.size());
  p0.resize(j0.size());
  for (std::size_t i = 0; i < j0.size(); ++i) {
    const Polar<D> polar = polar_flip_aware<D>(j0[i], eps);
    u0[i] = polar.rotation;
    p0[i] = polar.stretch;
  }
}

template Mat2 p_step<2>(EnergyKind, const Mat2&, double, double);
template Mat3 p_step<3>(EnergyKind, const Mat3&, double, double);
template Mat2 procrustes<2>(const Mat2&, const Mat2*);
template Mat3 procrustes<3>(const Mat3&, const Mat3*);
template Mat2 u_step<2>(const Mat2&, const Mat2&, const Mat2&, const Mat2&, double, double);
template Mat3 u_step<3>(const Mat3&, const Mat3&, const Mat3&, const Mat3&, double, double);
template void polar_init<2>(const MatField<2>&, EnergyKind, MatField<2>&, MatField<2>&);
template void polar_init<3>(const MatField<3>&, EnergyKind, MatField<3>&, MatField<3>&);

}  // namespace flipfree
