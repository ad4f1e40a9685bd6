#pragma once

// Closed-form per-element sub-solvers of the splitting scheme.

#include "flipfree/energies.hpp"
#include "flipfree/types.hpp"

namespace flipfree {

/// Solves w grad f(P) + mu P = mu Q for SPD P, with Q symmetric. Eigenvalues
/// are raised to sqrt(machine eps) when det P or trace P fall below it.
template <int D>
Mat<D> p_step(EnergyKind kind, const Mat<D>& q, double w, double mu);

/// Rotation maximizing U . Q. When the optimum is not unique the previous
/// rotation (if given) or the identity is returned, provided it attains the
/// optimum.
template <int D>
Mat<D> procrustes(const Mat<D>& q, const Mat<D>* u_prev = nullptr);

/// Proximal rotation update: Procrustes on (J + Lambda) P + (h / mu) U_prev.
template <int D>
Mat<D> u_step(const Mat<D>& j, const Mat<D>& lambda, const Mat<D>& p, const Mat<D>& u_prev,
              double mu, double h);

/// eps_m^(1/4) for the symmetric gradient energy, eps_m^(1/8) otherwise.
double polar_floor(EnergyKind kind);

/// U0, P0 from the initial Jacobians; flipped elements get P0 = eps I.
template <int D>
void polar_init(const MatField<D>& j0, EnergyKind kind, MatField<D>& u0, MatField<D>& p0);

}  // namespace flipfree
