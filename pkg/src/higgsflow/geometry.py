"""Higgs bundle states on the grid and their derived geometry.

A state is (holomorphic structure dbar_E = dbar + a, Higgs field phi,
Hermitian metric H). The Chern connection form b is rebuilt from (H, a)
whenever needed rather than stored, which turns metric compatibility into a
checkable postcondition.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import (MatrixFormField, TorusBase, contract_lambda, d_flat,
                   dbar_flat, integrate, pointwise_norm2, sup_norm, tr_field,
                   wedge)
from .linalg import dagger, inv, min_eigvalsh

__all__ = [
    "HermitianMetric", "HiggsStructure", "HiggsBundleState", "ValidityReport",
    "validate_structure", "chern_connection", "curvature", "CurvatureParts",
    "higgs_adjoint", "adjoint_field", "hitchin_simpson_curvature",
    "HitchinSimpsonParts", "degree_slope_lambda", "hermiticity_residual",
]


@dataclass(eq=False)
class HermitianMetric:
    """Grid of Hermitian positive-definite r x r matrices."""

    base: TorusBase
    mat: np.ndarray

    def __post_init__(self):
        self.mat = np.ascontiguousarray(self.mat, dtype=np.complex128)
        if self.mat.shape[:-2] != self.base.shape or self.mat.shape[-1] != self.mat.shape[-2]:
            raise ValueError(f"metric array shape {self.mat.shape} does not match the grid")

    @classmethod
    def identity(cls, base: TorusBase, rank: int) -> "HermitianMetric":
        mat = np.broadcast_to(np.eye(rank, dtype=np.complex128),
                              base.shape + (rank, rank)).copy()
        return cls(base, mat)

    @property
    def rank(self) -> int:
        return self.mat.shape[-1]

    @cached_property
    def inv(self) -> np.ndarray:
        return inv(self.mat)

    @cached_property
    def _min_eig(self) -> float:
        return min_eigvalsh(self.mat)

    def check_positive(self, tol: float = 0.0) -> float:
        """Smallest eigenvalue over the grid; raises if not above tol."""
        lo = self._min_eig
        if lo <= tol:
            raise ValueError(f"metric not positive definite: min eigenvalue {lo:.3e}")
        return lo

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.mat - dagger(self.mat)).max())

    def as_field(self) -> MatrixFormField:
        out = MatrixFormField.zeros(self.base, 0, 0, self.rank)
        out.comps[0, 0] = self.mat
        return out


@dataclass(eq=False)
class HiggsStructure:
    """Holomorphic structure offset a (0,1) and Higgs field phi (1,0)."""

    a: MatrixFormField
    phi: MatrixFormField

    def __post_init__(self):
        if (self.a.p, self.a.q) != (0, 1):
            raise ValueError("a must be a (0,1)-form")
        if (self.phi.p, self.phi.q) != (1, 0):
            raise ValueError("phi must be a (1,0)-form")
        if self.a.rows != self.phi.rows or self.a.base != self.phi.base:
            raise ValueError("a and phi must share grid and rank")

    @property
    def base(self) -> TorusBase:
        return self.a.base

    @property
    def rank(self) -> int:
        return self.a.rows


@dataclass(eq=False)
class HiggsBundleState:
    structure: HiggsStructure
    metric: HermitianMetric

    def __post_init__(self):
        if self.metric.rank != self.structure.rank:
            raise ValueError("metric rank does not match the structure")
        if self.metric.base != self.structure.base:
            raise ValueError("metric grid does not match the structure")

    @property
    def base(self) -> TorusBase:
        return self.structure.base

    @property
    def rank(self) -> int:
        return self.structure.rank


@dataclass(frozen=True)
class ValidityReport:
    integrability: float
    holomorphy: float
    symmetry: float
    tol: float
    valid: bool

    def as_dict(self) -> dict:
        return {"integrability": self.integrability, "holomorphy": self.holomorphy,
                "symmetry": self.symmetry, "tol": self.tol, "valid": self.valid}


def default_tolerance(*fields: MatrixFormField) -> float:
    scale = max((sup_norm(f) for f in fields), default=0.0)
    return 1e-8 * (1.0 + scale)


def validate_structure(s: HiggsStructure, tol: float | None = None) -> ValidityReport:
    """Residual sup-norms of the three Higgs-structure constraints.

    Integrability dbar(a) + a^a and symmetry phi^phi vanish identically for
    n = 1 (no (0,2) or (2,0) slot); both are measured with the flat metric
    since validity is independent of H.
    """
    if tol is None:
        tol = default_tolerance(s.a, s.phi)
    n = s.base.n
    integ = sup_norm(dbar_flat(s.a) + wedge(s.a, s.a)) if n >= 2 else 0.0
    holo = sup_norm(dbar_flat(s.phi) + wedge(s.a, s.phi) + wedge(s.phi, s.a))
    symm = sup_norm(wedge(s.phi, s.phi)) if n >= 2 else 0.0
    return ValidityReport(integ, holo, symm, tol,
                          valid=max(integ, holo, symm) <= tol)


def chern_connection(H: HermitianMetric, a: MatrixFormField) -> MatrixFormField:
    """(1,0) connection form b making dbar+a, d+b compatible with H.

    b = H^{-1} del H - H^{-1} a^dag H, the unique form with
    del H(s,t) = H(D^{1,0}s, t) + H(s, dbar_E t).
    """
    H.check_positive()
    b = MatrixFormField.zeros(H.base, 1, 0, H.rank)
    dH = d_flat(H.as_field())
    for i in range(H.base.n):
        a_bar_i = a.comps[0, a.pos_q((i,))]
        b.comps[b.pos_p((i,)), 0] = H.inv @ dH.comps[dH.pos_p((i,)), 0] \
            - H.inv @ dagger(a_bar_i) @ H.mat
    return b


@dataclass(eq=False)
class CurvatureParts:
    """Chern curvature split by bidegree; f20/f02 are None when n = 1.

    For valid inputs the (2,0) and (0,2) parts vanish to truncation order;
    they are kept as explicit residual reports, never assumed zero.
    """

    f11: MatrixFormField
    f20: MatrixFormField | None
    f02: MatrixFormField | None
    b: MatrixFormField

    def residual_sup(self) -> float:
        vals = [sup_norm(f) for f in (self.f20, self.f02) if f is not None]
        return max(vals, default=0.0)


def curvature(H: HermitianMetric, a: MatrixFormField) -> CurvatureParts:
    """Full curvature of the Chern connection of (H, dbar + a)."""
    b = chern_connection(H, a)
    f11 = dbar_flat(b) + d_flat(a) + wedge(a, b) + wedge(b, a)
    if H.base.n >= 2:
        f20 = d_flat(b) + wedge(b, b)
        f02 = dbar_flat(a) + wedge(a, a)
    else:
        f20 = f02 = None
    return CurvatureParts(f11, f20, f02, b)


def adjoint_field(f: MatrixFormField, H: HermitianMetric | None = None,
                  H_col: HermitianMetric | None = None) -> MatrixFormField:
    """Metric adjoint: X -> H_col^{-1} X^dag H_row with dz <-> dzbar.

    For an endomorphism-valued form pass H once; for Hom(Q,S)-valued blocks
    H is the S-side (row) metric and H_col the Q-side metric, giving the
    second-fundamental-form adjoints gamma* = H_Q^{-1} gamma^dag H_S.
    """
    if H_col is None:
        H_col = H
    out = MatrixFormField.zeros(f.base, f.q, f.p, f.cols, f.rows)
    for ip, I in enumerate(f.p_indices()):
        for iq, J in enumerate(f.q_indices()):
            block = dagger(f.comps[ip, iq])
            if H is not None:
                block = block @ H.mat
            if H_col is not None:
                block = H_col.inv @ block
            out.comps[out.pos_p(J), out.pos_q(I)] = block
    return out


def higgs_adjoint(phi: MatrixFormField, H: HermitianMetric) -> MatrixFormField:
    """phi^{*H} = H^{-1} phi^dag H on matrix parts, dz -> dzbar on form parts."""
    H.check_positive()
    out = MatrixFormField.zeros(phi.base, 0, 1, phi.rows)
    for i in range(phi.base.n):
        out.comps[0, out.pos_q((i,))] = H.inv @ dagger(phi.comps[phi.pos_p((i,)), 0]) @ H.mat
    return out


@dataclass(eq=False)
class HitchinSimpsonParts:
    """The four named parts of the Hitchin-Simpson curvature plus helpers."""

    chern: CurvatureParts
    bracket: MatrixFormField          # [phi, phi^{*H}], type (1,1)
    dphi: MatrixFormField | None      # del_H phi, type (2,0); None when n = 1
    dbar_phistar: MatrixFormField | None  # dbar_E phi^{*H}, type (0,2)
    phistar: MatrixFormField

    @property
    def part11(self) -> MatrixFormField:
        return self.chern.f11 + self.bracket

    def pointwise_energy(self, H: HermitianMetric) -> np.ndarray:
        """|F + [phi,phi*]|^2 + 2|del phi|^2, the YMH integrand."""
        e = pointwise_norm2(self.part11, H.mat)
        if self.dphi is not None:
            e = e + 2.0 * pointwise_norm2(self.dphi, H.mat)
        return e

    def pointwise_full_norm2(self, H: HermitianMetric) -> np.ndarray:
        """|F_HS|^2 with all named parts (degrees are orthogonal)."""
        e = pointwise_norm2(self.part11, H.mat)
        for part in (self.dphi, self.dbar_phistar):
            if part is not None:
                e = e + pointwise_norm2(part, H.mat)
        return e

    def sup_norm(self, H: HermitianMetric) -> float:
        return float(np.sqrt(max(self.pointwise_full_norm2(H).max(), 0.0)))


def hitchin_simpson_curvature(state: HiggsBundleState) -> HitchinSimpsonParts:
    """Chern curvature, Higgs bracket, del_H phi and dbar_E phi*, separately."""
    a, phi, H = state.structure.a, state.structure.phi, state.metric
    parts = curvature(H, a)
    phistar = higgs_adjoint(phi, H)
    bracket = wedge(phi, phistar) + wedge(phistar, phi)
    if state.base.n >= 2:
        dphi = d_flat(phi) + wedge(parts.b, phi) + wedge(phi, parts.b)
        dbar_ps = dbar_flat(phistar) + wedge(a, phistar) + wedge(phistar, a)
    else:
        dphi = dbar_ps = None
    return HitchinSimpsonParts(parts, bracket, dphi, dbar_ps, phistar)


def degree_slope_lambda(state: HiggsBundleState,
                        hs: HitchinSimpsonParts | None = None) -> tuple[float, float, float]:
    """Degree, slope and the Einstein constant of the state.

    deg = (1/2pi) integral of tr(i Lambda F); the Higgs bracket is traceless
    so it never contributes. lambda = 2 pi * slope / Vol.
    """
    if hs is None:
        f11 = curvature(state.metric, state.structure.a).f11
    else:
        f11 = hs.chern.f11
    s = tr_field(contract_lambda(f11))
    deg = integrate(np.real(1j * s.comps[0, 0, ..., 0, 0]), state.base) / (2.0 * np.pi)
    mu = deg / state.rank
    lam = 2.0 * np.pi * mu / state.base.volume
    return deg, mu, lam


def hermiticity_residual(f11: MatrixFormField, H: HermitianMetric) -> float:
    """Deviation from the curvature-type relation (F_{ij})^{*H} = F_{ji}.

    Zero in the continuum for Chern curvatures and Higgs brackets; the
    discrete value is pure truncation error.
    """
    worst = 0.0
    for ip, I in enumerate(f11.p_indices()):
        for iq, J in enumerate(f11.q_indices()):
            lhs = H.inv @ dagger(f11.comps[ip, iq]) @ H.mat
            rhs = f11.comps[f11.pos_p(J), f11.pos_q(I)]
            worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst
