"""Sub-bundles, extensions, second fundamental forms and filtrations.

Sub-bundles are represented by grids of H-orthogonal projectors, so nesting,
invariance and holomorphy checks are pointwise linear algebra. Quotients are
realized on the H-orthogonal complement through explicit frames, built from a
constant reference frame and pointwise H-orthonormalization; this covers the
topologically trivial sub-bundles in scope and fails loudly if a frame
degenerates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import (FlatnessCertificate, TopologicalIntegrals,
                          flatness_certificate, topological_integrals)
from .flows import run_donaldson_flow
from .geometry import (HermitianMetric, HiggsBundleState, HiggsStructure,
                       adjoint_field, chern_connection, curvature,
                       hitchin_simpson_curvature)
from .grid import (MatrixFormField, contract_lambda, d_flat, dbar_flat,
                   integrate, pointwise_norm2, sup_norm, tr_field, wedge)
from .linalg import dagger, sqrtm_hpd, trace

__all__ = [
    "HiggsSubbundle", "SubbundleReport", "subbundle_report", "MixedField",
    "ExtensionData", "split_extension", "GaussCodazziReport",
    "gauss_codazzi_blocks", "scaled_extension_metric", "scaled_adjoint_check",
    "assemble_block_state", "RhoSweepRow", "rho_sweep",
    "InvariantSectionReport", "invariant_section_check",
    "FiltrationLevel", "FiltrationReport", "verify_filtration",
    "assemble_filtration_metric", "SlopePositivityReport",
    "slope_positivity_report", "suggest_subbundles",
]


class MixedField:
    """Formal sum of matrix form fields of different bidegrees.

    Wedges that overflow the bidegree range vanish identically and are
    dropped, matching the continuum where those slots do not exist.
    """

    def __init__(self, parts=()):
        self.parts: dict[tuple[int, int], MatrixFormField] = {}
        for f in parts:
            self._accumulate(f)

    def _accumulate(self, f: MatrixFormField):
        key = (f.p, f.q)
        self.parts[key] = self.parts[key] + f if key in self.parts else f

    def __add__(self, other: "MixedField") -> "MixedField":
        return MixedField(list(self.parts.values()) + list(other.parts.values()))

    def __sub__(self, other: "MixedField") -> "MixedField":
        return MixedField(list(self.parts.values()) +
                          [-1.0 * f for f in other.parts.values()])

    def wedge(self, other: "MixedField") -> "MixedField":
        out = []
        for f in self.parts.values():
            n = f.base.n
            for g in other.parts.values():
                if f.p + g.p <= n and f.q + g.q <= n:
                    out.append(wedge(f, g))
        return MixedField(out)

    def pointwise_norm2(self) -> np.ndarray:
        acc = None
        for f in self.parts.values():
            n2 = pointwise_norm2(f)
            acc = n2 if acc is None else acc + n2
        if acc is None:
            raise ValueError("empty mixed field")
        return acc

    def sup(self) -> float:
        return float(np.sqrt(max(self.pointwise_norm2().max(), 0.0)))


@dataclass(eq=False)
class HiggsSubbundle:
    """phi-invariant holomorphic sub-bundle as an H-orthogonal projector grid."""

    projector: np.ndarray   # (*grid, r, r)
    rank: int

    @classmethod
    def from_constant_span(cls, state: HiggsBundleState,
                           columns: np.ndarray) -> "HiggsSubbundle":
        """Sub-bundle spanned by constant columns, H-orthogonalized pointwise."""
        r = state.rank
        cols = np.asarray(columns, dtype=np.complex128).reshape(r, -1)
        U = np.broadcast_to(cols, state.base.shape + cols.shape)
        return cls.from_frame(state.metric, U)

    @classmethod
    def from_frame(cls, H: HermitianMetric, U: np.ndarray) -> "HiggsSubbundle":
        """H-orthogonal projector onto the pointwise span of the frame U."""
        gram = dagger(U) @ H.mat @ U
        pi = U @ np.linalg.solve(gram, dagger(U) @ H.mat)
        return cls(np.ascontiguousarray(pi), U.shape[-1])

    def complement(self) -> np.ndarray:
        eye = np.eye(self.projector.shape[-1], dtype=np.complex128)
        return eye - self.projector

    def as_field(self, base) -> MatrixFormField:
        out = MatrixFormField.zeros(base, 0, 0, self.projector.shape[-1])
        out.comps[0, 0] = self.projector
        return out


@dataclass(frozen=True)
class SubbundleReport:
    idempotency: float
    self_adjointness: float
    rank_constancy: float
    phi_invariance: float
    holomorphy: float
    rank: int
    tol: float
    valid: bool

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("idempotency", "self_adjointness", "rank_constancy",
                 "phi_invariance", "holomorphy", "rank", "tol", "valid")}


def subbundle_report(state: HiggsBundleState, sub: HiggsSubbundle,
                     tol: float | None = None) -> SubbundleReport:
    """Residuals of the sub-bundle invariants against the ambient state.

    Holomorphy is measured through the projector as
    sup|(1-pi)(dbar pi + [a, pi]) pi| and invariance as sup|(1-pi) phi pi|.
    """
    a, phi, H = state.structure.a, state.structure.phi, state.metric
    base = state.base
    pi = sub.projector
    if tol is None:
        # grid-represented sub-bundles are holomorphic only to truncation
        # order, so the default gate scales with h^2
        tol = max(1e-8, 10.0 * base.spacing**2) * (1.0 + sup_norm(phi) + sup_norm(a))
    idem = float(np.abs(pi @ pi - pi).max())
    sadj = float(np.abs(H.inv @ dagger(pi) @ H.mat - pi).max())
    rank_const = float(np.abs(np.real(trace(pi)) - sub.rank).max())

    pi_f = sub.as_field(base)
    one_minus = MatrixFormField.zeros(base, 0, 0, state.rank)
    one_minus.comps[0, 0] = sub.complement()
    inv_res = sup_norm(wedge(wedge(one_minus, phi), pi_f), H.mat)
    dbar_pi = dbar_flat(pi_f) + wedge(a, pi_f) - wedge(pi_f, a)
    holo_res = sup_norm(wedge(wedge(one_minus, dbar_pi), pi_f), H.mat)
    return SubbundleReport(idem, sadj, rank_const, inv_res, holo_res,
                           sub.rank, tol,
                           valid=max(idem, sadj, rank_const, inv_res,
                                     holo_res) <= tol)


# -- frames and block decomposition -------------------------------------------------


def _orthonormal_frame(H: HermitianMetric, pi: np.ndarray, p: int,
                       against: np.ndarray | None = None) -> np.ndarray:
    """H-orthonormal frame of ran(pi), optionally H-orthogonal to a frame.

    Uses the top eigenvectors of the grid-averaged projector as a constant
    reference, projects pointwise, and H-orthonormalizes by Cholesky. Raises
    if the projected reference degenerates anywhere.
    """
    mean_pi = pi.reshape(-1, *pi.shape[-2:]).mean(axis=0)
    w, v = np.linalg.eigh(0.5 * (mean_pi + dagger(mean_pi)))
    ref = v[:, np.argsort(w)[::-1][:p]]
    U = pi @ ref
    if against is not None:
        U = U - against @ (dagger(against) @ H.mat @ U)
    gram = dagger(U) @ H.mat @ U
    try:
        L = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise ValueError("sub-bundle frame degenerates on the grid; cannot "
                         "build a global smooth frame") from exc
    return U @ np.linalg.inv(dagger(L))


def _block(H: HermitianMetric, U: np.ndarray, f: MatrixFormField,
           V: np.ndarray) -> MatrixFormField:
    """Block U^{+H} f V of a form field between two H-orthonormal frames."""
    out = MatrixFormField.zeros(f.base, f.p, f.q, U.shape[-1], V.shape[-1])
    proj = dagger(U) @ H.mat
    for ip in range(f.comps.shape[0]):
        for iq in range(f.comps.shape[1]):
            out.comps[ip, iq] = proj @ f.comps[ip, iq] @ V
    return out


def _dbar_of_frame(a: MatrixFormField, U: np.ndarray) -> MatrixFormField:
    """dbar_E applied to the columns of a frame: dbar(U) + a U."""
    Uf = MatrixFormField.zeros(a.base, 0, 0, U.shape[-2], U.shape[-1])
    Uf.comps[0, 0] = U
    return dbar_flat(Uf) + wedge(a, Uf)


def _frame_coeff(H: HermitianMetric, U: np.ndarray,
                 f: MatrixFormField) -> MatrixFormField:
    """Coefficients U^{+H} f of a frame-valued form field."""
    out = MatrixFormField.zeros(f.base, f.p, f.q, U.shape[-1], f.cols)
    proj = dagger(U) @ H.mat
    for ip in range(f.comps.shape[0]):
        for iq in range(f.comps.shape[1]):
            out.comps[ip, iq] = proj @ f.comps[ip, iq]
    return out


@dataclass(eq=False)
class ExtensionData:
    """H-orthogonal block data of an extension 0 -> S -> E -> Q -> 0.

    In the H-orthonormal frames the induced metrics are the identity, so
    block norms are plain and the adjoints of gamma and zeta are conjugate
    transposes (until a scaled metric reweights them).
    """

    frame_s: np.ndarray
    frame_q: np.ndarray
    a_s: MatrixFormField
    a_q: MatrixFormField
    gamma: MatrixFormField      # (0,1), Hom(Q,S): second fundamental form
    zeta: MatrixFormField       # (1,0), Hom(Q,S)
    phi_s: MatrixFormField
    phi_q: MatrixFormField
    lower_left_dbar: float
    lower_left_phi: float

    @property
    def rank_s(self) -> int:
        return self.frame_s.shape[-1]

    @property
    def rank_q(self) -> int:
        return self.frame_q.shape[-1]

    def sub_state(self) -> HiggsBundleState:
        base = self.a_s.base
        return HiggsBundleState(HiggsStructure(self.a_s, self.phi_s),
                                HermitianMetric.identity(base, self.rank_s))

    def quotient_state(self) -> HiggsBundleState:
        base = self.a_q.base
        return HiggsBundleState(HiggsStructure(self.a_q, self.phi_q),
                                HermitianMetric.identity(base, self.rank_q))


def split_extension(state: HiggsBundleState, sub: HiggsSubbundle,
                    tol: float | None = None) -> ExtensionData:
    """H-orthogonal block decomposition of dbar_E and phi along S + S^perp.

    The lower-left blocks vanish in the continuum by invariance and
    holomorphy; their discrete sup-norms are returned as residuals.
    """
    report = subbundle_report(state, sub, tol)
    if not report.valid:
        raise ValueError(f"sub-bundle violates its invariants: {report.as_dict()}")
    a, phi, H = state.structure.a, state.structure.phi, state.metric
    U_s = _orthonormal_frame(H, sub.projector, sub.rank)
    eye = np.eye(state.rank, dtype=np.complex128)
    U_q = _orthonormal_frame(H, eye - sub.projector, state.rank - sub.rank,
                             against=U_s)

    dbar_Us, dbar_Uq = _dbar_of_frame(a, U_s), _dbar_of_frame(a, U_q)
    a_s = _frame_coeff(H, U_s, dbar_Us)
    a_q = _frame_coeff(H, U_q, dbar_Uq)
    gamma = _frame_coeff(H, U_s, dbar_Uq)
    lower_dbar = _frame_coeff(H, U_q, dbar_Us)

    phi_s = _block(H, U_s, phi, U_s)
    phi_q = _block(H, U_q, phi, U_q)
    zeta = _block(H, U_s, phi, U_q)
    lower_phi = _block(H, U_q, phi, U_s)
    return ExtensionData(U_s, U_q, a_s, a_q, gamma, zeta, phi_s, phi_q,
                         sup_norm(lower_dbar), sup_norm(lower_phi))


def _hom_d10(x: MatrixFormField, b_left: MatrixFormField,
             b_right: MatrixFormField) -> MatrixFormField:
    """(1,0) part of the induced connection on Hom(right, left) bundles."""
    sign = -1.0 if (x.p + x.q) % 2 else 1.0
    return d_flat(x) + wedge(b_left, x) - sign * wedge(x, b_right)


def _hom_d01(x: MatrixFormField, a_left: MatrixFormField,
             a_right: MatrixFormField) -> MatrixFormField:
    sign = -1.0 if (x.p + x.q) % 2 else 1.0
    return dbar_flat(x) + wedge(a_left, x) - sign * wedge(x, a_right)


def _blockify(tl, tr, bl, br, s: int, q: int) -> MatrixFormField:
    """Assemble a 2x2 block field of total rank s+q; None entries are zero."""
    ref = next(x for x in (tl, tr, bl, br) if x is not None)
    out = MatrixFormField.zeros(ref.base, ref.p, ref.q, s + q)
    for blk, r0, c0 in ((tl, 0, 0), (tr, 0, s), (bl, s, 0), (br, s, s)):
        if blk is not None:
            out.comps[..., r0:r0 + blk.rows, c0:c0 + blk.cols] += blk.comps
    return out


def _blockdiag_mixed(top: MixedField, bottom: MixedField, s: int,
                     q: int) -> MixedField:
    out = []
    for key in sorted(set(top.parts) | set(bottom.parts)):
        out.append(_blockify(top.parts.get(key), None, None,
                             bottom.parts.get(key), s, q))
    return MixedField(out)


@dataclass(eq=False)
class GaussCodazziReport:
    """Block assembly of the Hitchin-Simpson curvature vs conjugated ambient."""

    blocks: dict
    ambient: dict
    residual: float
    scale: float

    def relative_residual(self) -> float:
        return self.residual / max(self.scale, 1e-30)


def gauss_codazzi_blocks(state: HiggsBundleState, sub: HiggsSubbundle,
                         tol: float | None = None) -> GaussCodazziReport:
    """Assemble all sixteen block entries of the split curvature and compare
    them with the ambient Hitchin-Simpson curvature conjugated into the
    splitting; the two sides share no code path beyond the primitives.
    """
    ext = split_extension(state, sub, tol)
    base = state.base
    s, q = ext.rank_s, ext.rank_q
    ident_s = HermitianMetric.identity(base, s)
    ident_q = HermitianMetric.identity(base, q)
    b_s = chern_connection(ident_s, ext.a_s)
    b_q = chern_connection(ident_q, ext.a_q)
    f_s = curvature(ident_s, ext.a_s)
    f_q = curvature(ident_q, ext.a_q)

    gamma, zeta = ext.gamma, ext.zeta
    gamma_st = adjoint_field(gamma, ident_s, ident_q)   # (1,0), Hom(S,Q)
    zeta_st = adjoint_field(zeta, ident_s, ident_q)     # (0,1), Hom(S,Q)
    phi_s_st = adjoint_field(ext.phi_s, ident_s)
    phi_q_st = adjoint_field(ext.phi_q, ident_q)

    parts: list[MatrixFormField] = []

    def put(tl, tr, bl, br):
        parts.append(_blockify(tl, tr, bl, br, s, q))

    # Chern curvature group
    put(f_s.f11 - wedge(gamma, gamma_st), _hom_d10(gamma, b_s, b_q),
        -1.0 * _hom_d01(gamma_st, ext.a_q, ext.a_s),
        f_q.f11 - wedge(gamma_st, gamma))
    # Higgs bracket group
    put(wedge(ext.phi_s, phi_s_st) + wedge(phi_s_st, ext.phi_s) + wedge(zeta, zeta_st),
        wedge(zeta, phi_q_st) + wedge(phi_s_st, zeta),
        wedge(zeta_st, ext.phi_s) + wedge(ext.phi_q, zeta_st),
        wedge(ext.phi_q, phi_q_st) + wedge(phi_q_st, ext.phi_q) + wedge(zeta_st, zeta))
    if base.n >= 2:
        # del_H phi group, type (2,0)
        put(_hom_d10(ext.phi_s, b_s, b_s) - wedge(zeta, gamma_st),
            _hom_d10(zeta, b_s, b_q),
            -1.0 * (wedge(gamma_st, ext.phi_s) + wedge(ext.phi_q, gamma_st)),
            _hom_d10(ext.phi_q, b_q, b_q) - wedge(gamma_st, zeta))
        # dbar_E phi* group, type (0,2)
        put(_hom_d01(phi_s_st, ext.a_s, ext.a_s) + wedge(gamma, zeta_st),
            wedge(gamma, phi_q_st) + wedge(phi_s_st, gamma),
            _hom_d01(zeta_st, ext.a_q, ext.a_s),
            _hom_d01(phi_q_st, ext.a_q, ext.a_q) + wedge(zeta_st, gamma))
    assembled = MixedField(parts)

    hs = hitchin_simpson_curvature(state)
    U = np.concatenate([ext.frame_s, ext.frame_q], axis=-1)
    proj = dagger(U) @ state.metric.mat

    def conj(fieldm: MatrixFormField) -> MatrixFormField:
        out = MatrixFormField.zeros(base, fieldm.p, fieldm.q, s + q)
        for ip in range(fieldm.comps.shape[0]):
            for iq in range(fieldm.comps.shape[1]):
                out.comps[ip, iq] = proj @ fieldm.comps[ip, iq] @ U
        return out

    ambient_parts = [conj(hs.part11)]
    if hs.dphi is not None:
        ambient_parts.append(conj(hs.dphi))
    if hs.dbar_phistar is not None:
        ambient_parts.append(conj(hs.dbar_phistar))
    ambient = MixedField(ambient_parts)

    residual = 0.0
    scale = 0.0
    for key in sorted(set(assembled.parts) | set(ambient.parts)):
        blk = assembled.parts.get(key)
        amb = ambient.parts.get(key)
        if blk is None:
            residual = max(residual, sup_norm(amb))
            scale = max(scale, sup_norm(amb))
        elif amb is None:
            residual = max(residual, sup_norm(blk))
            scale = max(scale, sup_norm(blk))
        else:
            residual = max(residual, sup_norm(blk - amb))
            scale = max(scale, sup_norm(amb), sup_norm(blk))
    return GaussCodazziReport(assembled.parts, ambient.parts, residual, scale)


# -- the scaled extension metric and the rho sweep ----------------------------------


def scaled_extension_metric(ext: ExtensionData, H_s: np.ndarray | None,
                            H_q: np.ndarray | None, rho: float,
                            base) -> HermitianMetric:
    """Block metric diag(H_S, H_Q / rho^2) transported to the total bundle.

    H_s and H_q are factor metrics in the extension frames (identity when
    None). Under this family the off-diagonal adjoints scale as rho^2,
    which scaled_adjoint_check verifies.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    s, q = ext.rank_s, ext.rank_q
    r = s + q
    Hblock = np.zeros(base.shape + (r, r), np.complex128)
    Hblock[..., :s, :s] = np.eye(s) if H_s is None else H_s
    Hblock[..., s:, s:] = (np.eye(q) if H_q is None else H_q) / rho**2
    U = np.concatenate([ext.frame_s, ext.frame_q], axis=-1)
    U_inv = np.linalg.inv(U)
    return HermitianMetric(base, dagger(U_inv) @ Hblock @ U_inv)


def scaled_adjoint_check(ext: ExtensionData, rho: float, base) -> float:
    """sup|gamma*_rho - rho^2 gamma*_1| and the same for zeta."""
    s, q = ext.rank_s, ext.rank_q
    ident_s = HermitianMetric.identity(base, s)
    ident_q = HermitianMetric.identity(base, q)
    Hq_rho = HermitianMetric(base, np.broadcast_to(
        np.eye(q, dtype=np.complex128) / rho**2, base.shape + (q, q)).copy())
    worst = 0.0
    for f in (ext.gamma, ext.zeta):
        a_rho = adjoint_field(f, ident_s, Hq_rho)
        a_one = adjoint_field(f, ident_s, ident_q)
        worst = max(worst, sup_norm(a_rho - rho**2 * a_one))
    return worst


def assemble_block_state(ext: ExtensionData, state: HiggsBundleState,
                         rho: float) -> HiggsBundleState:
    """Original structure equipped with the rho-scaled extension metric."""
    H = scaled_extension_metric(ext, None, None, rho, state.base)
    return HiggsBundleState(state.structure, H)


@dataclass(frozen=True)
class RhoSweepRow:
    rho: float
    sup_a: float
    sup_b1: float
    sup_c1: float
    sup_f: float

    def as_dict(self) -> dict:
        return {"rho": self.rho, "sup_a": self.sup_a, "sup_b1": self.sup_b1,
                "sup_c1": self.sup_c1, "sup_f": self.sup_f}


def _factor_flat_parts(ext: ExtensionData, base) -> MixedField:
    """Direct-sum part: full Hitchin-Simpson curvature of each factor."""
    parts_top, parts_bot = [], []
    for st, sink in ((ext.sub_state(), parts_top),
                     (ext.quotient_state(), parts_bot)):
        hs = hitchin_simpson_curvature(st)
        sink.append(hs.part11)
        if hs.dphi is not None:
            sink.append(hs.dphi)
        if hs.dbar_phistar is not None:
            sink.append(hs.dbar_phistar)
    return _blockdiag_mixed(MixedField(parts_top), MixedField(parts_bot),
                            ext.rank_s, ext.rank_q)


def rho_sweep(state: HiggsBundleState, sub: HiggsSubbundle,
              rhos: list[float]) -> tuple[list[RhoSweepRow], float | None]:
    """Sweep the block-metric scale and fit the flatness decay slope.

    Rows report the rho-independent direct-sum part A, the quadratic part B
    and the mixed first-order part C (both at rho = 1), and the total sup|F|
    of the assembled state under the scaled metric, computed independently
    of the decomposition. The fitted value is the log-log slope of
    (sup|F| - sup|A|) against rho.
    """
    if any(r <= 0 or r > 1 for r in rhos):
        raise ValueError("rho values must lie in (0, 1]")
    ext = split_extension(state, sub)
    base = state.base
    s, q = ext.rank_s, ext.rank_q
    ident_s = HermitianMetric.identity(base, s)
    ident_q = HermitianMetric.identity(base, q)
    b_s = chern_connection(ident_s, ext.a_s)
    b_q = chern_connection(ident_q, ext.a_q)

    sup_a = _factor_flat_parts(ext, base).sup()

    gamma_st = adjoint_field(ext.gamma, ident_s, ident_q)
    zeta_st = adjoint_field(ext.zeta, ident_s, ident_q)
    phi_s_st = adjoint_field(ext.phi_s, ident_s)
    phi_q_st = adjoint_field(ext.phi_q, ident_q)

    zmg = MixedField([ext.zeta]) - MixedField([ext.gamma])        # zeta - gamma
    zpg_st = MixedField([zeta_st, gamma_st])                      # zeta* + gamma*
    b_mixed = _blockdiag_mixed(zmg.wedge(zpg_st), zpg_st.wedge(zmg), s, q)
    sup_b1 = b_mixed.sup()

    gpz = MixedField([ext.gamma, ext.zeta])                       # gamma + zeta
    zmg_st = MixedField([zeta_st]) - MixedField([gamma_st])       # zeta* - gamma*
    # derivative terms whose raised degree has no slot vanish identically
    top_c = MixedField([_hom_d10(f, b_s, b_q) for f in gpz.parts.values()
                        if f.p + 1 <= base.n]) \
        + gpz.wedge(MixedField([phi_q_st])) + MixedField([phi_s_st]).wedge(gpz)
    bot_c = MixedField([_hom_d01(f, ext.a_q, ext.a_s)
                        for f in zmg_st.parts.values() if f.q + 1 <= base.n]) \
        + zmg_st.wedge(MixedField([ext.phi_s])) + MixedField([ext.phi_q]).wedge(zmg_st)
    c_fields = [_blockify(None, f, None, None, s, q) for f in top_c.parts.values()] \
        + [_blockify(None, None, f, None, s, q) for f in bot_c.parts.values()]
    sup_c1 = MixedField(c_fields).sup() if c_fields else 0.0

    rows = []
    for rho in rhos:
        total = assemble_block_state(ext, state, rho)
        hs = hitchin_simpson_curvature(total)
        rows.append(RhoSweepRow(rho, sup_a, sup_b1, sup_c1,
                                hs.sup_norm(total.metric)))
    return rows, _fit_rho_slope(rows)


def _fit_rho_slope(rows: list[RhoSweepRow]) -> float | None:
    xs, ys = [], []
    for row in rows:
        excess = row.sup_f - row.sup_a
        if excess > 1e-13 * (1.0 + row.sup_a):
            xs.append(math.log(row.rho))
            ys.append(math.log(excess))
    if len(xs) < 2:
        return None
    return float(np.polyfit(xs, ys, 1)[0])


# -- invariant sections --------------------------------------------------------------


@dataclass(frozen=True)
class InvariantSectionReport:
    holomorphy: float          # sup |dbar_E s|
    invariance: float          # sup |phi s - eta s| after the least-squares fit
    form_minimum: float        # min over grid and unit tangent vectors
    min_length: float          # min |s|_H, the no-zeros witness
    eta_sup: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("holomorphy", "invariance", "form_minimum", "min_length",
                 "eta_sup")}


def invariant_section_check(state: HiggsBundleState,
                            section: np.ndarray) -> InvariantSectionReport:
    """Check a section for holomorphy, phi-invariance and bracket positivity.

    The one-form eta with phi(s) = eta s is fitted pointwise by least
    squares; the reported form minimum is the smallest value of
    i H([phi, phi*] s, s) over grid points and g-unit (1,0) tangent vectors,
    nonnegative in the continuum for invariant holomorphic sections.
    """
    a, phi, H = state.structure.a, state.structure.phi, state.metric
    base, n, r = state.base, state.base.n, state.rank
    s = np.asarray(section, dtype=np.complex128)
    if s.shape != base.shape + (r,):
        raise ValueError(f"section shape {s.shape} does not match the grid")
    s_col = s[..., None]
    length2 = np.real(dagger(s_col) @ H.mat @ s_col)[..., 0, 0]
    if length2.max() <= 0:
        raise ValueError("section is identically zero")

    # holomorphy: dbar s + a s
    sf = MatrixFormField.zeros(base, 0, 0, r, 1)
    sf.comps[0, 0] = s_col
    dbar_s = dbar_flat(sf) + wedge(a, sf)
    holo = math.sqrt(max(float(
        sum(np.real(dagger(dbar_s.comps[0, k]) @ H.mat @ dbar_s.comps[0, k])[..., 0, 0]
            for k in range(n)).max()), 0.0) * 2.0)

    phistar = adjoint_field(phi, H)
    floor = 1e-30
    eta = np.empty(base.shape + (n,), np.complex128)
    inv_res2 = np.zeros(base.shape)
    for i in range(n):
        phi_i_s = phi.comps[i, 0] @ s_col
        eta_i = (dagger(s_col) @ H.mat @ phi_i_s)[..., 0, 0] / (length2 + floor)
        eta[..., i] = eta_i
        resid = phi_i_s - eta_i[..., None, None] * s_col
        inv_res2 += np.real(dagger(resid) @ H.mat @ resid)[..., 0, 0]
    invariance = math.sqrt(max(float(inv_res2.max()), 0.0) * 2.0)

    # M_ij = H([phi_i, phi_j*] s, s); form value on g-unit vectors is
    # 2 * smallest eigenvalue of M
    M = np.empty(base.shape + (n, n), np.complex128)
    for i in range(n):
        for j in range(n):
            phj_st = phistar.comps[0, j]
            comm = phi.comps[i, 0] @ phj_st - phj_st @ phi.comps[i, 0]
            M[..., i, j] = (dagger(s_col) @ H.mat @ (comm @ s_col))[..., 0, 0]
    eigs = np.linalg.eigvalsh(0.5 * (M + dagger(M)))
    form_min = 2.0 * float(eigs.min())
    eta_sup = math.sqrt(float((np.abs(eta) ** 2).sum(axis=-1).max()) * 2.0)
    return InvariantSectionReport(holo, invariance, form_min,
                                  math.sqrt(float(length2.min())), eta_sup)


# -- filtrations ---------------------------------------------------------------------


@dataclass(eq=False)
class FiltrationLevel:
    index: int
    rank: int
    certificate: FlatnessCertificate
    flowed_time: float
    nesting_residual: float
    report: SubbundleReport
    topology: TopologicalIntegrals


@dataclass(eq=False)
class FiltrationReport:
    levels: list[FiltrationLevel]
    additivity_c1: float
    additivity_ch2: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "levels": [{
                "index": lv.index, "rank": lv.rank,
                "certificate": lv.certificate.as_dict(),
                "flowed_time": lv.flowed_time,
                "nesting_residual": lv.nesting_residual,
                "subbundle": lv.report.as_dict(),
                "topology": lv.topology.as_dict(),
            } for lv in self.levels],
            "additivity_c1": self.additivity_c1,
            "additivity_ch2": self.additivity_ch2,
            "passed": self.passed,
        }


def verify_filtration(state: HiggsBundleState, subs: list[HiggsSubbundle],
                      eps_target: float, flow_time: float = 0.0,
                      flow_dt: float = 1e-2,
                      tol: float | None = None) -> FiltrationReport:
    """Certify that every quotient of a nested chain of sub-bundles is
    (approximately) Hermitian flat.

    subs lists the proper levels in increasing rank; the full bundle is the
    implicit last level. Each quotient is realized on the H-orthogonal
    complement of the previous level, flowed for the budget only if its
    initial certificate misses the target, and certified. Topological
    additivity across the filtration is reported alongside.
    """
    a, phi, H = state.structure.a, state.structure.phi, state.metric
    base, r = state.base, state.rank
    ranks = [sub.rank for sub in subs]
    if ranks != sorted(ranks) or len(set(ranks)) != len(ranks) or \
            (ranks and ranks[-1] >= r):
        raise ValueError("filtration levels must have strictly increasing "
                         "ranks below the ambient rank")

    # nesting and per-level invariants
    nesting = [0.0]
    for lo, hi in zip(subs, subs[1:]):
        nesting.append(float(np.abs(hi.projector @ lo.projector
                                    - lo.projector).max()))
    reports = []
    for k, sub in enumerate(subs):
        rep = subbundle_report(state, sub, tol)
        if not rep.valid:
            raise ValueError(f"filtration level {k} (rank {sub.rank}) violates "
                             f"sub-bundle invariants: {rep.as_dict()}")
        if nesting[k] > rep.tol:
            raise ValueError(f"filtration levels {k-1} and {k} are not nested: "
                             f"residual {nesting[k]:.3e}")
        reports.append(rep)

    eye = np.broadcast_to(np.eye(r, dtype=np.complex128),
                          base.shape + (r, r)).copy()
    projs = [sub.projector for sub in subs] + [eye]
    full_report = SubbundleReport(0.0, 0.0, 0.0, 0.0, 0.0, r,
                                  reports[-1].tol if reports else 1e-6, True)
    reports.append(full_report)
    nesting.append(0.0 if not subs else
                   float(np.abs(eye @ projs[-2] - projs[-2]).max()))

    levels = []
    prev_frame = None
    prev_proj = np.zeros_like(projs[0])
    prev_rank = 0
    sums = {"c1": 0.0, "ch2": 0.0}
    for k, pi in enumerate(projs):
        p_k = subs[k].rank if k < len(subs) else r
        quot_rank = p_k - prev_rank
        # nested H-orthogonal projectors commute, so pi - prev is again an
        # H-orthogonal projector, onto the k-th quotient
        U = _orthonormal_frame(H, pi - prev_proj, quot_rank, against=prev_frame)
        a_q = _frame_coeff(H, U, _dbar_of_frame(a, U))
        phi_q = _block(H, U, phi, U)
        qstate = HiggsBundleState(HiggsStructure(a_q, phi_q),
                                  HermitianMetric.identity(base, quot_rank))
        cert = flatness_certificate(qstate, eps_target)
        flowed = 0.0
        if not cert.passed and flow_time > 0.0:
            res = run_donaldson_flow(qstate, flow_time, flow_dt)
            qstate = res.final
            cert = flatness_certificate(qstate, eps_target)
            flowed = flow_time
        topo = topological_integrals(qstate)
        sums["c1"] += topo.c1_omega
        sums["ch2"] += topo.ch2
        levels.append(FiltrationLevel(k, quot_rank, cert, flowed,
                                      nesting[k], reports[k], topo))
        prev_frame = U if prev_frame is None else \
            np.concatenate([prev_frame, U], axis=-1)
        prev_proj = pi
        prev_rank = p_k

    ambient_topo = topological_integrals(state)
    add_c1 = abs(sums["c1"] - ambient_topo.c1_omega)
    add_ch2 = abs(sums["ch2"] - ambient_topo.ch2)
    passed = all(lv.certificate.passed for lv in levels)
    return FiltrationReport(levels, add_c1, add_ch2, passed)


def assemble_filtration_metric(state: HiggsBundleState,
                               subs: list[HiggsSubbundle],
                               rho: float) -> HiggsBundleState:
    """Scaled block metric rho^{-2k} on the k-th quotient of the filtration.

    Applying the two-factor scaling inductively down the filtration with a
    common rho reassembles a total metric; for certified flat quotients the
    total curvature decays like rho^2.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    H, base, r = state.metric, state.base, state.rank
    eye = np.broadcast_to(np.eye(r, dtype=np.complex128),
                          base.shape + (r, r)).copy()
    projs = [sub.projector for sub in subs] + [eye]
    frames = []
    prev = None
    prev_proj = np.zeros_like(projs[0])
    prev_rank = 0
    for k, pi in enumerate(projs):
        p_k = subs[k].rank if k < len(subs) else r
        U = _orthonormal_frame(H, pi - prev_proj, p_k - prev_rank, against=prev)
        frames.append(U)
        prev = U if prev is None else np.concatenate([prev, U], axis=-1)
        prev_proj = pi
        prev_rank = p_k
    U_full = prev
    weights = np.concatenate([
        np.full(frames[k].shape[-1], rho ** (-2 * k)) for k in range(len(frames))])
    Hblock = np.zeros(base.shape + (r, r), np.complex128)
    idx = np.arange(r)
    Hblock[..., idx, idx] = weights
    U_inv = np.linalg.inv(U_full)
    metric = HermitianMetric(base, dagger(U_inv) @ Hblock @ U_inv)
    return HiggsBundleState(state.structure, metric)


# -- slope/positivity diagnostics and the suggestion heuristic -----------------------


@dataclass(frozen=True)
class SlopePositivityReport:
    """Sign structure of the second-fundamental-form trace terms.

    After the omega-trace the gamma term is nonpositive and the zeta term
    nonnegative, so the sub-bundle degree is squeezed once the ambient state
    is nearly flat: deg(S) <= epsilon * n * Vol with epsilon = sup|F_HS|.
    """

    gamma_trace_max: float      # max over grid of tr(i Lambda gamma^gamma*)
    zeta_trace_min: float       # min over grid of tr(i Lambda zeta^zeta*)
    deg_sub: float
    epsilon: float
    degree_margin: float        # epsilon * n * Vol - deg(S)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("gamma_trace_max", "zeta_trace_min", "deg_sub", "epsilon",
                 "degree_margin")}


def slope_positivity_report(state: HiggsBundleState,
                            sub: HiggsSubbundle) -> SlopePositivityReport:
    ext = split_extension(state, sub)
    base = state.base
    ident_s = HermitianMetric.identity(base, ext.rank_s)
    ident_q = HermitianMetric.identity(base, ext.rank_q)
    gamma_st = adjoint_field(ext.gamma, ident_s, ident_q)
    zeta_st = adjoint_field(ext.zeta, ident_s, ident_q)

    def omega_trace(f11: MatrixFormField) -> np.ndarray:
        return np.real(1j * tr_field(contract_lambda(f11)).comps[0, 0, ..., 0, 0])

    g_tr = omega_trace(wedge(ext.gamma, gamma_st))
    z_tr = omega_trace(wedge(ext.zeta, zeta_st))
    f_s = curvature(ident_s, ext.a_s).f11
    deg_sub = integrate(omega_trace(f_s), base) / (2.0 * math.pi)
    hs = hitchin_simpson_curvature(state)
    eps = hs.sup_norm(state.metric)
    margin = eps * base.n * base.volume - deg_sub
    return SlopePositivityReport(float(g_tr.max()), float(z_tr.min()),
                                 deg_sub, eps, margin)


def suggest_subbundles(H0: HermitianMetric, H_t: HermitianMetric,
                       max_candidates: int = 3) -> list[HiggsSubbundle]:
    """Experimental: eigen-clustering of H0^{-1} H(t) as a sub-bundle guess.

    Along the metric flow the directions that destabilize collapse in
    H0^{-1} H(t); grouping its pointwise spectrum by the largest gaps in the
    grid-averaged log eigenvalues suggests candidate ranks and frames. The
    output carries no correctness claim and must still pass verification.
    """
    w0 = sqrtm_hpd(H0.mat)
    w0_inv = np.linalg.inv(w0)
    m = w0_inv @ H_t.mat @ w0_inv
    vals, vecs = np.linalg.eigh(0.5 * (m + dagger(m)))
    mean_log = np.log(np.maximum(vals, 1e-300)).reshape(-1, vals.shape[-1]).mean(axis=0)
    r = vals.shape[-1]
    gaps = mean_log[1:] - mean_log[:-1]
    order = np.argsort(gaps)[::-1]
    out = []
    for cut in order[:max_candidates]:
        p = cut + 1
        if p >= r or gaps[cut] <= 1e-9:
            continue
        U = w0_inv @ vecs[..., :p]
        out.append(HiggsSubbundle.from_frame(H0, U))
    return out
