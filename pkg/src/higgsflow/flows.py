"""Time integration of the two gradient flows and the gauge correspondence.

The metric flow evolves H on a fixed Higgs structure through the
multiplicative update H -> H exp(-2 dt K), which preserves positive
definiteness unconditionally. The pair flow evolves (a, phi) over a fixed
background metric through the complex gauge factor exp(-dt K); to first
order in dt this realizes the gradient flow with the codifferential reduced
by the Kahler identities to first-order operators,
D_A* F = i (del_A - dbar_A) Lambda F on (1,1)-forms.

Both flow runners default to a midpoint composition of these updates, which
is second-order accurate in dt while keeping the structure-preserving form
of the single steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (HermitianMetric, HiggsBundleState, HiggsStructure,
                       degree_slope_lambda, hitchin_simpson_curvature,
                       validate_structure)
from .grid import (MatrixFormField, contract_lambda, dbar_flat, integrate,
                   pointwise_norm2, sup_norm)
from .linalg import dagger, expm_batched, hermitize, sqrtm_hpd

__all__ = [
    "HiggsPair", "FlowTrace", "FlowResult", "FlowBlowup",
    "einstein_deviation", "donaldson_step", "ymh_energy", "energy_density",
    "ymh_step", "complex_gauge_apply", "gauge_from_metric",
    "run_donaldson_flow", "run_ymh_flow", "flow_equivalence_check",
    "EquivalenceReport",
]


@dataclass(eq=False)
class HiggsPair:
    """Higgs pair (a, phi) over a fixed background metric.

    The background is never mutated by pair evolution; the unitary
    connection is determined by (background, a) through the Chern formula.
    """

    structure: HiggsStructure
    background: HermitianMetric

    def __post_init__(self):
        if self.background.rank != self.structure.rank:
            raise ValueError("background rank does not match the pair")

    @property
    def base(self):
        return self.structure.base

    @property
    def rank(self):
        return self.structure.rank

    def as_state(self) -> HiggsBundleState:
        return HiggsBundleState(self.structure, self.background)


def einstein_deviation(state: HiggsBundleState) -> MatrixFormField:
    """K = i Lambda(F_H + [phi, phi^{*H}]) - lambda Id, a (0,0) field.

    K is H-self-adjoint up to truncation error; donaldson_step symmetrizes
    before exponentiating so positivity is exact.
    """
    hs = hitchin_simpson_curvature(state)
    return _deviation_from_parts(state, hs)


def _deviation_from_parts(state, hs) -> MatrixFormField:
    _, _, lam = degree_slope_lambda(state, hs)
    K = 1j * contract_lambda(hs.part11)
    eye = np.eye(state.rank, dtype=np.complex128)
    K.comps[0, 0] -= lam * eye
    return K


def _symmetrize_in_H(K: np.ndarray, H: HermitianMetric) -> np.ndarray:
    return 0.5 * (K + H.inv @ dagger(K) @ H.mat)


def donaldson_step(state: HiggsBundleState, dt: float,
                   K: MatrixFormField | None = None) -> HiggsBundleState:
    """One multiplicative metric update H' = H exp(-2 dt K).

    The structure (a, phi) is unchanged; H' is Hermitian positive-definite
    by construction. Step rejection on diagnostic blow-up is handled by the
    flow runner.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if K is None:
        K = einstein_deviation(state)
    Ks = _symmetrize_in_H(K.comps[0, 0], state.metric)
    Hnew = state.metric.mat @ expm_batched(-2.0 * dt * Ks)
    return HiggsBundleState(state.structure,
                            HermitianMetric(state.base, hermitize(Hnew)))


def energy_density(pair: HiggsPair) -> np.ndarray:
    """Pointwise e(A, phi) = |F_A + [phi, phi*]|^2 + 2 |del_A phi|^2."""
    hs = hitchin_simpson_curvature(pair.as_state())
    return hs.pointwise_energy(pair.background)


def ymh_energy(pair: HiggsPair) -> float:
    """Integral of the energy density; shares its computation path exactly."""
    return integrate(energy_density(pair), pair.base)


def complex_gauge_apply(sigma: np.ndarray, pair: HiggsPair) -> HiggsPair:
    """Action of a complex gauge transformation on the pair.

    a' = sigma a sigma^{-1} - (dbar sigma) sigma^{-1} and
    phi' = sigma phi sigma^{-1}; the (1,0) connection part follows from the
    Chern formula and transforms by the background-adjoint conjugation.
    """
    base = pair.base
    sig_inv = np.linalg.inv(sigma)
    sig_field = MatrixFormField.zeros(base, 0, 0, pair.rank)
    sig_field.comps[0, 0] = sigma
    dbar_sig = dbar_flat(sig_field)

    a, phi = pair.structure.a, pair.structure.phi
    a_new = MatrixFormField.zeros(base, 0, 1, pair.rank)
    for iq in range(a.comps.shape[1]):
        a_new.comps[0, iq] = sigma @ a.comps[0, iq] @ sig_inv \
            - dbar_sig.comps[0, iq] @ sig_inv
    phi_new = MatrixFormField.zeros(base, 1, 0, pair.rank)
    for ip in range(phi.comps.shape[0]):
        phi_new.comps[ip, 0] = sigma @ phi.comps[ip, 0] @ sig_inv
    return HiggsPair(HiggsStructure(a_new, phi_new), pair.background)


def ymh_step(pair: HiggsPair, dt: float,
             K: MatrixFormField | None = None) -> HiggsPair:
    """One explicit pair update by the gauge factor exp(-dt K).

    Expanding in dt reproduces the gradient-flow equations: the Higgs field
    moves by -[K, phi] dt and the (0,1) connection part by dbar_A(K) dt.
    The update stays exactly in the complex gauge orbit of the pair.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if K is None:
        K = einstein_deviation(pair.as_state())
    Ks = _symmetrize_in_H(K.comps[0, 0], pair.background)
    sigma = expm_batched(-dt * Ks)
    return complex_gauge_apply(sigma, pair)


def gauge_from_metric(H0: HermitianMetric, H: HermitianMetric) -> np.ndarray:
    """g with g^{*H0} g = H0^{-1} H, the square root in the H0-positive cone."""
    H0.check_positive()
    H.check_positive()
    w = sqrtm_hpd(H0.mat)
    w_inv = np.linalg.inv(w)
    middle = sqrtm_hpd(hermitize(w_inv @ H.mat @ w_inv))
    return w_inv @ middle @ w


# -- traces and runners ------------------------------------------------------------


@dataclass
class FlowTrace:
    """Per-sample evidence record of a flow run."""

    t: list[float] = field(default_factory=list)
    ymh_energy: list[float] = field(default_factory=list)
    dev_l2: list[float] = field(default_factory=list)
    dev_sup: list[float] = field(default_factory=list)
    e_sup: list[float] = field(default_factory=list)
    phi_sup: list[float] = field(default_factory=list)
    dt: list[float] = field(default_factory=list)
    residual_integrability: list[float] = field(default_factory=list)
    residual_holomorphy: list[float] = field(default_factory=list)
    residual_symmetry: list[float] = field(default_factory=list)

    COLUMNS = ("t", "ymh_energy", "dev_l2", "dev_sup", "e_sup", "phi_sup", "dt",
               "residual_integrability", "residual_holomorphy", "residual_symmetry")

    def append(self, **row):
        for col in self.COLUMNS:
            getattr(self, col).append(float(row[col]))
        if len(self.t) >= 2 and not self.t[-1] > self.t[-2]:
            raise ValueError("sample times must be strictly increasing")
        if not all(math.isfinite(row[c]) for c in self.COLUMNS):
            raise ValueError(f"non-finite trace row at t={row['t']}")

    def rows(self):
        for k in range(len(self.t)):
            yield [getattr(self, col)[k] for col in self.COLUMNS]

    def write_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for row in self.rows():
                fh.write(",".join("%.17g" % v for v in row) + "\n")

    def fitted_exponent(self, column: str, t_min: float = 0.5) -> float | None:
        """Log-log slope of a decaying column against t, late samples only."""
        tt = np.asarray(self.t)
        yy = np.asarray(getattr(self, column))
        mask = (tt >= t_min) & (yy > 1e-300)
        if mask.sum() < 2:
            return None
        slope = np.polyfit(np.log(tt[mask]), np.log(yy[mask]), 1)[0]
        return float(slope)

    def summary(self) -> dict:
        out = {"samples": len(self.t)}
        if self.t:
            out["initial"] = {c: getattr(self, c)[0] for c in self.COLUMNS}
            out["final"] = {c: getattr(self, c)[-1] for c in self.COLUMNS}
            out["decay_exponent_ymh"] = self.fitted_exponent("ymh_energy")
            out["decay_exponent_e_sup"] = self.fitted_exponent("e_sup")
        return out


@dataclass(eq=False)
class FlowResult:
    final: object           # HiggsBundleState or HiggsPair
    trace: FlowTrace
    sampled_states: list    # (t, state-or-pair) at the sample schedule
    steps: int
    rejected: int


class FlowBlowup(RuntimeError):
    """A step produced non-finite fields and could not be rescued.

    Carries the last healthy state and the partial trace so callers can
    persist them.
    """

    def __init__(self, message, state, trace, t):
        super().__init__(message)
        self.state = state
        self.trace = trace
        self.t = t


def _sample_schedule(T: float, extra=None) -> list[float]:
    """Geometric schedule 0, t0, 2 t0, ... plus user samples and T."""
    pts = {0.0, float(T)}
    t = 0.0625
    while t < T:
        pts.add(t)
        t *= 2.0
    for s in (extra or []):
        if 0.0 <= s <= T:
            pts.add(float(s))
    return sorted(pts)


def _metric_trace_row(state: HiggsBundleState, dt: float, validity) -> dict:
    hs = hitchin_simpson_curvature(state)
    K = _deviation_from_parts(state, hs)
    H = state.metric
    dev2 = pointwise_norm2(K, H.mat)
    e = hs.pointwise_energy(H)
    phi2 = pointwise_norm2(state.structure.phi, H.mat)
    return dict(
        ymh_energy=integrate(e, state.base),
        dev_l2=math.sqrt(max(integrate(dev2, state.base), 0.0)),
        dev_sup=math.sqrt(max(dev2.max(), 0.0)),
        e_sup=float(e.max()),
        phi_sup=float(phi2.max()),
        dt=dt,
        residual_integrability=validity.integrability,
        residual_holomorphy=validity.holomorphy,
        residual_symmetry=validity.symmetry,
    )


def _advance(state_or_pair, dt: float, order: int, step_fn, K0):
    """Midpoint composition of the structure-preserving update."""
    if order == 1:
        return step_fn(state_or_pair, dt, K0)
    half = step_fn(state_or_pair, 0.5 * dt, K0)
    view = half if isinstance(half, HiggsBundleState) else half.as_state()
    return step_fn(state_or_pair, dt, einstein_deviation(view))


def _run_flow(start, T, dt, *, is_metric, fixed_dt, order, sample_times,
              dt_max, safety, growth, max_steps):
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    step_fn = donaldson_step if is_metric else ymh_step
    validity0 = validate_structure(start.structure)

    def row_of(obj, dt_now):
        if is_metric:
            return _metric_trace_row(obj, dt_now, validity0)
        val = validate_structure(obj.structure)
        return _metric_trace_row(obj.as_state(), dt_now, val)

    schedule = _sample_schedule(T, sample_times)
    trace = FlowTrace()
    sampled = []
    current = start
    t = 0.0
    trace.append(t=0.0, **row_of(current, dt))
    sampled.append((0.0, current))
    next_idx = 1 if schedule and schedule[0] == 0.0 else 0

    dev_prev = trace.dev_sup[-1]
    steps = rejected = 0
    dt_now = dt
    K_current = None
    while t < T - 1e-12 and steps < max_steps:
        if fixed_dt:
            dt_step = min(dt_now, T - t)
        else:
            cap = dt_max or math.inf
            if dev_prev > 0:
                cap = min(cap, safety / dev_prev)
            dt_step = min(dt_now, cap, T - t)
        # land exactly on the next sample time
        if next_idx < len(schedule):
            dt_step = min(dt_step, schedule[next_idx] - t)
        dt_step = max(dt_step, 1e-15)

        if K_current is None:
            view = current if is_metric else current.as_state()
            K_current = einstein_deviation(view)
        try:
            candidate = _advance(current, dt_step, order, step_fn, K_current)
            state_view = candidate if is_metric else candidate.as_state()
            finite = bool(np.isfinite(state_view.metric.mat).all()
                          and np.isfinite(state_view.structure.phi.comps).all()
                          and np.isfinite(state_view.structure.a.comps).all())
        except (FloatingPointError, np.linalg.LinAlgError):
            finite = False
        if not finite:
            if fixed_dt:
                raise FlowBlowup(f"flow produced non-finite fields at "
                                 f"t={t:.6g} with dt={dt_step:.3e}",
                                 current, trace, t)
            dt_now = 0.5 * dt_step
            rejected += 1
            if dt_now < 1e-12:
                raise FlowBlowup(f"flow step size collapsed at t={t:.6g}",
                                 current, trace, t)
            continue
        K_next = None
        if not fixed_dt:
            K_next = einstein_deviation(state_view)
            dev_new = math.sqrt(max(
                pointwise_norm2(K_next, state_view.metric.mat).max(), 0.0))
            if dev_prev > 0 and dev_new > 2.0 * dev_prev + 1e-12:
                # diagnostic blow-up: reject and halve
                dt_now = 0.5 * dt_step
                rejected += 1
                if dt_now < 1e-12:
                    raise FlowBlowup(f"flow step size collapsed at t={t:.6g}",
                                     current, trace, t)
                continue
            dev_prev = dev_new
            dt_now = dt_step * growth

        current = candidate
        K_current = K_next
        t += dt_step
        steps += 1
        if next_idx < len(schedule) and t >= schedule[next_idx] - 1e-12:
            trace.append(t=t, **row_of(current, dt_step))
            sampled.append((t, current))
            next_idx += 1
    return FlowResult(current, trace, sampled, steps, rejected)


def run_donaldson_flow(state: HiggsBundleState, T: float, dt: float, *,
                       fixed_dt: bool = False, order: int = 2,
                       sample_times=None, dt_max: float | None = None,
                       safety: float = 0.05, growth: float = 1.1,
                       max_steps: int = 2_000_000) -> FlowResult:
    """Integrate the metric flow to time T and record a FlowTrace.

    With fixed_dt the step is exactly dt (pinned-accuracy experiments);
    otherwise the step grows geometrically, is capped by safety/sup|K|, and
    is halved whenever the deviation sup-norm more than doubles in one step.
    """
    return _run_flow(state, T, dt, is_metric=True, fixed_dt=fixed_dt,
                     order=order, sample_times=sample_times, dt_max=dt_max,
                     safety=safety, growth=growth, max_steps=max_steps)


def run_ymh_flow(pair: HiggsPair, T: float, dt: float, *,
                 fixed_dt: bool = False, order: int = 2, sample_times=None,
                 dt_max: float | None = None, safety: float = 0.05,
                 growth: float = 1.1, max_steps: int = 2_000_000) -> FlowResult:
    """Integrate the pair flow to time T over the fixed background metric.

    Validity residuals of the evolved pair are recorded at every sample and
    never re-projected: constraint drift is evidence, not noise to hide.
    """
    return _run_flow(pair, T, dt, is_metric=False, fixed_dt=fixed_dt,
                     order=order, sample_times=sample_times, dt_max=dt_max,
                     safety=safety, growth=growth, max_steps=max_steps)


# -- the two-flow correspondence ---------------------------------------------------


def _metric_side_fields(structure0: HiggsStructure, H: HermitianMetric):
    """The three compared quantities computed on the metric side."""
    state = HiggsBundleState(structure0, H)
    hs = hitchin_simpson_curvature(state)
    f = hs.part11
    lam_field = 1j * contract_lambda(f)
    curv2 = pointwise_norm2(f, H.mat)
    lam2 = pointwise_norm2(lam_field, H.mat)
    dphi2 = pointwise_norm2(hs.dphi, H.mat) if hs.dphi is not None else \
        np.zeros(structure0.base.shape)
    return dphi2, curv2, lam2


def _pair_side_fields(pair: HiggsPair):
    return _metric_side_fields(pair.structure, pair.background)


def _rel_sup(x: np.ndarray, y: np.ndarray, floor: float = 0.0) -> float:
    """Relative sup difference with a scale floor.

    The floor keeps the ratio meaningful after both sides have decayed to
    numerical zero: below it, agreement is measured against the floor, not
    against roundoff-sized denominators.
    """
    scale = max(float(np.abs(x).max()), float(np.abs(y).max()), floor, 1e-30)
    return float(np.abs(x - y).max()) / scale


@dataclass
class EquivalenceReport:
    """Residuals between the metric flow and the directly integrated pair flow."""

    times: list[float]
    res_dphi: list[float]      # |del_A phi|^2 vs |del_H phi_0|^2
    res_curvature: list[float]  # |F + bracket|^2 on both sides
    res_contracted: list[float]  # |i Lambda(F + bracket)|^2 on both sides
    transport_phi: list[float]  # transported vs integrated pair, Higgs field
    transport_a: list[float]    # transported vs integrated pair, connection

    def max_norm_residual(self) -> float:
        vals = self.res_dphi + self.res_curvature + self.res_contracted
        return max(vals, default=0.0)

    def max_transport_discrepancy(self) -> float:
        return max(self.transport_phi + self.transport_a, default=0.0)

    def as_dict(self) -> dict:
        return {
            "times": self.times,
            "res_dphi": self.res_dphi,
            "res_curvature": self.res_curvature,
            "res_contracted": self.res_contracted,
            "transport_phi": self.transport_phi,
            "transport_a": self.transport_a,
            "max_norm_residual": self.max_norm_residual(),
            "max_transport_discrepancy": self.max_transport_discrepancy(),
        }


def flow_equivalence_check(state0: HiggsBundleState, T: float, dt: float, *,
                           sample_times=None, order: int = 2,
                           fixed_dt: bool = True) -> EquivalenceReport:
    """Run both flows from the same initial state and compare them.

    The metric flow evolves H(t) with (a0, phi0) frozen; the pair flow
    evolves (a(t), phi(t)) over the frozen background H0 = H(0). At each
    sample the three norm equalities relating the two sides are evaluated
    as pointwise fields and reported as relative sup residuals, together
    with the discrepancy between the directly integrated pair and the pair
    transported by g(t) = (H0^{-1} H(t))^{1/2}.
    """
    pair0 = HiggsPair(state0.structure, state0.metric)
    samples = sample_times if sample_times is not None else \
        [k * T / 4.0 for k in range(1, 5)]
    res_m = run_donaldson_flow(state0, T, dt, fixed_dt=fixed_dt, order=order,
                               sample_times=samples)
    res_p = run_ymh_flow(pair0, T, dt, fixed_dt=fixed_dt, order=order,
                         sample_times=samples)
    metric_at = {round(t, 9): s for t, s in res_m.sampled_states}
    pair_at = {round(t, 9): s for t, s in res_p.sampled_states}
    common = sorted(set(metric_at) & set(pair_at))

    # decayed-scale floors: 1e-6 of each quantity's initial size
    floors = tuple(1e-6 * float(f.max())
                   for f in _metric_side_fields(state0.structure, state0.metric))

    report = EquivalenceReport([], [], [], [], [], [])
    raw = []  # (phi_diff, phi_scale, a_diff, a_scale) per sample
    for tk in common:
        st, pr = metric_at[tk], pair_at[tk]
        metric_fields = _metric_side_fields(state0.structure, st.metric)
        pair_fields = _pair_side_fields(pr)
        g = gauge_from_metric(state0.metric, st.metric)
        transported = complex_gauge_apply(g, pair0)
        report.times.append(float(tk))
        for sink, mfield, pfield, floor in zip(
                (report.res_dphi, report.res_curvature, report.res_contracted),
                metric_fields, pair_fields, floors):
            sink.append(_rel_sup(mfield, pfield, floor))
        raw.append((sup_norm(transported.structure.phi - pr.structure.phi),
                    max(sup_norm(pr.structure.phi),
                        sup_norm(transported.structure.phi)),
                    sup_norm(transported.structure.a - pr.structure.a),
                    max(sup_norm(pr.structure.a),
                        sup_norm(transported.structure.a))))
    # normalize against the largest scale seen along the run, so samples
    # where both sides are numerically zero do not report spurious ratios
    phi_floor = 1e-6 * max((r[1] for r in raw), default=0.0) + 1e-30
    a_floor = 1e-6 * max((r[3] for r in raw), default=0.0) + 1e-30
    for phi_diff, phi_scale, a_diff, a_scale in raw:
        report.transport_phi.append(phi_diff / max(phi_scale, phi_floor))
        report.transport_a.append(a_diff / max(a_scale, a_floor))
    return report
