"""Certified lower bounds on the extractability curve over a Bell-score range.

The continuous quantity is a min over qubit measurement angle pairs of the
per-pair fidelity program value.  A finite angle grid plus a Lipschitz
penalty turns that into finitely many 4x4 solves whose minimum is a valid
bound for every angle pair, not just the sampled ones: a cell enters the
minimum whenever its operator maximum clears the penalized threshold, and
each included cell is solved at the penalized score.

Sweeps run from the highest score knot downward.  A solution stored for a
cell at one knot stays feasible at every other knot (feasibility does not
involve the score), so lam*omega' + mu is a certified lower bound on that
cell's value at any omega'; cells whose bound already exceeds a proven
current minimum cannot tighten the knot minimum and are skipped.  Pruning
decisions depend only on stored bounds and a fixed-size seed batch, never
on worker timing, so results are identical for any worker count.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .bellops import AnglePair, BellFunctional, chsh, lipschitz_constants
from .envelope import PiecewiseLinear, knots_from_json, knots_to_csv, knots_to_json, lower_convex_hull
from .matqm import pauli
from .sdpcore import FabSolution, solve_fab_batch

__all__ = [
    "GridSpec",
    "ExtractabilityCurve",
    "AnalyticCurve",
    "feasible_cells",
    "xi_lower_bound",
    "analytic",
    "bardyn_locc",
    "kaniewski_lo",
    "OMEGA_STAR",
]

FLOOR = 0.5
_SEED_BATCH = 256
_DEFAULT_KNOTS = 65

_X = pauli("X").real
_Z = pauli("Z").real
_I2 = np.eye(2)


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Angle grid spacing, penalty mode, and score knots for one sweep.

    mode 'paper' uses penalty delta*(c0+c1) (cells of double width around
    each grid point); 'tight' uses half of that (nearest-grid-point cells).
    ``omega_knots`` of None defers to 65 evenly spaced knots between the
    functional's local and quantum maxima.
    """

    delta: float = 0.01
    mode: str = "paper"
    omega_knots: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.delta <= math.pi / 4:
            raise ValueError("delta must be in (0, pi/4]")
        if self.mode not in ("paper", "tight"):
            raise ValueError("mode must be 'paper' or 'tight'")
        if self.omega_knots is not None:
            ks = tuple(float(k) for k in self.omega_knots)
            if len(ks) < 2 or any(b <= a for a, b in zip(ks, ks[1:])):
                raise ValueError("omega_knots must be >= 2 strictly ascending values")
            object.__setattr__(self, "omega_knots", ks)

    def penalty(self, functional: BellFunctional) -> float:
        c0, c1 = lipschitz_constants(functional)
        factor = 1.0 if self.mode == "paper" else 0.5
        return factor * self.delta * (c0 + c1)

    def angle_values(self) -> np.ndarray:
        """Grid values on [0, pi/2]; actual spacing is <= delta."""
        n = int(math.ceil((math.pi / 2) / self.delta)) + 1
        return np.linspace(0.0, math.pi / 2, n)

    def knots_for(self, functional: BellFunctional) -> np.ndarray:
        if self.omega_knots is None:
            return np.linspace(functional.eta_l_max, functional.eta_q_max, _DEFAULT_KNOTS)
        ks = np.asarray(self.omega_knots)
        if ks[0] < functional.eta_q_min - 1e-12 or ks[-1] > functional.eta_q_max + 1e-12:
            raise ValueError("omega_knots must lie within the functional's quantum range")
        return ks


def _observable_stack(thetas: np.ndarray, branch: int) -> np.ndarray:
    sign = 1.0 if branch == 0 else -1.0
    c = np.cos(thetas)[:, None, None]
    s = np.sin(thetas)[:, None, None]
    return c * _Z + sign * s * _X


def _kron_stack(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("lab,lcd->lacbd", a, b).reshape(-1, 4, 4)


def _bell_operator_stack(f: BellFunctional, a_vals: np.ndarray, b_vals: np.ndarray) -> np.ndarray:
    """Bell operators for paired angle arrays, vectorized over cells."""
    eye = np.broadcast_to(_I2, (a_vals.size, 2, 2))
    aa = [_observable_stack(a_vals, 0), _observable_stack(a_vals, 1)]
    bb = [_observable_stack(b_vals, 0), _observable_stack(b_vals, 1)]
    out = np.zeros((a_vals.size, 4, 4))
    for x in range(2):
        for y in range(2):
            g = f.gamma[x][y]
            if g != 0.0:
                out += g * _kron_stack(aa[x], bb[y])
    for x in range(2):
        if f.cA[x] != 0.0:
            out += f.cA[x] * _kron_stack(aa[x], eye)
    for y in range(2):
        if f.cB[y] != 0.0:
            out += f.cB[y] * _kron_stack(eye, bb[y])
    return out


def _is_swap_symmetric(f: BellFunctional) -> bool:
    g = f.gamma
    return g[0][1] == g[1][0] and f.cA == f.cB


def feasible_cells(f: BellFunctional, omega: float, g: GridSpec) -> list[AnglePair]:
    """Grid pairs whose operator maximum clears omega minus the penalty."""
    vals = g.angle_values()
    a_idx, b_idx = np.meshgrid(np.arange(vals.size), np.arange(vals.size), indexing="ij")
    a_idx = a_idx.ravel()
    b_idx = b_idx.ravel()
    bells = _bell_operator_stack(f, vals[a_idx], vals[b_idx])
    lam_max = np.linalg.eigvalsh(bells)[:, -1]
    mask = lam_max >= omega - g.penalty(f)
    return [AnglePair(vals[i], vals[j]) for i, j in zip(a_idx[mask], b_idx[mask])]


def _solve_chunk(args) -> dict[str, np.ndarray]:
    bells, omega_prime, gap_tol = args
    return solve_fab_batch(bells, np.full(bells.shape[0], omega_prime), gap_tol=gap_tol)


def _solve_indices(
    bells: np.ndarray,
    idx: np.ndarray,
    omega_prime: float,
    gap_tol: float,
    pool: ProcessPoolExecutor | None,
    workers: int,
) -> dict[str, np.ndarray]:
    if idx.size == 0:
        return {
            "value": np.empty(0),
            "lam": np.empty(0),
            "mu": np.empty(0),
            "t": np.empty((0, 5)),
            "status": np.empty(0, dtype=int),
            "gap_bound": np.empty(0),
            "iterations": np.empty(0, dtype=int),
            "psd_slack": np.empty(0),
        }
    sub = bells[idx]
    if pool is None or idx.size < 2 * _SEED_BATCH:
        return _solve_chunk((sub, omega_prime, gap_tol))
    n_chunks = min(4 * workers, max(1, idx.size // _SEED_BATCH))
    parts = list(pool.map(_solve_chunk, [(c, omega_prime, gap_tol) for c in np.array_split(sub, n_chunks)]))
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


@dataclasses.dataclass(frozen=True)
class ExtractabilityCurve:
    """Convex non-decreasing certified lower-bound curve on score knots.

    ``values`` are the enveloped, floor/cap-clamped knot values; the curve
    evaluated anywhere in [first knot, last knot] (and trivially 1/2 left
    of the first knot) is a certified bound thanks to the monotone step
    extension taken before the envelope.  ``raw_values`` keep the
    pre-clamp per-knot grid minima; ``argmin_cells``/``argmin_solutions``
    keep each knot's minimizing cell witness when produced by a sweep.
    """

    functional: BellFunctional
    omegas: np.ndarray
    values: np.ndarray
    delta: float
    mode: str
    penalty: float
    raw_values: np.ndarray | None = None
    argmin_cells: tuple[AnglePair, ...] | None = None
    argmin_solutions: tuple[FabSolution, ...] | None = None

    def __post_init__(self) -> None:
        om = np.asarray(self.omegas, dtype=float)
        va = np.asarray(self.values, dtype=float)
        if om.size != va.size or om.size < 2:
            raise ValueError("need >= 2 knots with matching values")
        if not np.all(np.diff(om) > 0.0):
            raise ValueError("knots must be strictly ascending")
        if np.any(va < FLOOR - 1e-12) or np.any(va > 1.0 + 1e-12):
            raise ValueError("curve values must lie in [1/2, 1]")
        if np.any(np.diff(va) < -1e-12):
            raise ValueError("curve must be non-decreasing")
        slopes = np.diff(va) / np.diff(om)
        if np.any(np.diff(slopes) < -1e-9):
            raise ValueError("curve must be convex")
        om = om.copy()
        va = va.copy()
        om.setflags(write=False)
        va.setflags(write=False)
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "values", va)

    def evaluate(self, omega):
        out = np.interp(np.asarray(omega, dtype=float), self.omegas, self.values)
        out = np.where(np.asarray(omega) < self.omegas[0], FLOOR, out)
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def to_piecewise_linear(self) -> PiecewiseLinear:
        return PiecewiseLinear(self.omegas, self.values)

    def g_epsilon(self, epsilon: float):
        from .envelope import build_g_epsilon

        return build_g_epsilon(self, epsilon)

    def meta(self) -> dict:
        return {
            "delta": self.delta,
            "mode": self.mode,
            "penalty": self.penalty,
            "floor": FLOOR,
        }

    def to_json(self) -> str:
        return knots_to_json(self.functional.name, self.omegas, self.values, self.meta())

    def to_csv(self, comment: str | None = None) -> str:
        return knots_to_csv(self.omegas, self.values, comment)

    @classmethod
    def from_json(cls, text: str, functional: BellFunctional | None = None) -> "ExtractabilityCurve":
        name, xs, ys, meta = knots_from_json(text)
        if functional is None:
            if name != "chsh":
                raise ValueError(f"cannot resolve functional {name!r}; pass it explicitly")
            functional = chsh()
        return cls(
            functional=functional,
            omegas=xs,
            values=ys,
            delta=float(meta.get("delta", float("nan"))),
            mode=str(meta.get("mode", "paper")),
            penalty=float(meta.get("penalty", float("nan"))),
        )


def _envelope_knot_values(omegas: np.ndarray, clamped: np.ndarray) -> np.ndarray:
    """Step-extend each knot value over its interval, then lower hull.

    The knot bound v_i holds for every score in [omega_i, omega_{i+1}]
    (the underlying curve is non-decreasing), so the hull is taken over
    both interval endpoints and the result certifies every real score.
    """
    ext_x = np.concatenate([omegas, omegas[1:]])
    ext_y = np.concatenate([clamped, clamped[:-1]])
    hull = lower_convex_hull(np.column_stack([ext_x, ext_y]))
    return hull(omegas)


def xi_lower_bound(
    f: BellFunctional,
    g: GridSpec,
    workers: int | None = None,
    gap_tol: float = 1e-8,
    floor_early_exit: bool = False,
) -> ExtractabilityCurve:
    """Sweep the grid over all score knots and assemble the certified curve.

    ``workers`` <= 1 runs serially; otherwise a process pool splits each
    batch of cell solves.  ``floor_early_exit`` stops exact minimization
    once a knot minimum hits the trivial floor (every lower knot is then
    pinned to 1/2; their stored raw values come from re-solving just the
    previous minimizing cell, which is enough for witness bookkeeping but
    is only an upper estimate of those knots' true grid minima).
    """
    if workers is None:
        import os

        workers = min(os.cpu_count() or 1, 8)
    knots = g.knots_for(f)
    m = g.penalty(f)

    vals = g.angle_values()
    a_idx, b_idx = np.meshgrid(np.arange(vals.size), np.arange(vals.size), indexing="ij")
    a_idx = a_idx.ravel()
    b_idx = b_idx.ravel()
    if _is_swap_symmetric(f):
        keep = a_idx <= b_idx  # value is swap-invariant, solve one triangle
        a_idx, b_idx = a_idx[keep], b_idx[keep]
    bells = _bell_operator_stack(f, vals[a_idx], vals[b_idx])
    lam_max = np.linalg.eigvalsh(bells)[:, -1]
    n_cells = bells.shape[0]

    have = np.zeros(n_cells, dtype=bool)
    s_lam = np.zeros(n_cells)
    s_mu = np.zeros(n_cells)
    s_t = np.zeros((n_cells, 5))

    order = np.argsort(knots)[::-1]
    raw = np.full(knots.size, np.nan)
    arg_cell = np.full(knots.size, -1, dtype=int)
    arg_sol: list[FabSolution | None] = [None] * knots.size
    valid = np.zeros(knots.size, dtype=bool)

    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        pinned_from: int | None = None
        for pos, ki in enumerate(order):
            omega = float(knots[ki])
            omega_p = omega - m
            feas = lam_max >= omega - m
            if not np.any(feas):
                continue
            valid[ki] = True

            if pinned_from is not None:
                # floor already certified for this and every lower knot;
                # re-solve just the last minimizing cell to keep a witness
                cell = arg_cell[order[pinned_from]]
                out = _solve_indices(bells, np.array([cell]), omega_p, gap_tol, None, workers)
                raw[ki] = float(out["value"][0])
                arg_cell[ki] = cell
                arg_sol[ki] = _sol_from(out, 0)
                continue

            new_idx = np.nonzero(feas & ~have)[0]
            old_idx = np.nonzero(feas & have)[0]
            bound = s_lam[old_idx] * omega_p + s_mu[old_idx]
            if old_idx.size > _SEED_BATCH:
                seed_pos = np.argpartition(bound, _SEED_BATCH)[:_SEED_BATCH]
                seed_pos = seed_pos[np.argsort(old_idx[seed_pos], kind="stable")]
            else:
                seed_pos = np.arange(old_idx.size)
            seed_idx = old_idx[seed_pos]

            first = np.sort(np.concatenate([new_idx, seed_idx]))
            out1 = _solve_indices(bells, first, omega_p, gap_tol, pool, workers)
            seed_min = float(np.min(out1["value"])) if first.size else math.inf

            rest_mask = np.ones(old_idx.size, dtype=bool)
            rest_mask[seed_pos] = False
            survivors = old_idx[rest_mask & (bound < seed_min)]
            out2 = _solve_indices(bells, survivors, omega_p, gap_tol, pool, workers)

            solved = np.concatenate([first, survivors])
            values = np.concatenate([out1["value"], out2["value"]])
            var_order = np.argsort(solved, kind="stable")
            solved = solved[var_order]
            values = values[var_order]
            merged = {
                k: np.concatenate([out1[k], out2[k]])[var_order] for k in ("lam", "mu", "t")
            }
            have[solved] = True
            s_lam[solved] = merged["lam"]
            s_mu[solved] = merged["mu"]
            s_t[solved] = merged["t"]

            best = int(np.argmin(values))
            raw[ki] = float(values[best])
            arg_cell[ki] = int(solved[best])
            full = {
                k: np.concatenate([out1[k], out2[k]])[var_order]
                for k in ("value", "lam", "mu", "t", "status", "gap_bound", "iterations", "psd_slack")
            }
            arg_sol[ki] = _sol_from(full, best)

            if floor_early_exit and raw[ki] <= FLOOR:
                pinned_from = pos
    finally:
        if pool is not None:
            pool.shutdown()

    if not np.any(valid):
        raise ValueError("no score knot admits a feasible cell")
    omegas = knots[valid]
    raw_v = raw[valid]
    clamped = np.clip(raw_v, FLOOR, 1.0)
    final = _envelope_knot_values(omegas, clamped)
    cells = tuple(
        AnglePair(vals[a_idx[c]], vals[b_idx[c]]) for c in arg_cell[valid]
    )
    sols = tuple(s for s, ok in zip(arg_sol, valid) if ok)
    return ExtractabilityCurve(
        functional=f,
        omegas=omegas,
        values=final,
        delta=g.delta,
        mode=g.mode,
        penalty=m,
        raw_values=raw_v,
        argmin_cells=cells,
        argmin_solutions=sols,
    )


def _sol_from(out: dict[str, np.ndarray], i: int) -> FabSolution:
    names = {0: "optimal", 1: "max-iter", 2: "infeasible"}
    return FabSolution(
        value=float(out["value"][i]),
        lam=float(out["lam"][i]),
        mu=float(out["mu"][i]),
        t=out["t"][i],
        status=names[int(out["status"][i])],
        gap_bound=float(out["gap_bound"][i]),
        iterations=int(out["iterations"][i]),
        psd_slack=float(out["psd_slack"][i]),
    )


OMEGA_STAR = (16.0 + 14.0 * math.sqrt(2.0)) / 17.0

_S2 = 2.0 * math.sqrt(2.0)


def _check_range(omega: float) -> float:
    omega = float(omega)
    if not 2.0 - 1e-12 <= omega <= _S2 + 1e-12:
        raise ValueError("omega must lie in [2, 2*sqrt(2)]")
    return omega


def bardyn_locc(omega: float) -> float:
    """Tight analytic CHSH extractability under two-way free operations."""
    omega = _check_range(omega)
    return 0.5 * (1.0 + (omega - 2.0) / (_S2 - 2.0))


def kaniewski_lo(omega: float) -> float:
    """Analytic CHSH extractability under one-way free operations."""
    omega = _check_range(omega)
    return max(0.5 * (1.0 + (omega - OMEGA_STAR) / (_S2 - OMEGA_STAR)), 0.5)


def analytic(kind: str, omega: float) -> float:
    if kind == "bardyn_locc":
        return bardyn_locc(omega)
    if kind == "kaniewski_lo":
        return kaniewski_lo(omega)
    raise ValueError("kind must be 'bardyn_locc' or 'kaniewski_lo'")


@dataclasses.dataclass(frozen=True)
class AnalyticCurve:
    """Closed-form reference curve, exact as a piecewise-linear object."""

    kind: str

    def __post_init__(self) -> None:
        if self.kind not in ("bardyn_locc", "kaniewski_lo"):
            raise ValueError("kind must be 'bardyn_locc' or 'kaniewski_lo'")

    def __call__(self, omega: float) -> float:
        return analytic(self.kind, omega)

    @property
    def functional(self) -> BellFunctional:
        return chsh()

    def to_piecewise_linear(self) -> PiecewiseLinear:
        if self.kind == "bardyn_locc":
            return PiecewiseLinear(np.array([2.0, _S2]), np.array([0.5, 1.0]))
        return PiecewiseLinear(np.array([2.0, OMEGA_STAR, _S2]), np.array([0.5, 0.5, 1.0]))
