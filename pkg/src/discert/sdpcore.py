"""The 4x4 fidelity program behind every certified curve value.

For a Bell operator B and threshold omega the program is

    f(omega) = max  lam * omega + mu
               s.t. sigma - lam * B - mu * I  >= 0   (PSD)
                    sigma a two-qubit state with both marginals I/2
                    lam >= 0.

Any feasible point certifies tr[rho sigma] >= lam*omega + mu for every
state rho with tr[B rho] >= omega (weak duality), which is what makes the
value a sound fidelity lower bound.  Marginal constraints are eliminated
by parameterizing sigma over the five real products

    sigma(t) = I/4 + (t1 XX + t2 ZZ + t3 YY + t4 XZ + t5 ZX) / 4,

whose partial traces vanish identically, leaving two 4x4 PSD cones in
seven scalar variables.  The solver is a log-det barrier path-following
method with analytic gradients and Hessians; everything is vectorized
over stacks of problems so grid sweeps can batch thousands of cells.

An independent projected-supergradient oracle and a sampling witness are
provided as cross-checks; they share no iterates with the barrier solver.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .bellops import AnglePair
from .matqm import eig_sym, kron, pauli

__all__ = [
    "FabProblem",
    "FabSolution",
    "GENERATORS",
    "bell_diag_sigma",
    "phi_plus",
    "solve_fab",
    "solve_fab_batch",
    "supergrad_oracle",
    "weak_duality_margin",
    "weak_duality_witness",
    "tightness_probe",
]

_X = pauli("X").real
_Y = pauli("Y")
_Z = pauli("Z").real

# Real products with vanishing marginals; their span (plus I) carries every
# matrix the program touches on the real-symmetric path.
GENERATORS = np.stack(
    [
        kron(_X, _X).real,
        kron(_Z, _Z).real,
        kron(_Y, _Y).real,  # Y (x) Y is real
        kron(_X, _Z).real,
        kron(_Z, _X).real,
    ]
)

_DIRS = GENERATORS / 4.0  # d sigma / d t_i
_I4 = np.eye(4)
_LAM_CAP = 1e4  # keeps the barrier bounded when lam is objective-neutral
_NU = 10.0  # total barrier parameter: two 4x4 cones + two scalar bounds


def phi_plus() -> np.ndarray:
    """Density matrix of the maximally entangled target state."""
    v = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0)
    return np.outer(v, v)


def bell_diag_sigma(t: np.ndarray) -> np.ndarray:
    """sigma(t) for coefficient vector(s) t of shape (..., 5)."""
    t = np.asarray(t, dtype=float)
    return _I4 / 4.0 + np.einsum("...i,iab->...ab", t, _DIRS)


@dataclasses.dataclass(frozen=True)
class FabProblem:
    """One program instance: Bell operator, threshold, optional angle tag."""

    bell_op: np.ndarray
    omega: float
    angles: AnglePair | None = None

    def __post_init__(self) -> None:
        b = np.asarray(self.bell_op, dtype=float)
        if b.shape != (4, 4) or np.max(np.abs(b - b.T)) > 1e-10:
            raise ValueError("bell_op must be a real symmetric 4x4 matrix")
        object.__setattr__(self, "bell_op", b)


@dataclasses.dataclass(frozen=True)
class FabSolution:
    """A feasible point and its certified objective value.

    ``value`` = lam*omega + mu holds by construction and remains a valid
    lower bound in every status except 'infeasible' (omega above the
    largest eigenvalue of B, where the program is unbounded).
    ``psd_slack`` is the minimal eigenvalue of sigma - lam*B - mu*I after
    restoration; feasibility means it is nonnegative within tolerance.
    """

    value: float
    lam: float
    mu: float
    t: np.ndarray
    status: str
    gap_bound: float
    iterations: int
    psd_slack: float = 0.0

    @property
    def sigma(self) -> np.ndarray:
        return bell_diag_sigma(self.t)


def _chol4(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Cholesky for stacks of 4x4 symmetric matrices.

    Returns (L, ok); rows with ok False are not positive definite and the
    corresponding L rows are garbage.
    """
    m = mats
    n = m.shape[0]
    L = np.zeros_like(m)
    ok = np.ones(n, dtype=bool)

    def _safe_sqrt(d):
        nonlocal ok
        ok &= d > 0.0
        return np.sqrt(np.where(d > 0.0, d, 1.0))

    s = _safe_sqrt(m[:, 0, 0])
    L[:, 0, 0] = s
    L[:, 1, 0] = m[:, 1, 0] / s
    L[:, 2, 0] = m[:, 2, 0] / s
    L[:, 3, 0] = m[:, 3, 0] / s
    s = _safe_sqrt(m[:, 1, 1] - L[:, 1, 0] ** 2)
    L[:, 1, 1] = s
    L[:, 2, 1] = (m[:, 2, 1] - L[:, 2, 0] * L[:, 1, 0]) / s
    L[:, 3, 1] = (m[:, 3, 1] - L[:, 3, 0] * L[:, 1, 0]) / s
    s = _safe_sqrt(m[:, 2, 2] - L[:, 2, 0] ** 2 - L[:, 2, 1] ** 2)
    L[:, 2, 2] = s
    L[:, 3, 2] = (m[:, 3, 2] - L[:, 3, 0] * L[:, 2, 0] - L[:, 3, 1] * L[:, 2, 1]) / s
    s = _safe_sqrt(m[:, 3, 3] - L[:, 3, 0] ** 2 - L[:, 3, 1] ** 2 - L[:, 3, 2] ** 2)
    L[:, 3, 3] = s
    return L, ok


def _logdet_from_chol(L: np.ndarray) -> np.ndarray:
    d = np.einsum("nii->ni", L)
    return 2.0 * np.sum(np.log(d), axis=1)


def _feasible(t, lam, mu, bells):
    sig = bell_diag_sigma(t)
    slack = sig - lam[:, None, None] * bells - mu[:, None, None] * _I4
    L1, ok1 = _chol4(sig)
    L2, ok2 = _chol4(slack)
    ok = ok1 & ok2 & (lam > 0.0) & (lam < _LAM_CAP)
    return sig, slack, L1, L2, ok


def _barrier_value(L1, L2, lam):
    return -(_logdet_from_chol(L1) + _logdet_from_chol(L2) + np.log(lam) + np.log(_LAM_CAP - lam))


def solve_fab_batch(
    bells: np.ndarray,
    omegas: np.ndarray,
    gap_tol: float = 1e-8,
    max_outer: int = 60,
    max_inner: int = 80,
) -> dict[str, np.ndarray]:
    """Solve a stack of fidelity programs; see module docstring.

    Returns arrays value, lam, mu, t, status (0 optimal, 1 max-iter,
    2 infeasible), gap_bound, iterations.  Every non-infeasible row is a
    restored feasible point, so its value is a certified lower bound even
    when the gap target was not met.
    """
    bells = np.asarray(bells, dtype=float)
    omegas = np.asarray(omegas, dtype=float)
    n = bells.shape[0]
    lam_max_b = np.linalg.eigvalsh(bells)[:, -1]
    infeasible = omegas > lam_max_b + 1e-9

    # strictly feasible start: sigma = I/4, mu below the spectrum, small lam
    t = np.zeros((n, 5))
    lam = np.full(n, 1e-2)
    mu = -(np.abs(lam_max_b) + 1.0)
    live = ~infeasible

    # objective coefficient vector per problem: (0,0,0,0,0, omega, 1)
    c = np.zeros((n, 7))
    c[:, 5] = omegas
    c[:, 6] = 1.0

    etas = []
    eta = 1.0
    while eta < 2.0 * _NU / max(gap_tol, 1e-300):
        etas.append(eta)
        eta *= 8.0
    etas.append(eta)
    if len(etas) > max_outer:
        etas = etas[:max_outer]

    iters = np.zeros(n, dtype=int)
    # snapshot of the last well-centered iterate per problem; the duality gap
    # certificate 2*nu/eta only holds at (approximate) centers, so the final
    # bound is computed from these rather than from wherever iteration stalls
    snap_t = t.copy()
    snap_lam = lam.copy()
    snap_mu = mu.copy()
    snap_eta = np.zeros(n)

    for eta in etas:
        active = live.copy()
        for _ in range(max_inner):
            if not np.any(active):
                break
            idx = np.nonzero(active)[0]
            tb, lamb, mub = t[idx], lam[idx], mu[idx]
            bb, cb = bells[idx], c[idx]
            sig, slack, L1, L2, okc = _feasible(tb, lamb, mub, bb)
            inv1 = np.linalg.inv(sig)
            inv2 = np.linalg.inv(slack)

            # direction matrices for the slack cone: 5 shared, -B, -I
            k = idx.size
            dirs2 = np.empty((k, 7, 4, 4))
            dirs2[:, :5] = _DIRS
            dirs2[:, 5] = -bb
            dirs2[:, 6] = -_I4

            w1 = np.einsum("nab,ibc->niac", inv1, _DIRS)
            w2 = np.einsum("nab,nibc->niac", inv2, dirs2)

            grad = -eta * cb
            grad[:, :5] -= np.einsum("niaa->ni", w1)
            grad -= np.einsum("niaa->ni", w2)
            grad[:, 5] -= 1.0 / lamb
            grad[:, 5] += 1.0 / (_LAM_CAP - lamb)

            hess = np.einsum("niab,njba->nij", w2, w2)
            hess[:, :5, :5] += np.einsum("niab,njba->nij", w1, w1)
            hess[:, 5, 5] += 1.0 / lamb**2 + 1.0 / (_LAM_CAP - lamb) ** 2

            # near-degenerate slack cones push the condition number past
            # float64; a scale-relative ridge keeps the solve meaningful
            finite = np.isfinite(hess).all(axis=(1, 2)) & np.isfinite(grad).all(axis=1)
            hess[~finite] = np.eye(7)
            grad[~finite] = 0.0
            ridge = 1e-13 * np.einsum("nii->n", hess) / 7.0
            hess += ridge[:, None, None] * np.eye(7)
            step = -np.linalg.solve(hess, grad[..., None])[..., 0]
            dec2 = -np.einsum("ni,ni->n", grad, step)  # squared Newton decrement
            dec2 = np.maximum(dec2, 0.0)
            dec2[~finite] = 0.0  # freeze blown-up rows at their last iterate

            done_now = dec2 <= 0.04
            damp = np.where(dec2 > 0.0625, 1.0 / (1.0 + np.sqrt(dec2)), 1.0)

            f_old = _barrier_value(L1, L2, lamb) - eta * (
                cb[:, 5] * lamb + cb[:, 6] * mub
            )
            scale = damp.copy()
            accepted = np.zeros(k, dtype=bool)
            new_t, new_lam, new_mu = tb.copy(), lamb.copy(), mub.copy()
            for _bt in range(40):
                trial = ~accepted & ~done_now
                if not np.any(trial):
                    break
                tt = tb + scale[:, None] * step[:, :5]
                tl = lamb + scale * step[:, 5]
                tm = mub + scale * step[:, 6]
                _, _, tL1, tL2, tok = _feasible(tt, tl, tm, bb)
                f_new = np.where(
                    tok,
                    _barrier_value(
                        np.where(tok[:, None, None], tL1, np.eye(4)),
                        np.where(tok[:, None, None], tL2, np.eye(4)),
                        np.where(tok, tl, 1.0),
                    )
                    - eta * (cb[:, 5] * tl + cb[:, 6] * tm),
                    np.inf,
                )
                good = trial & tok & (f_new <= f_old + 1e-9 * np.abs(f_old))
                new_t[good] = tt[good]
                new_lam[good] = tl[good]
                new_mu[good] = tm[good]
                accepted |= good
                scale = np.where(trial & ~good, scale * 0.5, scale)
            t[idx], lam[idx], mu[idx] = new_t, new_lam, new_mu
            iters[idx] += 1
            cent = idx[done_now]
            snap_t[cent] = t[cent]
            snap_lam[cent] = lam[cent]
            snap_mu[cent] = mu[cent]
            snap_eta[cent] = eta
            # problems that are centered, or stalled in the line search, stop
            active[idx] = ~done_now & accepted

    def _restore(tv, lv, mv):
        # shrink sigma toward I/4 if needed, then shift mu down so the slack
        # cone is exactly satisfied; the value only decreases, so the result
        # stays a certified bound
        sig = bell_diag_sigma(tv)
        ev_sig = np.linalg.eigvalsh(sig)[:, 0]
        bad = ev_sig < 1e-13
        if np.any(bad):
            tv = tv.copy()
            tv[bad] *= ((0.25 - 1e-13) / (0.25 - ev_sig[bad]))[:, None]
            sig = bell_diag_sigma(tv)
        lv = np.maximum(lv, 0.0)
        slack = sig - lv[:, None, None] * bells - mv[:, None, None] * _I4
        ev_slack = np.linalg.eigvalsh(slack)[:, 0]
        mv = mv + np.minimum(ev_slack, 0.0)
        return tv, lv, mv, lv * omegas + mv, np.maximum(ev_slack, 0.0)

    ub = np.where(snap_eta > 0.0, snap_lam * omegas + snap_mu + 2.0 * _NU / np.maximum(snap_eta, 1e-300), np.inf)
    t_l, lam_l, mu_l, val_l, slk_l = _restore(t, lam, mu)
    t_s, lam_s, mu_s, val_s, slk_s = _restore(snap_t, snap_lam, snap_mu)
    use_snap = val_s >= val_l
    t = np.where(use_snap[:, None], t_s, t_l)
    lam = np.where(use_snap, lam_s, lam_l)
    mu = np.where(use_snap, mu_s, mu_l)
    value = np.where(use_snap, val_s, val_l)
    psd_slack = np.where(use_snap, slk_s, slk_l)

    gap = ub - value
    status = np.where(infeasible, 2, np.where(gap <= 1e-6, 0, 1))
    value = np.where(infeasible, np.nan, value)
    return {
        "value": value,
        "lam": lam,
        "mu": mu,
        "t": t,
        "status": status,
        "gap_bound": gap,
        "iterations": iters,
        "psd_slack": psd_slack,
    }


_STATUS_NAMES = {0: "optimal", 1: "max-iter", 2: "infeasible"}


def solve_fab(problem: FabProblem, gap_tol: float = 1e-8) -> FabSolution:
    """Solve a single fidelity program instance."""
    out = solve_fab_batch(problem.bell_op[None, :, :], np.array([problem.omega]), gap_tol=gap_tol)
    return FabSolution(
        value=float(out["value"][0]),
        lam=float(out["lam"][0]),
        mu=float(out["mu"][0]),
        t=out["t"][0],
        status=_STATUS_NAMES[int(out["status"][0])],
        gap_bound=float(out["gap_bound"][0]),
        iterations=int(out["iterations"][0]),
        psd_slack=float(out["psd_slack"][0]),
    )


_GEN9_NAMES = [(i, j) for i in "XZY" for j in "XZY"]


def _generators9() -> np.ndarray:
    ps = {"X": _X, "Y": _Y, "Z": _Z}
    return np.stack([kron(ps[i], ps[j]) for i, j in _GEN9_NAMES])


def _project_coeffs(that: np.ndarray, dirs: np.ndarray, rounds: int = 12) -> np.ndarray:
    """Euclidean projection of coefficients onto {t : sigma(t) PSD}.

    The generators are Frobenius-orthogonal, so projecting t is projecting
    sigma onto the intersection of the PSD cone with the affine slice
    I/4 + span(dirs); Dykstra alternation between the two does that.
    """
    complex_path = np.iscomplexobj(dirs)
    eye = np.eye(4, dtype=complex if complex_path else float)
    x = eye / 4.0 + np.einsum("i,iab->ab", that, dirs)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(rounds):
        w, v = np.linalg.eigh(x + p)
        y = (v * np.maximum(w, 0.0)) @ v.conj().T
        p = x + p - y
        coeff = 4.0 * np.real(np.einsum("iab,ba->i", dirs.conj(), y + q))
        x_new = eye / 4.0 + np.einsum("i,iab->ab", coeff, dirs)
        q = y + q - x_new
        x = x_new
    t = 4.0 * np.real(np.einsum("iab,ba->i", dirs.conj(), x))
    lo = float(np.linalg.eigvalsh(x)[0])
    if lo < 0.0:  # mop up the Dykstra residual radially
        t = t * (0.25 / (0.25 - lo + 1e-15))
    return t


def supergrad_oracle(
    problem: FabProblem,
    iters: int = 1500,
    seed: int = 0,
    family: str = "real5",
) -> float:
    """Independent cross-check: projected supergradient ascent.

    Maximizes g(t, lam) = lam*omega + lambda_min(sigma(t) - lam*B) over the
    marginal-free family and lam >= 0, using deflected supergradients with
    adaptive target-level steps and Euclidean projection back onto the PSD
    slice.  Every iterate is feasible, so the running best is a certified
    value.  First-order throughout; shares no iterates or decompositions
    with the barrier solver.  family='complex9' uses all nine correlation
    products (complex Hermitian path).
    """
    if family == "real5":
        dirs = _DIRS
    elif family == "complex9":
        dirs = _generators9() / 4.0
    else:
        raise ValueError("family must be 'real5' or 'complex9'")
    m = dirs.shape[0]
    complex_path = np.iscomplexobj(dirs)
    b = problem.bell_op.astype(complex) if complex_path else problem.bell_op
    eye = np.eye(4, dtype=complex if complex_path else float)
    omega = problem.omega
    rng = np.random.default_rng(seed)

    best = -math.inf
    restarts = 2
    for r in range(restarts):
        if r == 0:
            t = np.zeros(m)
            lam = 0.3
        else:
            t = _project_coeffs(rng.normal(scale=0.4, size=m), dirs)
            lam = float(rng.uniform(0.0, 1.5))
        delta = 0.05
        d_prev = np.zeros(m + 1)
        since_improve = 0
        for k in range(iters // restarts):
            sig = eye / 4.0 + np.einsum("i,iab->ab", t, dirs)
            w, v = np.linalg.eigh(sig - lam * b)
            val = lam * omega + float(w[0])
            if val > best:
                if val > best + delta / 4.0:
                    since_improve = 0
                best = val
            since_improve += 1
            if since_improve > 150:  # level no longer reachable, tighten it
                delta = max(delta / 2.0, 1e-8)
                since_improve = 0
            u = v[:, 0]
            g_t = np.real(np.einsum("a,iab,b->i", u.conj(), dirs, u))
            g_lam = omega - float(np.real(u.conj() @ b @ u))
            g = np.concatenate([g_t, [g_lam]])
            beta = 0.0
            nd_prev = float(d_prev @ d_prev)
            if nd_prev > 0.0:
                beta = max(0.0, -1.5 * float(g @ d_prev) / nd_prev)
            d = g + beta * d_prev
            d_prev = d
            nd2 = float(d @ d)
            if nd2 < 1e-28:
                break
            alpha = (best + delta - val) / nd2
            t = _project_coeffs(t + alpha * d[:m], dirs)
            lam = min(max(lam + alpha * d[m], 0.0), _LAM_CAP)
    return best


def weak_duality_margin(
    solution: FabSolution,
    problem: FabProblem,
    samples: int = 1000,
    seed: int = 0,
) -> float:
    """min over sampled feasible states rho of tr[rho sigma] - value.

    States are drawn by mixing the top eigenvector of B with random states
    and rescaling the mixture so tr[B rho] >= omega.  A nonnegative return
    (within tolerance) is the weak-duality sanity check.
    """
    rng = np.random.default_rng(seed)
    es = eig_sym(problem.bell_op)
    lam_max = float(es.values[-1])
    if problem.omega > lam_max + 1e-9:
        raise ValueError("no feasible states: omega exceeds the operator maximum")
    psi = es.vectors[:, -1]
    top = np.outer(psi, psi)

    half = samples // 2
    ranks = [1] * half + [4] * (samples - half)
    sig = solution.sigma
    worst = math.inf
    batch = 512
    i = 0
    while i < samples:
        js = range(i, min(i + batch, samples))
        k = len(js)
        r = max(ranks[i : i + k])
        g = rng.normal(size=(k, 4, r)) + 1j * rng.normal(size=(k, 4, r))
        for jj, j in enumerate(js):
            if ranks[j] == 1:
                g[jj, :, 1:] = 0.0
        rho = np.einsum("nar,nbr->nab", g, g.conj())
        rho /= np.einsum("naa->n", rho).real[:, None, None]
        bval = np.einsum("nab,ba->n", rho, problem.bell_op).real
        u = rng.uniform(size=k)
        target = problem.omega + u * (lam_max - problem.omega)
        denom = lam_max - bval
        q = np.where(denom > 1e-14, (target - bval) / np.where(denom > 1e-14, denom, 1.0), 0.0)
        q = np.clip(q, 0.0, 1.0)
        mixed = q[:, None, None] * top + (1.0 - q[:, None, None]) * rho
        fid = np.einsum("nab,ba->n", mixed, sig.astype(complex)).real
        worst = min(worst, float(np.min(fid) - solution.value))
        i += k
    return worst


def weak_duality_witness(
    solution: FabSolution,
    problem: FabProblem,
    samples: int = 1000,
    seed: int = 0,
    tol: float = 1e-8,
) -> bool:
    """True iff no sampled feasible state undercuts the certified value."""
    return weak_duality_margin(solution, problem, samples, seed) >= -tol


def tightness_probe(problem: FabProblem, solution: FabSolution, null_tol: float = 1e-5) -> float:
    """|tr[rho* sigma] - value| for a complementary state rho*.

    rho* is built inside the (near-)null space of the slack matrix and mixed
    so that tr[B rho*] = omega whenever that score is achievable there.  At
    an optimum such a state exists and attains the bound exactly, so a small
    return value certifies tightness with an explicit attacking state.
    """
    slack = solution.sigma - solution.lam * problem.bell_op - solution.mu * _I4
    es = eig_sym(slack)
    scale = max(1.0, float(np.max(np.abs(es.values))))
    null_dim = int(np.sum(es.values <= null_tol * scale))
    null_dim = max(null_dim, 1)
    v = es.vectors[:, :null_dim]
    m = v.T @ problem.bell_op @ v
    em = eig_sym(m) if null_dim > 1 else None
    if em is None:
        u = v[:, 0]
        rho = np.outer(u, u)
    else:
        lo, hi = float(em.values[0]), float(em.values[-1])
        target = min(max(problem.omega, lo), hi)
        q = 0.0 if hi <= lo else (target - lo) / (hi - lo)
        u_lo = v @ em.vectors[:, 0]
        u_hi = v @ em.vectors[:, -1]
        rho = q * np.outer(u_hi, u_hi) + (1.0 - q) * np.outer(u_lo, u_lo)
    return abs(float(np.einsum("ab,ba->", rho, solution.sigma)) - solution.value)
