"""Monte Carlo simulation of the five certification protocols.

One trial draws a stored index uniformly, feeds the remaining rounds
through modeled measurements with Born-rule outcomes, and applies the
protocol's exact abort test: empirical Bell value against
omega_sharp - kappa for the parallel protocols, a loss-count threshold
for the sequential ones.  Randomness is counter-based (Philox) and keyed
by (seed, trial, role), with the round index addressing a position in
the pre-drawn per-role array, so any execution schedule reproduces the
same records.

Device settings here are plain angles in the Z-X plane, one per input
per party; they are not restricted to the sweep module's angle box
(the optimal CHSH device needs -pi/4).
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .bellops import score_to_value
from .matqm import DensityMat, pauli
from .security import ProtocolConfig

__all__ = [
    "SourceModel",
    "DeviceModel",
    "TrialRecord",
    "run_protocol",
    "estimate_abort_rate",
    "seq_adversary_value",
    "seq_adversary_bruteforce",
    "transcript_csv",
    "Scenario",
    "load_scenario",
]

_X = pauli("X").real
_Z = pauli("Z").real
_I2 = np.eye(2)

_PHI_PLUS_VEC = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0)
_PHI_PLUS = np.outer(_PHI_PLUS_VEC, _PHI_PLUS_VEC)
_JUNK = np.zeros((4, 4))
_JUNK[0, 0] = 1.0  # |00><00|, separable

_ROLE_T, _ROLE_X, _ROLE_Y, _ROLE_OUT, _ROLE_FAST = range(5)


def _stream(seed: int, trial: int, role: int) -> Generator:
    return Generator(Philox(SeedSequence(seed, spawn_key=(trial, role))))


def _isotropic(mu: float) -> np.ndarray:
    return (1.0 - mu) * _PHI_PLUS + mu * np.eye(4) / 4.0


@dataclasses.dataclass(frozen=True)
class SourceModel:
    """Per-round two-qubit state family handed to the devices."""

    kind: str
    mu: float = 0.0
    states: tuple[DensityMat, ...] | None = None
    t_good: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("honest_isotropic", "custom_state_list", "abort_attack"):
            raise ValueError("unknown source kind")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if self.kind == "custom_state_list":
            if not self.states:
                raise ValueError("custom_state_list needs at least one state")
            if any(s.dim != 4 for s in self.states):
                raise ValueError("states must be two-qubit density matrices")
        if self.kind == "abort_attack" and (self.t_good is None or self.t_good < 1):
            raise ValueError("abort_attack needs a positive t_good index")

    @classmethod
    def honest_isotropic(cls, mu: float) -> "SourceModel":
        return cls(kind="honest_isotropic", mu=float(mu))

    @classmethod
    def custom_state_list(cls, states) -> "SourceModel":
        return cls(kind="custom_state_list", states=tuple(states))

    @classmethod
    def abort_attack(cls, t_good: int) -> "SourceModel":
        """Separable junk at index t_good, perfect singlets elsewhere."""
        return cls(kind="abort_attack", t_good=int(t_good))

    def state_for(self, i: int, n: int) -> DensityMat:
        """State of round i (1-based) in a run of n rounds."""
        if not 1 <= i <= n:
            raise ValueError("round index out of range")
        if self.kind == "honest_isotropic":
            return DensityMat.wrap(_isotropic(self.mu))
        if self.kind == "custom_state_list":
            return self.states[(i - 1) % len(self.states)]
        return DensityMat.wrap(_JUNK if i == self.t_good else _PHI_PLUS)


def _angles(pair) -> tuple[float, float]:
    if hasattr(pair, "a"):
        return float(pair.a), float(pair.b)
    a0, a1 = pair
    return float(a0), float(a1)


@dataclasses.dataclass(frozen=True)
class DeviceModel:
    """Measurement settings per party: fixed per-input angles or scripts.

    Adaptive scripts are pure functions (transcript, input) -> angle,
    where the transcript is that side's own prior (input, outcome)
    pairs; no cross-side dependence is possible by construction.
    """

    kind: str
    alice: tuple[float, float] | None = None
    bob: tuple[float, float] | None = None
    script_a: object | None = None
    script_b: object | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("optimal_chsh", "fixed_angles", "adaptive"):
            raise ValueError("unknown device kind")
        if self.kind == "fixed_angles" and (self.alice is None or self.bob is None):
            raise ValueError("fixed_angles needs angles for both parties")
        if self.kind == "adaptive" and (self.script_a is None or self.script_b is None):
            raise ValueError("adaptive needs scripts for both parties")

    @classmethod
    def optimal_chsh(cls) -> "DeviceModel":
        return cls(
            kind="optimal_chsh",
            alice=(0.0, math.pi / 2),
            bob=(math.pi / 4, -math.pi / 4),
        )

    @classmethod
    def fixed_angles(cls, alice, bob) -> "DeviceModel":
        return cls(kind="fixed_angles", alice=_angles(alice), bob=_angles(bob))

    @classmethod
    def adaptive(cls, script_a, script_b) -> "DeviceModel":
        return cls(kind="adaptive", script_a=script_a, script_b=script_b)

    @property
    def is_adaptive(self) -> bool:
        return self.kind == "adaptive"

    def theta(self, side: str, transcript: tuple, inp: int) -> float:
        if self.is_adaptive:
            script = self.script_a if side == "A" else self.script_b
            return float(script(transcript, inp))
        pair = self.alice if side == "A" else self.bob
        return pair[inp]


def _obs(theta: float) -> np.ndarray:
    return math.cos(theta) * _Z + math.sin(theta) * _X


def _outcome_mats(theta_a: float, theta_b: float) -> np.ndarray:
    """The four joint projectors, indexed by outcome pair bits 2a+b."""
    pa = [(_I2 + s * _obs(theta_a)) / 2.0 for s in (+1.0, -1.0)]
    pb = [(_I2 + s * _obs(theta_b)) / 2.0 for s in (+1.0, -1.0)]
    return np.stack([np.kron(pa[a], pb[b]) for a in range(2) for b in range(2)])


@dataclasses.dataclass(frozen=True, eq=False)
class TrialRecord:
    """Full transcript of one protocol trial.

    Per-round tuples have length n with -1 sentinels at the stored
    index, which is never measured.  ``omega_exp`` is the parallel
    estimator (4/n) * sum of the signed score weights, or the win
    fraction converted to the Bell-value scale for sequential runs; the
    sequential abort decision itself uses the integer loss count.
    """

    protocol: str
    n: int
    t: int
    x: tuple[int, ...]
    y: tuple[int, ...]
    a: tuple[int, ...]
    b: tuple[int, ...]
    w: tuple[int, ...]
    omega_exp: float
    aborted: bool
    stored_state: DensityMat

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrialRecord):
            return NotImplemented
        scalar = ("protocol", "n", "t", "x", "y", "a", "b", "w", "omega_exp", "aborted")
        return all(getattr(self, f) == getattr(other, f) for f in scalar) and np.array_equal(
            self.stored_state.mat, other.stored_state.mat
        )

    def wins(self) -> int:
        return sum(v for v in self.w if v > 0)

    def to_json(self) -> str:
        body = {
            "protocol": self.protocol,
            "n": self.n,
            "t": self.t,
            "omega_exp": self.omega_exp,
            "aborted": self.aborted,
            "wins": self.wins(),
        }
        return json.dumps(body, indent=2, sort_keys=True)


def transcript_csv(rec: TrialRecord) -> str:
    lines = ["round,x,y,a,b,w"]
    for i in range(rec.n):
        if i + 1 == rec.t:
            lines.append(f"{i + 1},,,,,")
        else:
            lines.append(f"{i + 1},{rec.x[i]},{rec.y[i]},{rec.a[i]},{rec.b[i]},{rec.w[i]}")
    return "\n".join(lines) + "\n"


def _round_states(src: SourceModel, n: int) -> np.ndarray:
    """Stacked per-round states for the vectorized sampler."""
    if src.kind == "honest_isotropic":
        return np.broadcast_to(_isotropic(src.mu), (n, 4, 4))
    if src.kind == "abort_attack":
        out = np.broadcast_to(_PHI_PLUS, (n, 4, 4)).copy()
        if src.t_good <= n:
            out[src.t_good - 1] = _JUNK
        return out
    mats = [src.states[i % len(src.states)].mat.real for i in range(n)]
    return np.stack(mats)


def _require_game_form(cfg: ProtocolConfig) -> None:
    f = cfg.functional
    if f.cA != (0.0, 0.0) or f.cB != (0.0, 0.0):
        raise ValueError("round estimator supports correlator-only functionals")


def run_protocol(cfg: ProtocolConfig, src: SourceModel, dev: DeviceModel, seed: int, trial: int = 0) -> TrialRecord:
    """Execute one trial and return its record; deterministic per seed."""
    _require_game_form(cfg)
    n = cfg.n
    t = int(_stream(seed, trial, _ROLE_T).integers(1, n + 1))
    xs = _stream(seed, trial, _ROLE_X).integers(0, 2, size=n)
    ys = _stream(seed, trial, _ROLE_Y).integers(0, 2, size=n)
    us = _stream(seed, trial, _ROLE_OUT).random(n)
    measured = np.ones(n, dtype=bool)
    measured[t - 1] = False

    a_bits = np.full(n, -1, dtype=int)
    b_bits = np.full(n, -1, dtype=int)
    if dev.is_adaptive:
        tr_a: tuple = ()
        tr_b: tuple = ()
        for i in range(n):
            if not measured[i]:
                continue
            rho = src.state_for(i + 1, n).mat.real
            mats = _outcome_mats(dev.theta("A", tr_a, int(xs[i])), dev.theta("B", tr_b, int(ys[i])))
            probs = np.maximum(np.einsum("oij,ji->o", mats, rho), 0.0)
            o = int(np.searchsorted(np.cumsum(probs / probs.sum()), us[i], side="right"))
            o = min(o, 3)
            a_bits[i], b_bits[i] = o >> 1, o & 1
            tr_a += ((int(xs[i]), o >> 1),)
            tr_b += ((int(ys[i]), o & 1),)
    else:
        rhos = _round_states(src, n)
        for xv in range(2):
            for yv in range(2):
                sel = measured & (xs == xv) & (ys == yv)
                if not sel.any():
                    continue
                mats = _outcome_mats(dev.theta("A", (), xv), dev.theta("B", (), yv))
                probs = np.maximum(np.einsum("oij,nji->no", mats, rhos[sel]), 0.0)
                cum = np.cumsum(probs / probs.sum(axis=1, keepdims=True), axis=1)
                o = np.minimum((cum <= us[sel, None]).sum(axis=1), 3)
                a_bits[sel] = o >> 1
                b_bits[sel] = o & 1

    # win iff the signed outcome product matches the input product sign
    s = (1 - 2 * a_bits) * (1 - 2 * b_bits) * (1 - 2 * (xs & ys))
    w_bits = np.where(measured, (1 + s) // 2, -1)

    f = cfg.functional
    if cfg.is_parallel:
        gt = np.array([[f.coeff_rescaled(xv, yv) for yv in range(2)] for xv in range(2)])
        weights = gt[xs, ys] * (2 * w_bits - 1)
        omega_exp = 4.0 / n * float(weights[measured].sum())
        aborted = omega_exp <= cfg.omega_sharp - cfg.kappa
    else:
        nwins = int(w_bits[measured].sum())
        failures = (n - 1) - nwins
        aborted = failures > math.floor((n - 1) * (1.0 - cfg.p_win_sharp + cfg.kappa))
        omega_exp = score_to_value(nwins / n)

    sent = np.where(measured, xs, -1)
    sent_y = np.where(measured, ys, -1)
    return TrialRecord(
        protocol=cfg.protocol,
        n=n,
        t=t,
        x=tuple(int(v) for v in sent),
        y=tuple(int(v) for v in sent_y),
        a=tuple(int(v) for v in a_bits),
        b=tuple(int(v) for v in b_bits),
        w=tuple(int(v) for v in w_bits),
        omega_exp=float(omega_exp),
        aborted=bool(aborted),
        stored_state=src.state_for(t, n),
    )


def _fast_win_prob(cfg: ProtocolConfig, src: SourceModel, dev: DeviceModel) -> float | None:
    """Per-round P(weight = +1) when rounds are i.i.d. sign variables."""
    if src.kind != "honest_isotropic" or dev.is_adaptive:
        return None
    f = cfg.functional
    if any(abs(f.coeff_rescaled(x, y)) != 1.0 for x in range(2) for y in range(2)):
        return None
    corr = 0.0
    for x in range(2):
        for y in range(2):
            corr += f.gamma[x][y] * math.cos(dev.theta("A", (), x) - dev.theta("B", (), y))
    omega_true = (1.0 - src.mu) * corr
    return 0.5 + omega_true / 8.0


def estimate_abort_rate(cfg: ProtocolConfig, src: SourceModel, dev: DeviceModel, trials: int, seed: int):
    """Abort frequency over independent trials with a Wilson 95% interval.

    Honest i.i.d. unit-weight configurations shortcut through a
    binomial draw of each trial's win count, which is equal in
    distribution to the per-round path; anything else runs the full
    per-round simulation.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    _require_game_form(cfg)
    n = cfg.n
    p = _fast_win_prob(cfg, src, dev)
    if p is not None:
        g = _stream(seed, 0, _ROLE_FAST)
        wins = g.binomial(n - 1, p, size=trials)
        if cfg.is_parallel:
            omega_exp = 4.0 / n * (2.0 * wins - (n - 1))
            aborts = int(np.sum(omega_exp <= cfg.omega_sharp - cfg.kappa))
        else:
            thr = math.floor((n - 1) * (1.0 - cfg.p_win_sharp + cfg.kappa))
            aborts = int(np.sum((n - 1) - wins > thr))
    else:
        aborts = sum(
            run_protocol(cfg, src, dev, seed, trial=k).aborted for k in range(trials)
        )
    rate = aborts / trials
    z = 1.959963984540054
    denom = trials + z * z
    center = (aborts + z * z / 2.0) / denom
    half = z * math.sqrt(aborts * (trials - aborts) / trials + z * z / 4.0) / denom
    return rate, (max(center - half, 0.0), min(center + half, 1.0))


def seq_adversary_value(mu_list, c: int) -> float:
    """Max P(wins >= c) over independent rounds with caps mu_i: product at the caps."""
    mu = [float(m) for m in mu_list]
    if len(mu) > 12:
        raise ValueError("exact value supported for n <= 12")
    if any(not 0.0 <= m <= 1.0 for m in mu):
        raise ValueError("mu entries must lie in [0, 1]")
    n = len(mu)
    dp = np.zeros(n + 1)
    dp[0] = 1.0
    for m in mu:
        dp[1:] = dp[1:] * (1.0 - m) + dp[:-1] * m
        dp[0] *= 1.0 - m
    return float(dp[max(int(c), 0) :].sum()) if c > 0 else 1.0


def seq_adversary_bruteforce(mu_list, c: int, grid_steps: int = 21) -> float:
    """Max P(wins >= c) over adaptive strategies with gridded round probabilities.

    Each round's conditional win probability is chosen from a uniform
    grid on [0, mu_i], possibly depending on the full prior win/lose
    history.  Continuation values depend on the history only through
    the win count, so backward induction over (round, wins) with a
    per-node grid max realizes the exact adaptive optimum for the
    gridded strategy class.
    """
    mu = [float(m) for m in mu_list]
    if len(mu) > 4:
        raise ValueError("brute force supported for n <= 4")
    if grid_steps < 2:
        raise ValueError("grid_steps must be >= 2")
    n = len(mu)
    value = np.array([1.0 if wins >= c else 0.0 for wins in range(n + 1)])
    for i in range(n - 1, -1, -1):
        grid = np.linspace(0.0, mu[i], grid_steps)
        nxt = np.empty(i + 1)
        for wins in range(i + 1):
            nxt[wins] = np.max(grid * value[wins + 1] + (1.0 - grid) * value[wins])
        value = nxt
    return float(value[0])


@dataclasses.dataclass(frozen=True)
class Scenario:
    """A loadable simulation setup: protocol parameters plus models."""

    config: ProtocolConfig
    source: SourceModel
    device: DeviceModel
    seed: int
    trials: int


def load_scenario(text: str) -> Scenario:
    """Parse a scenario JSON document (adaptive devices are not loadable)."""
    data = json.loads(text)
    from .bellops import load_functional

    functional = load_functional(data.get("functional", "chsh"))
    cfg = ProtocolConfig(
        protocol=data["protocol"],
        n=int(data["n"]),
        kappa=float(data["kappa"]),
        functional=functional,
        omega_sharp=data.get("omega_sharp"),
        p_win_sharp=data.get("p_win_sharp"),
        epsilon=float(data.get("epsilon", 0.0)),
        bound_mode=data.get("bound_mode", "paper"),
    )
    sdata = data["source"]
    if sdata["kind"] == "honest_isotropic":
        src = SourceModel.honest_isotropic(sdata.get("mu", 0.0))
    elif sdata["kind"] == "abort_attack":
        src = SourceModel.abort_attack(sdata["t_good"])
    else:
        raise ValueError("scenario sources must be honest_isotropic or abort_attack")
    ddata = data["device"]
    if ddata["kind"] == "optimal_chsh":
        dev = DeviceModel.optimal_chsh()
    elif ddata["kind"] == "fixed_angles":
        dev = DeviceModel.fixed_angles(tuple(ddata["alice"]), tuple(ddata["bob"]))
    else:
        raise ValueError("scenario devices must be optimal_chsh or fixed_angles")
    return Scenario(
        config=cfg,
        source=src,
        device=dev,
        seed=int(data.get("seed", 0)),
        trials=int(data.get("trials", 1)),
    )
