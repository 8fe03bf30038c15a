"""Continuous normalizing flow with a MADE drift.

The drift for timepoint ``t`` is::

    dz_t/ds = f_t(z_{<t}, s) + d_t(z_{<t}, s) * z_t

where ``s`` is pseudo-time and ``f``, ``d`` are the two output blocks of one
MADE pass. The spatial Jacobian is lower-triangular with diagonal ``d``, so
the instantaneous change of variables is exact: ``dlogp/ds = -sum_t d_t``.
Without the diagonal block (``diagonal=False``) the flow preserves volume and
``dlogp`` is identically zero.

Density evaluation integrates the augmented state ``(z, a)`` with
``da/ds = -trace`` backwards from the data at ``t1`` to ``t0``; then
``log p(x) = log N(z(t0)) - a(t0)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ad, ode
from .ad import Tensor, no_grad
from .errors import ContractError, DivergenceError
from .made import MadeNetwork, build_made

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class SolverConfig:
    method: str = "rk4_fixed"  # or "dopri5_adaptive"
    step_count: int = 40
    rtol: float = 1e-5
    atol: float = 1e-5
    max_steps: int = 10000

    def __post_init__(self):
        if self.method not in ("rk4_fixed", "dopri5_adaptive"):
            raise ContractError(f"unknown solver method {self.method!r}")
        if self.step_count < 1:
            raise ContractError("step_count must be >= 1")
        if self.rtol <= 0 or self.atol <= 0:
            raise ContractError("solver tolerances must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CnfModel:
    drift: MadeNetwork
    input_dim: int
    diagonal: bool = True
    t0: float = 0.0
    t1: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    blowup: float = 1e8
    normalizer: dict | None = None

    def parameters(self) -> list[Tensor]:
        return self.drift.parameters()

    def log_prob(self, x) -> Tensor:
        return cnf_log_prob(self, x)

    def sample(self, n: int, seed: int) -> np.ndarray:
        return cnf_sample(self, n, seed)


def build_cnf(D: int, hidden_sizes=(256, 256), diagonal: bool = True,
              solver: SolverConfig | None = None, seed: int = 0) -> CnfModel:
    drift = build_made(D, list(hidden_sizes), output_multiplier=2 if diagonal else 1,
                       conditional_dim=1, seed=seed, zero_last=True)
    return CnfModel(drift, D, diagonal, solver=solver or SolverConfig())


def _pseudo_time(model: CnfModel, t: float, batch: int) -> np.ndarray:
    return np.full((batch, 1), (t - model.t0) / (model.t1 - model.t0))


def cnf_drift(model: CnfModel, z, t: float, masked=None) -> tuple[Tensor, Tensor]:
    """Return ``(dz, dlogp)``; dlogp is minus the exact Jacobian trace."""
    z = ad.as_tensor(z)
    D = model.input_dim
    out = model.drift(z, _pseudo_time(model, t, z.shape[0]), masked)
    if not model.diagonal:
        return out, Tensor(np.zeros(z.shape[0]))
    f, d = out[:, :D], out[:, D:]
    return f + d * z, -d.sum(axis=1)


def standard_normal_log_prob(z):
    z = z.data if isinstance(z, Tensor) else z
    return -0.5 * np.sum(z * z, axis=1) - 0.5 * z.shape[1] * LOG_2PI


def _differentiable_log_prob(model: CnfModel, x: Tensor) -> Tensor:
    if model.solver.method != "rk4_fixed":
        raise ContractError("gradients are only available through the fixed-step RK4 solver")
    masked = model.drift.masked_weights()

    def func(t, y):
        return cnf_drift(model, y[0], t, masked)

    a0 = Tensor(np.zeros(x.shape[0]))
    z0, a = ode.rk4(func, (x, a0), model.t1, model.t0, model.solver.step_count)
    if not (np.all(np.isfinite(z0.data)) and np.all(np.isfinite(a.data))):
        raise DivergenceError("CNF integration produced non-finite state", t=model.t0)
    base = ad.square(z0).sum(axis=1) * -0.5 - 0.5 * model.input_dim * LOG_2PI
    return base - a


def integrate_contained(drift_fn, y: np.ndarray, n_aug: int, t_from: float, t_to: float,
                        solver: SolverConfig, blowup: float):
    """Integrate a batch of independent rows, freezing rows that diverge.

    ``drift_fn(z, t) -> (dz, extra)`` works on the first ``D`` columns of the
    state; ``n_aug`` trailing columns (0 or 1) accumulate ``extra``.
    Returns ``(state, ok)``; diverged rows are NaN.
    """
    D = y.shape[1] - n_aug

    def f_np(t, yy):
        dz, extra = drift_fn(yy[:, :D], t)
        dz = dz.data if isinstance(dz, Tensor) else dz
        if not n_aug:
            return dz
        extra = extra.data if isinstance(extra, Tensor) else extra
        return np.concatenate([dz, extra[:, None]], axis=1)

    with no_grad(), np.errstate(over="ignore", invalid="ignore"):
        if solver.method == "dopri5_adaptive":
            out, ok, _ = ode.dopri5(f_np, y, t_from, t_to, solver.rtol, solver.atol,
                                    solver.max_steps, blowup)
            return out, ok
        ok = np.ones(len(y), dtype=bool)

        def on_step(t, state):
            s = state[0]
            bad = ~(np.all(np.isfinite(s), axis=1) & (np.max(np.abs(s), axis=1, initial=0.0) < blowup))
            if np.any(bad):
                ok[bad] = False
                s = s.copy()
                s[bad] = 0.0
            return (s,)

        (out,) = ode.rk4(lambda t, st: (f_np(t, st[0]),), (np.array(y, dtype=np.float64),),
                         t_from, t_to, solver.step_count, on_step)
        out[~ok] = np.nan
        return out, ok


def cnf_log_prob(model: CnfModel, x, with_flags: bool = False):
    """Exact log-density of ``x`` under the flow.

    Default: a differentiable Tensor; any divergence raises
    :class:`DivergenceError`. With ``with_flags`` the evaluation is gradient-free
    and contained: returns ``(log_prob ndarray, divergent bool ndarray)`` with
    ``-inf`` for divergent rows.
    """
    if not with_flags:
        return _differentiable_log_prob(model, ad.as_tensor(x))
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    with no_grad():
        masked = model.drift.masked_weights()
    y = np.concatenate([x, np.zeros((len(x), 1))], axis=1)
    out, ok = integrate_contained(lambda z, t: cnf_drift(model, z, t, masked), y, 1,
                                  model.t1, model.t0, model.solver, model.blowup)
    lp = np.full(len(x), -np.inf)
    if np.any(ok):
        lp[ok] = standard_normal_log_prob(out[ok, :-1]) - out[ok, -1]
    bad_lp = ok & ~np.isfinite(lp)
    ok &= ~bad_lp
    lp[~ok] = -np.inf
    return lp, ~ok


def cnf_transform(model: CnfModel, x, to_base: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Push samples between data (t1) and base (t0) space; returns ``(y, ok)``."""
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    with no_grad():
        masked = model.drift.masked_weights()
    t_from, t_to = (model.t1, model.t0) if to_base else (model.t0, model.t1)
    return integrate_contained(lambda z, t: cnf_drift(model, z, t, masked), x, 0,
                               t_from, t_to, model.solver, model.blowup)


def cnf_sample(model: CnfModel, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ContractError("n must be >= 1")
    z = np.random.default_rng(seed).standard_normal((n, model.input_dim))
    x, ok = cnf_transform(model, z, to_base=False)
    if not np.all(ok):
        raise DivergenceError(f"{int(np.sum(~ok))} of {n} samples diverged during generation",
                              t=model.t1)
    return x
