"""Hamiltonian Monte Carlo with a no-U-turn trajectory criterion.

Recursive doubling with multinomial state selection, identity mass matrix,
and dual-averaged step size during warmup. Generic over (log_density, grad)
callables so the same sampler serves both parametrizations of the network
posterior and scalar test targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .rng import RngStream

DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class HmcConfig:
    """Sampler settings; step_size=None enables dual-averaging adaptation."""

    step_size: float | None = None
    max_tree_depth: int = 8
    warmup: int = 500
    target_accept: float = 0.8

    def __post_init__(self):
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")


@dataclass
class HmcDiagnostics:
    accept_rate: float = 0.0
    n_divergent: int = 0
    n_transitions: int = 0
    tree_depths: list = field(default_factory=list)
    step_size: float = 0.0


class _Tree:
    __slots__ = (
        "theta_minus", "r_minus", "grad_minus",
        "theta_plus", "r_plus", "grad_plus",
        "theta_prop", "grad_prop", "logp_prop",
        "log_weight", "sum_accept", "n_accept", "turning", "divergent",
    )


def _leapfrog(grad_fn, theta, r, grad, eps):
    r = r + 0.5 * eps * grad
    theta = theta + eps * r
    grad = grad_fn(theta)
    r = r + 0.5 * eps * grad
    return theta, r, grad


def _hamiltonian(logp, r):
    return logp - 0.5 * float(r @ r)


def _build_tree(logp_fn, grad_fn, theta, r, grad, logp, depth, direction, eps, h0, gen):
    if depth == 0:
        theta1, r1, grad1 = _leapfrog(grad_fn, theta, r * direction, grad, eps)
        r1 *= direction
        logp1 = logp_fn(theta1)
        h1 = _hamiltonian(logp1, r1)
        t = _Tree()
        t.theta_minus, t.r_minus, t.grad_minus = theta1, r1, grad1
        t.theta_plus, t.r_plus, t.grad_plus = theta1, r1, grad1
        t.theta_prop, t.grad_prop, t.logp_prop = theta1, grad1, logp1
        energy_err = h1 - h0
        t.divergent = not np.isfinite(h1) or energy_err < -DIVERGENCE_THRESHOLD
        t.log_weight = -np.inf if t.divergent else energy_err
        t.sum_accept = min(1.0, math.exp(min(0.0, energy_err)))
        t.n_accept = 1
        t.turning = False
        return t

    first = _build_tree(
        logp_fn, grad_fn, theta, r, grad, logp, depth - 1, direction, eps, h0, gen
    )
    if first.turning or first.divergent:
        return first
    if direction == 1:
        inner_theta, inner_r, inner_grad = first.theta_plus, first.r_plus, first.grad_plus
    else:
        inner_theta, inner_r, inner_grad = first.theta_minus, first.r_minus, first.grad_minus
    second = _build_tree(
        logp_fn, grad_fn, inner_theta, inner_r, inner_grad, logp,
        depth - 1, direction, eps, h0, gen,
    )
    t = _Tree()
    if direction == 1:
        t.theta_minus, t.r_minus, t.grad_minus = first.theta_minus, first.r_minus, first.grad_minus
        t.theta_plus, t.r_plus, t.grad_plus = second.theta_plus, second.r_plus, second.grad_plus
    else:
        t.theta_minus, t.r_minus, t.grad_minus = second.theta_minus, second.r_minus, second.grad_minus
        t.theta_plus, t.r_plus, t.grad_plus = first.theta_plus, first.r_plus, first.grad_plus
    t.log_weight = logsumexp([first.log_weight, second.log_weight])
    # multinomial selection between subtrees (divergent states carry no weight)
    chosen = first
    if not second.divergent and math.log(gen.uniform(1e-300, 1.0)) < (
        second.log_weight - t.log_weight
    ):
        chosen = second
    t.theta_prop, t.grad_prop, t.logp_prop = (
        chosen.theta_prop, chosen.grad_prop, chosen.logp_prop,
    )
    t.sum_accept = first.sum_accept + second.sum_accept
    t.n_accept = first.n_accept + second.n_accept
    t.divergent = second.divergent
    dtheta = t.theta_plus - t.theta_minus
    t.turning = (
        second.turning
        or float(dtheta @ t.r_minus) < 0
        or float(dtheta @ t.r_plus) < 0
    )
    return t


def nuts_transition(logp_fn, grad_fn, theta, logp, grad, eps, max_depth, gen):
    """One no-U-turn transition. Returns (theta, logp, grad, mean_accept, depth, divergent)."""
    r0 = gen.standard_normal(theta.shape[0])
    h0 = _hamiltonian(logp, r0)
    t = _Tree()
    t.theta_minus, t.r_minus, t.grad_minus = theta, r0, grad
    t.theta_plus, t.r_plus, t.grad_plus = theta, r0, grad
    t.theta_prop, t.grad_prop, t.logp_prop = theta, grad, logp
    t.log_weight = 0.0
    sum_accept, n_accept = 0.0, 0
    divergent = False
    depth = 0
    while depth < max_depth:
        direction = 1 if gen.uniform() < 0.5 else -1
        if direction == 1:
            sub = _build_tree(
                logp_fn, grad_fn, t.theta_plus, t.r_plus, t.grad_plus,
                logp, depth, 1, eps, h0, gen,
            )
            t.theta_plus, t.r_plus, t.grad_plus = sub.theta_plus, sub.r_plus, sub.grad_plus
        else:
            sub = _build_tree(
                logp_fn, grad_fn, t.theta_minus, t.r_minus, t.grad_minus,
                logp, depth, -1, eps, h0, gen,
            )
            t.theta_minus, t.r_minus, t.grad_minus = sub.theta_minus, sub.r_minus, sub.grad_minus
        sum_accept += sub.sum_accept
        n_accept += sub.n_accept
        if sub.divergent:
            divergent = True
            break
        if sub.turning:
            break
        # accept the new subtree's proposal with prob weight ratio
        if math.log(gen.uniform(1e-300, 1.0)) < sub.log_weight - t.log_weight:
            t.theta_prop, t.grad_prop, t.logp_prop = (
                sub.theta_prop, sub.grad_prop, sub.logp_prop,
            )
        t.log_weight = logsumexp([t.log_weight, sub.log_weight])
        depth += 1
        dtheta = t.theta_plus - t.theta_minus
        if float(dtheta @ t.r_minus) < 0 or float(dtheta @ t.r_plus) < 0:
            break
    mean_accept = sum_accept / max(n_accept, 1)
    return t.theta_prop, t.logp_prop, t.grad_prop, mean_accept, depth, divergent


def find_reasonable_epsilon(logp_fn, grad_fn, theta, gen) -> float:
    """Heuristic initial step size: leapfrog acceptance near 0.5."""
    eps = 1.0
    r = gen.standard_normal(theta.shape[0])
    logp = logp_fn(theta)
    grad = grad_fn(theta)
    h0 = _hamiltonian(logp, r)
    theta1, r1, _ = _leapfrog(grad_fn, theta, r, grad, eps)
    h1 = _hamiltonian(logp_fn(theta1), r1)
    if not np.isfinite(h1):
        h1 = -np.inf
    direction = 1.0 if (h1 - h0) > math.log(0.5) else -1.0
    for _ in range(50):
        eps *= 2.0**direction
        theta1, r1, _ = _leapfrog(grad_fn, theta, r, grad, eps)
        h1 = _hamiltonian(logp_fn(theta1), r1)
        if not np.isfinite(h1):
            h1 = -np.inf
        if direction * (h1 - h0) < direction * math.log(0.5):
            break
    return eps


class DualAveraging:
    """Nesterov dual averaging towards a target acceptance rate."""

    def __init__(self, eps0: float, target: float = 0.8,
                 gamma: float = 0.05, t0: float = 10.0, kappa: float = 0.75):
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.t = 0

    def update(self, accept: float) -> float:
        self.t += 1
        frac = 1.0 / (self.t + self.t0)
        self.h_bar = (1 - frac) * self.h_bar + frac * (self.target - accept)
        self.log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        w = self.t ** (-self.kappa)
        self.log_eps_bar = w * self.log_eps + (1 - w) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def adapted(self) -> float:
        return math.exp(self.log_eps_bar)


def hmc_sample(
    log_density,
    grad,
    init: np.ndarray,
    cfg: HmcConfig,
    n_draws: int,
    rng: RngStream,
    check_grad: bool = False,
) -> tuple[np.ndarray, HmcDiagnostics]:
    """Run NUTS from init; returns (chain of shape (n_draws, d), diagnostics).

    Warmup iterations adapt the step size (when cfg.step_size is None) and
    are discarded. n_draws = 0 returns an empty chain.
    """
    theta = np.ravel(np.asarray(init, dtype=float)).copy()
    d = theta.shape[0]
    gen = rng.gen
    if check_grad:
        g = grad(theta)
        h = 1e-5
        for i in range(min(d, 5)):
            e = np.zeros(d)
            e[i] = h
            fd = (log_density(theta + e) - log_density(theta - e)) / (2 * h)
            if abs(fd - g[i]) > 1e-3 * max(1.0, abs(fd)):
                raise ValueError(
                    f"gradient check failed at coordinate {i}: {g[i]} vs fd {fd}"
                )

    diag = HmcDiagnostics()
    if n_draws == 0 and cfg.warmup == 0:
        return np.empty((0, d)), diag

    logp = float(log_density(theta))
    g = grad(theta)
    if cfg.step_size is not None:
        eps = cfg.step_size
        da = None
    else:
        eps = find_reasonable_epsilon(log_density, grad, theta, gen)
        da = DualAveraging(eps, target=cfg.target_accept)

    chain = np.empty((n_draws, d))
    accepts = []
    for it in range(cfg.warmup + n_draws):
        if da is not None and it == cfg.warmup:
            eps = da.adapted
        theta, logp, g, acc, depth, div = nuts_transition(
            log_density, grad, theta, logp, g, eps, cfg.max_tree_depth, gen
        )
        if it < cfg.warmup:
            if da is not None:
                eps = da.update(acc)
        else:
            chain[it - cfg.warmup] = theta
            accepts.append(acc)
            diag.tree_depths.append(depth)
            diag.n_divergent += int(div)
            diag.n_transitions += 1
    diag.accept_rate = float(np.mean(accepts)) if accepts else 0.0
    diag.step_size = eps
    return chain, diag
