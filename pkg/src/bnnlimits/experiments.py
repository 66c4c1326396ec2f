"""Configuration-driven convergence experiments and plot-ready data export.

Each experiment compares finite-width network draws against draws from the
corresponding infinite-width limit on a fixed test grid, summarizing the
exact empirical 1-Wasserstein distance per width with resampling bands and
a fitted log-log slope.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy
import scipy.optimize
from scipy import stats

from . import __version__
from .gibbs import GibbsConfig, PosteriorSamples, gibbs_run, gibbs_run_fixed_variance
from .kernels import (
    ConstraintReport,
    check_hyperparams,
    kernel_recursion,
    rescaled_kernel,
)
from .network import Architecture, Dataset, VarianceVector, forward_batch, sample_prior_params
from .nuts import HmcConfig
from .posteriors import gp_posterior, tp_posterior_predict
from .rng import RngStream
from .samplers import sample_mvn, sample_mvt
from .wasserstein import w1_exact, sliced_w1

log = logging.getLogger("bnnlimits")

REFERENCE_FUNCTIONS = {
    "sin2pi": lambda x: np.sin(2.0 * math.pi * x),
    "cos2pi": lambda x: np.cos(2.0 * math.pi * x),
    "identity": lambda x: x,
    "zero": lambda x: np.zeros_like(x),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for the width-convergence experiments (single-output nets)."""

    n_hidden_layers: int = 2
    activation: str = "erf"
    weight_variance: float = 5.0
    bias_variance: float = 5.0
    a: float = 3.0
    b: float = 2.0
    noise_var: float = 0.1  # fixed likelihood variance for the Gaussian baseline
    widths: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64, 128)
    draws: int = 100
    reference_fn: str = "sin2pi"
    data_noise: float = 0.1
    k: int = 8
    domain: tuple[float, float] = (-1.0, 1.0)
    test_grid: int = 64
    w1_grid: int = 5
    n_reps: int = 10
    burn_in: int = 200
    thinning: int = 1
    hmc_steps: int = 5
    kernel_method: str = "analytic_erf"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))
        if any(b <= a for a, b in zip(self.widths, self.widths[1:])):
            raise ConfigError("widths must be strictly increasing")
        if self.draws < 2:
            raise ConfigError("draws must be >= 2")
        if self.n_hidden_layers < 1:
            raise ConfigError("need at least one hidden layer")
        if self.reference_fn not in REFERENCE_FUNCTIONS:
            raise ConfigError(f"unknown reference function {self.reference_fn!r}")
        if self.k < 0 or self.test_grid < 0 or self.n_reps < 1:
            raise ConfigError("k, test_grid must be >= 0 and n_reps >= 1")
        if self.w1_grid > max(self.test_grid, 0):
            raise ConfigError("w1_grid cannot exceed test_grid")
        if self.activation not in ("identity", "erf", "relu", "tanh"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.kernel_method == "analytic_erf" and self.activation != "erf":
            raise ConfigError("analytic_erf kernel method requires erf activation")
        if self.kernel_method == "analytic_relu" and self.activation != "relu":
            raise ConfigError("analytic_relu kernel method requires relu activation")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown config fields: {sorted(bad)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    def architecture(self, width: int) -> Architecture:
        widths = (1,) + (int(width),) * self.n_hidden_layers + (1,)
        acts = ("identity",) + (self.activation,) * self.n_hidden_layers
        return Architecture(widths, acts)

    def variances(self) -> VarianceVector:
        n_layers = self.n_hidden_layers + 1
        return VarianceVector(
            (self.weight_variance,) * n_layers, (self.bias_variance,) * n_layers
        )

    def make_dataset(self) -> Dataset:
        lo, hi = self.domain
        if self.k == 0:
            return Dataset(np.empty((1, 0)), np.empty((1, 0)))
        x = np.linspace(lo, hi, self.k)
        f = REFERENCE_FUNCTIONS[self.reference_fn]
        noise = RngStream(self.seed, (100,)).gen.standard_normal(self.k)
        return Dataset(x[None, :], (f(x) + self.data_noise * noise)[None, :])

    def make_test_grid(self) -> np.ndarray:
        lo, hi = self.domain
        return np.linspace(lo, hi, self.test_grid)[None, :]

    def w1_subgrid_idx(self) -> np.ndarray:
        if self.w1_grid == 0 or self.test_grid == 0:
            return np.array([], dtype=int)
        return np.unique(
            np.round(np.linspace(0, self.test_grid - 1, self.w1_grid)).astype(int)
        )


@dataclass
class ConvergenceReport:
    """Per-width W1 estimates with resampling bands and a fitted slope."""

    widths: list[int]
    w1: list[float]
    w1_lo: list[float]
    w1_hi: list[float]
    w1_reps: list[list[float]]
    sliced: list[float]
    slope: float | None
    limit_mean: list[float]
    limit_var: list[float]
    seed: int
    config_hash: str
    runtime_s: float
    constraint: ConstraintReport | None = None


def fit_loglog_slope(widths, w1) -> float | None:
    """Least-squares slope of log W1 against log width (needs >= 4 widths)."""
    w = np.asarray(widths, dtype=float)
    v = np.asarray(w1, dtype=float)
    keep = v > 0
    if keep.sum() < 4:
        return None
    coef = np.polyfit(np.log(w[keep]), np.log(v[keep]), 1)
    return float(coef[0])


def _log_constraint(cfg: ExperimentConfig, data: Dataset) -> ConstraintReport | None:
    if data.k == 0:
        return None
    arch = cfg.architecture(cfg.widths[-1])
    kp = rescaled_kernel(arch, cfg.variances(), data.x, method=cfg.kernel_method)
    report = check_hyperparams(cfg.a, cfg.b, data.y, kp)
    log.info(report.summary())
    return report


def _band(values: np.ndarray) -> tuple[float, float, float]:
    return float(np.mean(values)), float(np.min(values)), float(np.max(values))


def _chain_seed(seed: int, width: int, kind: int) -> int:
    """Distinct 63-bit chain seed per (experiment seed, width, sweep kind)."""
    h = hashlib.sha256(f"{seed}:{width}:{kind}".encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def _limit_kernel_full(cfg: ExperimentConfig, data: Dataset, grid: np.ndarray):
    """Rescaled kernel over train+test inputs with the train partition first."""
    arch = cfg.architecture(cfg.widths[-1])
    inputs = np.concatenate([data.x, grid], axis=1) if data.k else grid
    return rescaled_kernel(
        arch, cfg.variances(), inputs, method=cfg.kernel_method, n_train=data.k
    )


def _prior_width_job(cfg: ExperimentConfig, width: int) -> dict:
    """Per-width W1 between prior network draws and NNGP draws."""
    grid = cfg.make_test_grid()
    idx = cfg.w1_subgrid_idx()
    arch = cfg.architecture(width)
    kernel = kernel_recursion(arch, cfg.variances(), grid, method=cfg.kernel_method)
    ksub = kernel.values[np.ix_(idx, idx)]
    rng = RngStream(cfg.seed, (width,))
    reps = []
    sl = []
    for rep_rng in rng.split(cfg.n_reps):
        r_bnn, r_gp = rep_rng.split(2)
        theta = sample_prior_params(arch, cfg.variances(), r_bnn, n_draws=cfg.draws)
        bnn = forward_batch(arch, theta, grid)[:, 0, :]
        gp = sample_mvn(np.zeros(len(idx)), ksub, r_gp, size=cfg.draws)
        reps.append(w1_exact(bnn[:, idx], gp))
        gp_full = sample_mvn(
            np.zeros(grid.shape[1]), kernel.values, r_gp.child(0), size=cfg.draws
        )
        sl.append(sliced_w1(bnn, gp_full, 128, r_gp.child(1)))
    mean, lo, hi = _band(np.asarray(reps))
    return {
        "width": width, "w1": mean, "w1_lo": lo, "w1_hi": hi,
        "reps": reps, "sliced": float(np.mean(sl)),
    }


def _posterior_width_job(cfg: ExperimentConfig, width: int) -> dict:
    """Per-width W1 between Gibbs posterior draws and Student-t limit draws."""
    data = cfg.make_dataset()
    grid = cfg.make_test_grid()
    idx = cfg.w1_subgrid_idx()
    arch = cfg.architecture(width)
    gcfg = GibbsConfig(
        n_samples=cfg.draws,
        burn_in=cfg.burn_in,
        thinning=cfg.thinning,
        hmc=HmcConfig(warmup=0),
        hmc_steps=cfg.hmc_steps,
        seed=_chain_seed(cfg.seed, width, 1),
    )
    samples = gibbs_run(arch, cfg.variances(), cfg.a, cfg.b, data, grid, gcfg)
    kfull = _limit_kernel_full(cfg, data, grid)
    tp = tp_posterior_predict(kfull, data.y, cfg.a, cfg.b)
    rng = RngStream(cfg.seed, (width, 2))
    reps, sl = _resampled_w1(cfg, samples.evals, idx, rng,
                             lambda r, n: sample_mvt(tp.nu, tp.location, tp.scale, r, size=n))
    mean, lo, hi = _band(np.asarray(reps))
    return {
        "width": width, "w1": mean, "w1_lo": lo, "w1_hi": hi,
        "reps": reps, "sliced": float(np.mean(sl)),
        "diagnostics": samples.diagnostics,
    }


def _baseline_width_job(cfg: ExperimentConfig, width: int) -> dict:
    """Per-width W1 between fixed-variance posterior draws and the GP limit."""
    data = cfg.make_dataset()
    grid = cfg.make_test_grid()
    idx = cfg.w1_subgrid_idx()
    arch = cfg.architecture(width)
    gcfg = GibbsConfig(
        n_samples=cfg.draws,
        burn_in=cfg.burn_in,
        thinning=cfg.thinning,
        hmc=HmcConfig(warmup=0),
        hmc_steps=cfg.hmc_steps,
        seed=_chain_seed(cfg.seed, width, 3),
    )
    samples = gibbs_run_fixed_variance(
        arch, cfg.variances(), cfg.noise_var, data, grid, gcfg
    )
    inputs = np.concatenate([data.x, grid], axis=1) if data.k else grid
    kernel = kernel_recursion(
        cfg.architecture(cfg.widths[-1]), cfg.variances(), inputs,
        method=cfg.kernel_method, n_train=data.k,
    )
    gp = gp_posterior(
        kernel.train, kernel.cross, kernel.test, data.y, cfg.noise_var
    )
    rng = RngStream(cfg.seed, (width, 4))
    reps, sl = _resampled_w1(cfg, samples.evals, idx, rng,
                             lambda r, n: sample_mvn(gp.mean, gp.cov, r, size=n))
    mean, lo, hi = _band(np.asarray(reps))
    return {
        "width": width, "w1": mean, "w1_lo": lo, "w1_hi": hi,
        "reps": reps, "sliced": float(np.mean(sl)),
        "diagnostics": samples.diagnostics,
    }


def _resampled_w1(cfg, evals, idx, rng, limit_sampler):
    """Bootstrap the finite-width pool; fresh limit draws per repetition."""
    reps, sl = [], []
    n = evals.shape[0]
    for rep_rng in rng.split(cfg.n_reps):
        r_boot, r_lim = rep_rng.split(2)
        pick = r_boot.gen.integers(0, n, size=n)
        bnn = evals[pick]
        lim = limit_sampler(r_lim, n)
        reps.append(w1_exact(bnn[:, idx], lim[:, idx]))
        sl.append(sliced_w1(bnn, lim, 128, r_lim.child(0)))
    return reps, sl


def _run_width_sweep(cfg: ExperimentConfig, job, jobs: int = 1) -> list[dict]:
    if jobs > 1 and len(cfg.widths) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(job, [cfg] * len(cfg.widths), cfg.widths))
    return [job(cfg, w) for w in cfg.widths]


def _assemble_report(cfg: ExperimentConfig, rows: list[dict],
                     limit_mean, limit_var, t0: float,
                     constraint=None) -> ConvergenceReport:
    return ConvergenceReport(
        widths=[r["width"] for r in rows],
        w1=[r["w1"] for r in rows],
        w1_lo=[r["w1_lo"] for r in rows],
        w1_hi=[r["w1_hi"] for r in rows],
        w1_reps=[r["reps"] for r in rows],
        sliced=[r["sliced"] for r in rows],
        slope=fit_loglog_slope([r["width"] for r in rows], [r["w1"] for r in rows]),
        limit_mean=list(np.ravel(limit_mean)),
        limit_var=list(np.ravel(limit_var)),
        seed=cfg.seed,
        config_hash=cfg.hash(),
        runtime_s=time.perf_counter() - t0,
        constraint=constraint,
    )


def run_prior_convergence(cfg: ExperimentConfig, jobs: int = 1) -> ConvergenceReport:
    """W1 between prior network draws and NNGP draws, per width."""
    t0 = time.perf_counter()
    data = cfg.make_dataset()
    constraint = _log_constraint(cfg, data)
    grid = cfg.make_test_grid()
    kernel = kernel_recursion(
        cfg.architecture(cfg.widths[-1]), cfg.variances(), grid,
        method=cfg.kernel_method,
    )
    rows = _run_width_sweep(cfg, _prior_width_job, jobs)
    return _assemble_report(
        cfg, rows, np.zeros(grid.shape[1]), np.diag(kernel.values), t0, constraint
    )


def run_posterior_convergence(cfg: ExperimentConfig, jobs: int = 1) -> ConvergenceReport:
    """W1 between Gibbs posterior draws and Student-t limit draws, per width."""
    t0 = time.perf_counter()
    data = cfg.make_dataset()
    constraint = _log_constraint(cfg, data)
    grid = cfg.make_test_grid()
    kfull = _limit_kernel_full(cfg, data, grid)
    tp = tp_posterior_predict(kfull, data.y, cfg.a, cfg.b)
    rows = _run_width_sweep(cfg, _posterior_width_job, jobs)
    var = np.diag(tp.covariance()) if tp.nu > 2 else np.full(grid.shape[1], np.nan)
    return _assemble_report(cfg, rows, tp.location, var, t0, constraint)


def run_gaussian_baseline(cfg: ExperimentConfig, jobs: int = 1) -> ConvergenceReport:
    """W1 between fixed-variance posterior draws and the GP limit, per width."""
    t0 = time.perf_counter()
    data = cfg.make_dataset()
    constraint = _log_constraint(cfg, data)
    grid = cfg.make_test_grid()
    inputs = np.concatenate([data.x, grid], axis=1) if data.k else grid
    kernel = kernel_recursion(
        cfg.architecture(cfg.widths[-1]), cfg.variances(), inputs,
        method=cfg.kernel_method, n_train=data.k,
    )
    gp = gp_posterior(kernel.train, kernel.cross, kernel.test, data.y, cfg.noise_var)
    rows = _run_width_sweep(cfg, _baseline_width_job, jobs)
    return _assemble_report(cfg, rows, gp.mean, np.diag(gp.cov), t0, constraint)


@dataclass
class ComparisonReport:
    """Posterior-predictive quantile bands for the t and Gaussian limits."""

    grid: list[float]
    tp_bands: list[tuple[float, float, float]]  # (2.5%, 50%, 97.5%) per point
    gp_bands: list[tuple[float, float, float]]
    seed: int
    config_hash: str
    runtime_s: float


def run_comparison(cfg: ExperimentConfig) -> ComparisonReport:
    """Paired 2.5/50/97.5% predictive bands for the Student-t and GP limits."""
    t0 = time.perf_counter()
    data = cfg.make_dataset()
    _log_constraint(cfg, data)
    grid = cfg.make_test_grid()
    if grid.shape[1] == 0:
        return ComparisonReport([], [], [], cfg.seed, cfg.hash(),
                                time.perf_counter() - t0)
    kprime = _limit_kernel_full(cfg, data, grid)
    tp = tp_posterior_predict(kprime, data.y, cfg.a, cfg.b)
    inputs = np.concatenate([data.x, grid], axis=1) if data.k else grid
    kernel = kernel_recursion(
        cfg.architecture(cfg.widths[-1]), cfg.variances(), inputs,
        method=cfg.kernel_method, n_train=data.k,
    )
    gp = gp_posterior(kernel.train, kernel.cross, kernel.test, data.y, cfg.noise_var)
    qs = (0.025, 0.5, 0.975)
    t_sd = np.sqrt(np.clip(np.diag(tp.scale), 0.0, None))
    g_sd = np.sqrt(np.clip(np.diag(gp.cov), 0.0, None))
    tp_bands = [
        tuple(float(tp.location[i] + t_sd[i] * stats.t.ppf(q, tp.nu)) for q in qs)
        for i in range(grid.shape[1])
    ]
    gp_bands = [
        tuple(float(gp.mean[i] + g_sd[i] * stats.norm.ppf(q)) for q in qs)
        for i in range(grid.shape[1])
    ]
    return ComparisonReport(
        list(grid[0]), tp_bands, gp_bands, cfg.seed, cfg.hash(),
        time.perf_counter() - t0,
    )


@dataclass
class BoundDiagnostics:
    """Numerical verification of the likelihood sup and Lipschitz constants."""

    settings: list[tuple[float, int]]  # (sigma2, n_L * k)
    sup_formula: list[float]
    sup_numeric: list[float]
    lip_formula: list[float]
    lip_numeric: list[float]
    argmax_resid2: list[float]  # ||y - z||^2 at the gradient-norm maximizer
    constraint: ConstraintReport | None
    runtime_s: float = 0.0


def likelihood_sup(sigma2: float, n: int) -> float:
    return (2.0 * math.pi * sigma2) ** (-n / 2.0)


def likelihood_lipschitz(sigma2: float, n: int) -> float:
    return math.exp(-0.5) / math.sqrt(sigma2) * likelihood_sup(sigma2, n)


def run_bound_diagnostics(
    cfg: ExperimentConfig,
    settings: tuple[tuple[float, int], ...] = ((1.0, 1), (4.0, 2), (0.5, 3)),
    n_restarts: int = 8,
) -> BoundDiagnostics:
    """Maximize the Gaussian likelihood and its gradient norm numerically.

    The density maximum over z is the sup constant; the maximum gradient
    norm is the Lipschitz constant, attained where ||y - z||^2 = sigma2.
    """
    t0 = time.perf_counter()
    data = cfg.make_dataset()
    constraint = _log_constraint(cfg, data)
    rng = RngStream(cfg.seed, (7,))
    sup_f, sup_n, lip_f, lip_n, res2 = [], [], [], [], []
    for sigma2, n in settings:
        y = rng.gen.standard_normal(n)

        def neg_density(z):
            return -likelihood_sup(sigma2, n) * math.exp(
                -float(np.sum((y - z) ** 2)) / (2.0 * sigma2)
            )

        def neg_grad_norm(z):
            # ||grad L|| = L(z) ||y - z|| / sigma2
            return neg_density(z) * math.sqrt(float(np.sum((y - z) ** 2))) / sigma2

        best_d, best_g, best_r = -np.inf, -np.inf, np.nan
        for _ in range(n_restarts):
            z0 = y + rng.gen.standard_normal(n) * math.sqrt(sigma2)
            rd = scipy.optimize.minimize(neg_density, z0, method="Nelder-Mead",
                                         options={"xatol": 1e-10, "fatol": 1e-14})
            rg = scipy.optimize.minimize(neg_grad_norm, z0, method="Nelder-Mead",
                                         options={"xatol": 1e-10, "fatol": 1e-14})
            best_d = max(best_d, -rd.fun)
            if -rg.fun > best_g:
                best_g = -rg.fun
                best_r = float(np.sum((y - rg.x) ** 2))
        sup_f.append(likelihood_sup(sigma2, n))
        sup_n.append(best_d)
        lip_f.append(likelihood_lipschitz(sigma2, n))
        lip_n.append(best_g)
        res2.append(best_r)
    return BoundDiagnostics(
        list(settings), sup_f, sup_n, lip_f, lip_n, res2, constraint,
        time.perf_counter() - t0,
    )


def emit_figure_data(report, out_dir, cfg: ExperimentConfig | None = None) -> list[str]:
    """Write plot-ready CSV plus JSON metadata; returns the written paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    meta = {
        "config_hash": getattr(report, "config_hash", None),
        "config": cfg.to_dict() if cfg is not None else None,
        "seed": getattr(report, "seed", None),
        "runtime_s": getattr(report, "runtime_s", None),
        "versions": {
            "bnnlimits": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if isinstance(report, ConvergenceReport):
        path = os.path.join(out_dir, "w1_vs_width.csv")
        with open(path, "w") as f:
            f.write("width,w1,w1_lo,w1_hi,seed\n")
            for w, v, lo, hi in zip(report.widths, report.w1, report.w1_lo, report.w1_hi):
                f.write(f"{w},{float(v)!r},{float(lo)!r},{float(hi)!r},{report.seed}\n")
        written.append(path)
        meta["slope"] = report.slope
        if report.constraint is not None:
            meta["constraint"] = dataclasses.asdict(report.constraint)
    elif isinstance(report, ComparisonReport):
        path = os.path.join(out_dir, "predictive_bands.csv")
        with open(path, "w") as f:
            f.write("x,tp_lo,tp_med,tp_hi,gp_lo,gp_med,gp_hi\n")
            for x, tb, gb in zip(report.grid, report.tp_bands, report.gp_bands):
                f.write(f"{float(x)!r},{tb[0]!r},{tb[1]!r},{tb[2]!r},"
                        f"{gb[0]!r},{gb[1]!r},{gb[2]!r}\n")
        written.append(path)
    elif isinstance(report, BoundDiagnostics):
        path = os.path.join(out_dir, "bound_diagnostics.csv")
        with open(path, "w") as f:
            f.write("sigma2,n,sup_formula,sup_numeric,lip_formula,lip_numeric,"
                    "argmax_resid2\n")
            for (s2, n), sf, sn, lf, ln, r2 in zip(
                report.settings, report.sup_formula, report.sup_numeric,
                report.lip_formula, report.lip_numeric, report.argmax_resid2,
            ):
                f.write(
                    f"{float(s2)!r},{n},{float(sf)!r},{float(sn)!r},"
                    f"{float(lf)!r},{float(ln)!r},{float(r2)!r}\n"
                )
        written.append(path)
        if report.constraint is not None:
            meta["constraint"] = dataclasses.asdict(report.constraint)
    else:
        raise TypeError(f"unsupported report type {type(report).__name__}")

    meta_path = written[0].rsplit(".", 1)[0] + ".meta.json"
    with open(meta_path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    written.append(meta_path)
    return written


def read_figure_csv(path: str) -> dict[str, list[float]]:
    """Read an emitted CSV back into column lists (round-trip of emit_figure_data)."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        cols = {h: [] for h in header}
        for line in f:
            if not line.strip():
                continue
            for h, v in zip(header, line.strip().split(",")):
                cols[h].append(float(v))
    return cols
