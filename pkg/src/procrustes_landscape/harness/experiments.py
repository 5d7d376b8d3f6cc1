"""Experiment recipes: Monte Carlo over instances compared with the analytic curves.

Every ``run_*`` takes an :class:`ExperimentConfig`, writes its CSV/JSON files
into ``cfg.output_dir`` and returns an :class:`ExperimentResult` whose
``summary`` is also written as ``summary.json``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import asymptotics as asy
from ..ensemble import DensityCurve, ModelParams, sample_instance, spectrum
from ..errors import ConfigError, DomainError
from ..numerics import Tolerance, integrate
from ..kacrice import build_context, density, expected_count, expected_counts_binned, limits_at_zero
from ..stationary import SecularSystem
from . import io
from .config import ExperimentConfig
from .montecarlo import instance_seed, mean_and_stderr, run_samples

log = logging.getLogger(__name__)

CHI2_MIN_COUNT = 20


@dataclass
class CountSummary:
    mean_count: float
    stderr: float
    count_histogram: dict
    lambda_histogram: DensityCurve | None = None
    lambda_min_samples: np.ndarray | None = None
    e_min_samples: np.ndarray | None = None

    def __post_init__(self):
        if self.stderr < 0:
            raise DomainError("stderr must be nonnegative")

    @classmethod
    def from_counts(cls, counts, **kw) -> "CountSummary":
        counts = np.asarray(counts, dtype=int)
        mean, se = mean_and_stderr(counts)
        values, freq = np.unique(counts, return_counts=True)
        hist = {int(v): int(f) for v, f in zip(values, freq)}
        return cls(float(mean), float(se), hist, **kw)

    def as_dict(self) -> dict:
        return {"mean_count": self.mean_count, "stderr": self.stderr,
                "count_histogram": {str(k): v for k, v in sorted(self.count_histogram.items())}}


@dataclass
class ExperimentResult:
    experiment: str
    summary: dict
    files: list = field(default_factory=list)
    details: dict = field(default_factory=dict)


def _finish(cfg: ExperimentConfig, result: ExperimentResult, started: float) -> ExperimentResult:
    out = Path(cfg.output_dir)
    result.files.append(io.write_json(out / "summary.json", result.summary))
    if cfg.emit_gnuplot:
        curves = [Path(f).name for f in result.files if Path(f).name.endswith("_curve.csv")]
        result.files.append(io.write_gnuplot(out, cfg.experiment, curves))
    duration = time.perf_counter() - started
    for f in list(result.files):
        io.write_sidecar(f, cfg.as_dict(), duration)
    return result


def _grid(cfg: ExperimentConfig, name: str) -> np.ndarray:
    g = cfg.grid_array()
    if g.size == 0:
        raise ConfigError(f"{cfg.experiment} needs a grid of {name} values")
    return g


def _skips(batch) -> dict:
    return {"skipped": len(batch.skipped), "skipped_indices": [k for k, _ in batch.skipped[:50]]}


# ---------------------------------------------------------------------------


def run_staircase(cfg: ExperimentConfig) -> ExperimentResult:
    """Mean root count versus noise amplitude sigma, one raw staircase, and g(lam) for plotting."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    sigma = _grid(cfg, "sigma")
    if np.any(sigma <= 0) or np.any(np.diff(sigma) <= 0):
        raise ConfigError("staircase grid must be positive and increasing")
    p = cfg.params
    batch = run_samples("counts", p, cfg.samples, cfg.seed, sigma**2, cfg.workers)
    counts = np.asarray(batch.values)
    mean, se = mean_and_stderr(counts)
    files = [io.write_csv(out / "staircase.csv", ["sigma", "mean_count", "stderr"], zip(sigma, mean, se))]

    spec0 = spectrum(sample_instance(p, instance_seed(cfg.seed, 0)))
    system = SecularSystem(spec0)
    single = system.count(sigma**2)
    files.append(io.write_csv(out / "staircase_instance.csv", ["sigma", "count"], zip(sigma, single)))

    s = spec0.s
    span = s[-1] - s[0]
    lam = np.linspace(s[0] - 0.5 * span - 0.5, s[-1] + 0.5 * span + 0.5, 4001)
    lam = lam[np.min(np.abs(lam[:, None] - s[None, :]), axis=1) > 1e-9]
    g = np.sum(spec0.s * spec0.t / (lam[:, None] - spec0.s[None, :]) ** 2, axis=1)
    files.append(io.write_csv(out / "secular_lhs.csv", ["lambda", "g"], zip(lam, g)))

    # sigma^2 where the mean count crosses N, by log-linear interpolation
    crossing = None
    above = mean >= p.N
    idx = np.flatnonzero(above[:-1] & ~above[1:])
    if idx.size:
        i = idx[0]
        x0, x1 = math.log(sigma[i] ** 2), math.log(sigma[i + 1] ** 2)
        y0, y1 = mean[i] - p.N, mean[i + 1] - p.N
        crossing = math.exp(x0 + (x1 - x0) * y0 / (y0 - y1))
    summary = {
        "experiment": "staircase",
        "params": p.as_dict(),
        "samples": cfg.samples,
        "first_mean_count": float(mean[0]),
        "last_mean_count": float(mean[-1]),
        "crossing_sigma2": crossing,
        "instance_eigenvalues": s.tolist(),
        **_skips(batch),
    }
    res = ExperimentResult("staircase", summary, files, {"mean": mean, "stderr": se, "single": single})
    return _finish(cfg, res, t0)


# ---------------------------------------------------------------------------


def chi_square(mc_mean, mc_se, expected, pooled_counts, min_count: int = CHI2_MIN_COUNT):
    """Chi-square over bins holding at least ``min_count`` pooled roots."""
    use = (pooled_counts >= min_count) & (mc_se > 0)
    dof = int(use.sum())
    if dof == 0:
        return math.nan, 0
    chi2 = float(np.sum(((mc_mean[use] - expected[use]) / mc_se[use]) ** 2))
    return chi2, dof


def run_density(cfg: ExperimentConfig) -> ExperimentResult:
    """Pooled root histograms against the exact density, one panel per sigma^2."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    s2_list = _grid(cfg, "sigma2")
    if np.any(s2_list <= 0):
        raise ConfigError("density grid values (sigma2) must be positive")
    p = cfg.params
    ctx0 = build_context(p.with_sigma2(float(s2_list[0])), samples=cfg.rho_samples, seed=cfg.seed,
                         workers=cfg.workers, max_sigma2=float(s2_list.max()))
    out.mkdir(parents=True, exist_ok=True)
    ctx0.rho_N.to_csv(out / "rho_N.csv")
    files = [out / "rho_N.csv"]

    batch = run_samples("roots", p, cfg.samples, cfg.seed, tuple(float(v) for v in s2_list), cfg.workers)
    n = len(batch.values)
    panels = []
    summaries = {}
    for j, s2 in enumerate(s2_list):
        ctx = ctx0.with_sigma2(float(s2))
        roots = [v[j] for v in batch.values]
        pooled = np.concatenate(roots)
        counts = np.array([r.size for r in roots])
        lo, hi = float(pooled.min()), float(pooled.max())
        pad = 1e-9 * max(hi - lo, 1.0)
        edges = np.linspace(lo - pad, hi + pad, cfg.bins + 1)
        per = np.stack([np.histogram(r, edges)[0] for r in roots])
        mc_mean, mc_se = mean_and_stderr(per)
        expected = expected_counts_binned(edges, ctx)
        chi2, dof = chi_square(mc_mean, mc_se, expected, per.sum(axis=0))
        width = np.diff(edges)
        files.append(io.write_csv(
            out / f"density_{j}_hist.csv",
            ["lambda_lo", "lambda_hi", "mc_density", "mc_stderr", "expected_density"],
            zip(edges[:-1], edges[1:], mc_mean / width, mc_se / width, expected / width),
        ))
        lam = np.linspace(edges[0], edges[-1], 801)
        lam = lam[lam != 0]
        files.append(io.write_csv(out / f"density_{j}_curve.csv", ["lambda", "density"], zip(lam, density(lam, ctx))))
        total = expected_count(-math.inf, math.inf, ctx)
        summ = CountSummary.from_counts(
            counts,
            lambda_histogram=DensityCurve(0.5 * (edges[1:] + edges[:-1]), mc_mean / width, float(np.mean(counts)),
                                          mc_se / width, edges=edges),
        )
        left, right = limits_at_zero(ctx)
        panel = {
            "sigma2": float(s2),
            **summ.as_dict(),
            "expected_count": total,
            "count_z": (summ.mean_count - total) / summ.stderr if summ.stderr > 0 else math.nan,
            "chi2": chi2,
            "dof": dof,
            "chi2_dof": chi2 / dof if dof else math.nan,
            "density_left_of_zero": left,
            "density_right_of_zero": right,
        }
        panels.append(panel)
        summaries[float(s2)] = summ
    summary = {
        "experiment": "density",
        "params": {"N": p.N, "M": p.M},
        "samples": cfg.samples,
        "valid_samples": n,
        "rho_samples": cfg.rho_samples,
        "panels": panels,
        **_skips(batch),
    }
    res = ExperimentResult("density", summary, files, {"summaries": summaries, "context": ctx0})
    return _finish(cfg, res, t0)


# ---------------------------------------------------------------------------


def _count_sweep(cfg: ExperimentConfig, sigma2s):
    batch = run_samples("counts", cfg.params, cfg.samples, cfg.seed, np.asarray(sigma2s), cfg.workers)
    counts = np.asarray(batch.values, dtype=float)
    mean, se = mean_and_stderr(counts)
    return batch, np.atleast_1d(mean), np.atleast_1d(se)


def run_bulk(cfg: ExperimentConfig) -> ExperimentResult:
    """Extensive count: MC mean count / N at ``delta = 4 gamma / N`` against the bulk limit."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    gammas = _grid(cfg, "gamma")
    if np.any(gammas < 0):
        raise ConfigError("gamma values must be nonnegative")
    p = cfg.params
    sigma2s = [ModelParams.from_gamma(p.N, p.M, g).sigma2 for g in gammas]
    batch, mean, se = _count_sweep(cfg, sigma2s)
    analytic = [asy.bulk_mean_count(asy.BulkParams(p.mu, float(g))) for g in gammas]
    mc, mc_se = mean / p.N, se / p.N
    files = [io.write_csv(out / "bulk.csv", ["gamma", "analytic", "mc", "stderr"], zip(gammas, analytic, mc, mc_se))]
    lam = np.linspace(p.s_minus, p.s_plus, 801)
    for j, g in enumerate(gammas):
        bp = asy.BulkParams(p.mu, float(g))
        files.append(io.write_csv(out / f"bulk_{j}_curve.csv", ["lambda", "density"], zip(lam, asy.bulk_density(lam, bp))))
    rows = []
    for g, s2, a, m, e in zip(gammas, sigma2s, analytic, mc, mc_se):
        rows.append({
            "gamma": float(g), "sigma2": s2, "analytic": a, "mc": float(m), "stderr": float(e),
            "rel_error": abs(m - a) / a if a > 0 else math.nan,
            "large_gamma_asymptote": asy.bulk_large_gamma(g) if g > 0 else None,
        })
    summary = {"experiment": "bulk", "params": {"N": p.N, "M": p.M, "mu": p.mu}, "samples": cfg.samples,
               "rows": rows, **_skips(batch)}
    return _finish(cfg, ExperimentResult("bulk", summary, files, {"rows": rows}), t0)


def run_edge(cfg: ExperimentConfig) -> ExperimentResult:
    """Finite count near the spectral edges: MC at ``delta = 4 omega / (N^{1/3}(s+ - s-))``."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    omegas = _grid(cfg, "omega")
    if np.any(omegas <= 0):
        raise ConfigError("omega values must be positive (the edge count diverges at 0)")
    p = cfg.params
    sigma2s = [ModelParams.from_omega(p.N, p.M, w).sigma2 for w in omegas]
    batch, mean, se = _count_sweep(cfg, sigma2s)
    analytic = [asy.edge_mean_count(asy.EdgeParams(p.mu, float(w))) for w in omegas]
    files = [io.write_csv(out / "edge.csv", ["omega", "analytic", "mc", "stderr"], zip(omegas, analytic, mean, se))]
    zeta = np.linspace(-10.0, 6.0, 801)
    files.append(io.write_csv(out / "edge_density_curve.csv", ["zeta", "density"], zip(zeta, asy.edge_density(zeta))))
    rows = [
        {"omega": float(w), "sigma2": s2, "delta": 0.5 * math.log1p(s2), "analytic": a, "mc": float(m),
         "stderr": float(e), "rel_error": abs(m - a) / a}
        for w, s2, a, m, e in zip(omegas, sigma2s, analytic, mean, se)
    ]
    summary = {"experiment": "edge", "params": {"N": p.N, "M": p.M, "mu": p.mu}, "samples": cfg.samples,
               "rows": rows, **_skips(batch)}
    return _finish(cfg, ExperimentResult("edge", summary, files, {"rows": rows}), t0)


# ---------------------------------------------------------------------------


def empirical_rate(samples, N: int, lp: asy.LdpParams, edges):
    """``-(2/N) ln(p_hat Z)`` per bin, with ``Z = int_{-inf}^{s-} exp(-N Phi / 2)``.

    Normalising by ``Z`` puts the empirical and analytic rates on the same
    additive footing: both vanish at the mode as ``N`` grows.
    """
    counts, _ = np.histogram(samples, edges)
    width = np.diff(edges)
    dens = counts / (len(samples) * width)
    log_z = _log_partition(N, lp)
    with np.errstate(divide="ignore"):
        rate = -(2.0 / N) * (np.log(dens) + log_z)
    return counts, dens, rate


def _log_partition(N: int, lp: asy.LdpParams) -> float:
    star = min(asy.lambda_star(lp, verify=False), lp.s_minus)
    # integrate exp(-N (Phi - Phi_floor)/2) to keep the integrand O(1)
    floor = float(asy.ldp_rate(min(star, lp.s_minus - 1e-9), lp))
    f = lambda x: math.exp(-0.5 * N * (asy.ldp_rate(x, lp) - floor))
    width = 40.0 / math.sqrt(N)
    tol = Tolerance(abs_tol=1e-14, rel_tol=1e-10, max_iter=500)
    total = integrate(f, star - width, min(star + width, lp.s_minus), tol)
    total += integrate(f, -math.inf, star - width, tol)
    if star + width < lp.s_minus:
        total += integrate(f, star + width, lp.s_minus, tol)
    return math.log(total) - 0.5 * N * floor


def rate_comparison(samples, N: int, lp: asy.LdpParams, width: float, window, min_count: int = 25):
    """Compare empirical and analytic rates on ``window`` with bins of ``width``.

    Returns the table rows and the deviation ``max |Phi_hat - Phi| / max Phi``
    over bins in the window holding at least ``min_count`` samples.
    """
    lo, hi = window
    x = np.asarray(samples)
    start = lo - width * math.ceil((lo - x.min()) / width) if x.min() < lo else lo
    edges = np.arange(start, max(hi, x.max()) + width, width)
    counts, dens, rate = empirical_rate(x, N, lp, edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    inside = (edges[:-1] >= lo - 1e-12) & (edges[1:] <= hi + 1e-12) & (edges[1:] <= lp.s_minus)
    use = inside & (counts >= min_count)
    phi = np.full(mid.shape, np.nan)
    ok = mid < lp.s_minus
    phi[ok] = asy.ldp_rate(mid[ok], lp)
    if not np.any(use):
        return edges, counts, rate, phi, math.nan, int(use.sum())
    scale = float(np.max(phi[use]))
    dev = float(np.max(np.abs(rate[use] - phi[use]))) / scale if scale > 0 else math.nan
    return edges, counts, rate, phi, dev, int(use.sum())


def histogram_mode(mid, counts) -> float:
    """Vertex of a parabola fitted to log counts over the bins above half the peak.

    Less noisy than the argmax bin when the top of the histogram is flat.
    """
    mid, counts = np.asarray(mid, float), np.asarray(counts, float)
    top = int(np.argmax(counts))
    keep = counts >= 0.5 * counts[top]
    if keep.sum() < 3:
        return float(mid[top])
    c2, c1, _ = np.polyfit(mid[keep], np.log(counts[keep]), 2)
    if c2 >= 0:
        return float(mid[top])
    return float(-c1 / (2.0 * c2))


def run_ldp(cfg: ExperimentConfig) -> ExperimentResult:
    """Histogram of the smallest multiplier against the large-deviation rate."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    p = cfg.params
    if p.sigma2 <= 0:
        raise ConfigError("ldp needs sigma2 > 0")
    lp = asy.LdpParams(p.mu, p.sigma2)
    batch = run_samples("min", p, cfg.samples, cfg.seed, (p.sigma2,), cfg.workers)
    lam = np.array([v[0][0] for v in batch.values])
    emin = np.array([v[1][0] for v in batch.values]) / p.N
    star = asy.lambda_star(lp)
    window_width = float(cfg.extra.get("window_width", 0.3))
    centre = min(star, lp.s_minus - 0.5 * window_width)
    window = (centre - 0.5 * window_width, centre + 0.5 * window_width)

    fd_edges = np.histogram_bin_edges(lam, bins="fd")
    width = float(cfg.extra.get("bin_width", fd_edges[1] - fd_edges[0]))
    edges, counts, rate, phi, dev, used = rate_comparison(lam, p.N, lp, width, window)
    sens = {}
    for factor in (0.5, 1.5):
        *_, d, u = rate_comparison(lam, p.N, lp, width * factor, window)
        sens[str(factor)] = {"deviation": d, "bins": u}
    mid = 0.5 * (edges[1:] + edges[:-1])
    dens = counts / (len(lam) * np.diff(edges))
    files = [
        io.write_csv(out / "ldp_hist.csv", ["lambda_lo", "lambda_hi", "count", "density"],
                     zip(edges[:-1], edges[1:], counts, dens)),
        io.write_csv(out / "ldp_rate.csv", ["lambda", "empirical_rate", "rate", "count"], zip(mid, rate, phi, counts)),
        io.write_csv(out / "ldp_samples.csv", ["index", "lambda_min", "e_min_per_n"],
                     zip(batch.indices, lam, emin)),
    ]
    mode = histogram_mode(mid, counts)
    summ = CountSummary(float("nan"), 0.0, {}, None, lam, emin)
    summary = {
        "experiment": "ldp",
        "params": p.as_dict(),
        "samples": cfg.samples,
        "valid_samples": int(lam.size),
        "lambda_star": star,
        "typical_min_loss": asy.typical_min_loss(lp),
        "mean_lambda_min": float(lam.mean()),
        "mean_e_min_per_n": float(emin.mean()),
        "mode_lambda_min": mode,
        "mode_offset_bins": abs(mode - star) / width,
        "bin_width": width,
        "window": list(window),
        "rate_deviation": dev,
        "rate_bins_used": used,
        "bin_width_sensitivity": sens,
        **_skips(batch),
    }
    res = ExperimentResult("ldp", summary, files, {"summary": summ, "lambda_min": lam, "e_min": emin})
    return _finish(cfg, res, t0)


def run_minloss(cfg: ExperimentConfig) -> ExperimentResult:
    """MC mean / median of ``E_min / N`` against its typical value."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    p = cfg.params
    s2_list = cfg.grid_array() if cfg.grid is not None else np.array([p.sigma2])
    if np.any(s2_list <= 0):
        raise ConfigError("minloss needs sigma2 > 0")
    batch = run_samples("min", p, cfg.samples, cfg.seed, tuple(float(v) for v in s2_list), cfg.workers)
    lam = np.stack([v[0] for v in batch.values])
    emin = np.stack([v[1] for v in batch.values]) / p.N
    rows = []
    for j, s2 in enumerate(s2_list):
        lp = asy.LdpParams(p.mu, float(s2))
        m, e = mean_and_stderr(emin[:, j])
        rows.append({
            "sigma2": float(s2),
            "typical": asy.typical_min_loss(lp),
            "mc_mean": float(m),
            "mc_stderr": float(e),
            "mc_median": float(np.median(emin[:, j])),
            "lambda_star": asy.lambda_star(lp, verify=False),
            "mc_mean_lambda_min": float(lam[:, j].mean()),
        })
    files = [io.write_csv(out / "minloss.csv", ["sigma2", "typical", "mc_mean", "mc_stderr", "mc_median"],
                          [[r["sigma2"], r["typical"], r["mc_mean"], r["mc_stderr"], r["mc_median"]] for r in rows])]
    summary = {"experiment": "minloss", "params": {"N": p.N, "M": p.M, "mu": p.mu}, "samples": cfg.samples,
               "rows": rows, **_skips(batch)}
    return _finish(cfg, ExperimentResult("minloss", summary, files, {"rows": rows, "e_min": emin}), t0)


RUNNERS = {
    "staircase": run_staircase,
    "density": run_density,
    "bulk": run_bulk,
    "edge": run_edge,
    "ldp": run_ldp,
    "minloss": run_minloss,
}


def run(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg)
