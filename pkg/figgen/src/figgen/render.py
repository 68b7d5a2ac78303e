"""The five figure kinds rendered from harness CSV outputs.

Rendering is read-only over the CSVs and deterministic: a fixed style, a
fixed SVG hash salt, and no timestamps in the image metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import FiggenError, Table, load_table

plt.rcParams["svg.hashsalt"] = "figgen"
plt.rcParams["figure.dpi"] = 120

KINDS = ("total-time-vs-t", "beta-sweep", "epsilon-scaling", "error-vs-l",
         "gamma-noise")


@dataclass
class FigureSpec:
    kind: str
    inputs: list[str]
    out: str
    title: str = ""
    annotate_slope: bool | None = None
    series_column: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "FigureSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise FiggenError(f"unknown figure-spec fields: {sorted(unknown)}")
        spec = cls(**data)
        if spec.kind not in KINDS:
            raise FiggenError(f"kind {spec.kind!r} not one of {KINDS}")
        if not spec.inputs:
            raise FiggenError("inputs: need at least one CSV path")
        return spec


@dataclass
class RenderResult:
    paths: list[Path]
    slopes: dict = field(default_factory=dict)


def fit_loglog(xs, ys) -> float:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = np.isfinite(xs) & np.isfinite(ys)
    if keep.sum() < 3:
        raise FiggenError("slope fit needs at least 3 finite points")
    if np.any(xs[keep] <= 0) or np.any(ys[keep] <= 0):
        raise FiggenError("slope fit needs positive data")
    slope, _ = np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)
    return float(slope)


def _series_groups(table: Table, column: str):
    order = []
    groups = {}
    for row in table.rows:
        key = row.get(column, "")
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    return [(key, groups[key]) for key in order]


def _save(fig, out_stem: str | Path) -> list[Path]:
    out_stem = Path(out_stem)
    out_stem.parent.mkdir(parents=True, exist_ok=True)
    png = out_stem.with_suffix(".png")
    svg = out_stem.with_suffix(".svg")
    fig.savefig(png, metadata={"Software": "figgen"})
    fig.savefig(svg, metadata={"Date": None})
    plt.close(fig)
    return [png, svg]


def _render_total_time(spec: FigureSpec, tables: list[Table]) -> RenderResult:
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for table in tables:
        for key, rows in _series_groups(table, spec.series_column or "alpha"):
            rows = [r for r in rows if r.get("reached") == "true"]
            if not rows:
                continue
            ts = table.floats("t", rows)
            lts = table.floats("l_times_t", rows)
            ax.loglog(ts, lts, "o-", label=f"alpha={key}")
    if not ax.lines:
        raise FiggenError("no reached rows to plot")
    ax.set_xlabel("interaction time t")
    ax.set_ylabel("total simulation time L*t")
    ax.set_title(spec.title or "Total time vs per-interaction time")
    ax.legend()
    return RenderResult(paths=_save(fig, spec.out))


def _render_beta_sweep(spec: FigureSpec, tables: list[Table]) -> RenderResult:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.0, 4.2))
    for table in tables:
        rows = table.reached_rows()
        if not rows:
            raise FiggenError(f"{table.path}: no reached rows")
        betas = table.floats("beta", rows)
        ax1.plot(betas, table.floats("min_l", rows), "o-")
        ax2.plot(betas, table.floats("lambda_tilde", rows), "s-")
    ax1.set_xlabel("inverse temperature beta")
    ax1.set_ylabel("minimal interactions L")
    ax1.set_title("Minimum interactions vs beta")
    ax2.set_xlabel("inverse temperature beta")
    ax2.set_ylabel("rescaled spectral gap")
    ax2.set_title("Spectral gap vs beta")
    fig.suptitle(spec.title or "")
    fig.tight_layout()
    return RenderResult(paths=_save(fig, spec.out))


def _render_epsilon_scaling(spec: FigureSpec, tables: list[Table]) -> RenderResult:
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    slopes = {}
    for table in tables:
        rows = table.reached_rows()
        if len(rows) < 3:
            raise FiggenError(f"{table.path}: need >= 3 reached rows for the fit")
        xs = table.floats("inv_epsilon", rows)
        ys = table.floats("l_times_t", rows)
        label = table.path.stem
        ax.loglog(xs, ys, "o-", label=label)
        if spec.annotate_slope is not False:
            slope = fit_loglog(xs, ys)
            slopes[label] = slope
            ax.annotate(f"slope = {slope:.3f}", xy=(xs[-1], ys[-1]),
                        xytext=(-10, 10), textcoords="offset points",
                        ha="right")
    ax.set_xlabel("1/epsilon")
    ax.set_ylabel("total simulation time L*t")
    ax.set_title(spec.title or "Total time vs target error")
    ax.legend()
    return RenderResult(paths=_save(fig, spec.out), slopes=slopes)


def _render_error_vs_l(spec: FigureSpec, tables: list[Table]) -> RenderResult:
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for table in tables:
        for key, rows in _series_groups(table, spec.series_column or "series"):
            steps = table.floats("step", rows)
            dists = table.floats("mean_distance", rows)
            ax.semilogy(steps, dists, label=key)
    ax.set_xlabel("interactions L")
    ax.set_ylabel("trace distance to target")
    ax.set_title(spec.title or "Error vs interaction count")
    ax.legend()
    return RenderResult(paths=_save(fig, spec.out))


def _render_gamma_noise(spec: FigureSpec, tables: list[Table]) -> RenderResult:
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for table in tables:
        rows = table.reached_rows()
        if not rows:
            raise FiggenError(f"{table.path}: no reached rows")
        ax.plot(table.floats("sigma", rows), table.floats("l_times_t", rows),
                "o-")
    ax.set_xlabel("gap-sample noise sigma")
    ax.set_ylabel("total simulation time L*t")
    ax.set_title(spec.title or "Total time vs eigenvalue-sample noise")
    return RenderResult(paths=_save(fig, spec.out))


_REQUIRED = {
    "total-time-vs-t": ("t", "l_times_t", "alpha", "reached"),
    "beta-sweep": ("beta", "min_l", "lambda_tilde", "reached"),
    "epsilon-scaling": ("inv_epsilon", "l_times_t", "reached"),
    "error-vs-l": ("step", "mean_distance", "series"),
    "gamma-noise": ("sigma", "l_times_t", "reached"),
}

_RENDERERS = {
    "total-time-vs-t": _render_total_time,
    "beta-sweep": _render_beta_sweep,
    "epsilon-scaling": _render_epsilon_scaling,
    "error-vs-l": _render_error_vs_l,
    "gamma-noise": _render_gamma_noise,
}


def render(spec: FigureSpec) -> RenderResult:
    """Render one figure spec to PNG and SVG; returns paths and any slopes."""
    required = _REQUIRED[spec.kind]
    if spec.series_column:
        required = tuple(c for c in required if c != "series") \
            + (spec.series_column,)
    tables = [load_table(p, required=required) for p in spec.inputs]
    return _RENDERERS[spec.kind](spec, tables)
