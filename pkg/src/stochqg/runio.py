"""Run-directory bookkeeping: manifest plus plot-ready CSV files.

Every CSV float is printed with 17 significant digits so reruns with the same
config and seeds are byte-identical and nothing is lost to formatting.
"""

from __future__ import annotations

import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigurationError


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def ensure_run_dir(path: str | Path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_manifest(out_dir: str | Path, command: str, doc: dict, seeds: dict) -> Path:
    from . import __version__

    path = ensure_run_dir(out_dir) / "manifest.json"
    manifest = {
        "command": command,
        "created": datetime.now(timezone.utc).isoformat(),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "stochqg": __version__,
        },
        "seeds": seeds,
        "config": doc,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_csv(path: str | Path, header: list[str], columns: list[np.ndarray]) -> Path:
    if len(header) != len(columns):
        raise ConfigurationError("CSV header and column counts differ")
    lengths = {len(c) for c in columns}
    if len(lengths) > 1:
        raise ConfigurationError(f"CSV columns have mismatched lengths {sorted(lengths)}")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    nrows = lengths.pop() if lengths else 0
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(nrows):
            fh.write(",".join(_fmt(c[i]) for c in columns) + "\n")
    return p


def write_timeseries_csv(path: str | Path, result) -> Path:
    return write_csv(
        path,
        ["t", "star_norm_sq", "h1_grad_psi1_sq", "h2_grad_psi2_sq", "eta_norm_sq"],
        [
            result.times,
            result.star_norm_sq,
            result.h1_grad_psi1_sq,
            result.h2_grad_psi2_sq,
            result.eta_norm_sq,
        ],
    )


def write_comparison_csv(path: str | Path, rec) -> Path:
    win = rec.functional_window
    if win is None:
        win = np.zeros_like(rec.functional_max_sq)
    return write_csv(
        path,
        ["t", "V", "N_L", "window_int_N_L"],
        [rec.times, rec.v, rec.functional_max_sq, win],
    )


def write_ensemble_csv(path: str | Path, summary) -> Path:
    vq = summary.v_quantiles
    nq = summary.functional_quantiles
    return write_csv(
        path,
        ["t", "q05_V", "q50_V", "q95_V", "q05_NL", "q50_NL", "q95_NL"],
        [summary.times, vq[0], vq[1], vq[2], nq[0], nq[1], nq[2]],
    )


def write_radius_csv(path: str | Path, estimate) -> Path:
    idx = np.arange(len(estimate.r0_samples))
    return write_csv(path, ["path", "R0"], [idx, estimate.r0_samples])


def radius_report_text(estimate) -> str:
    lines = [
        "absorbing-radius estimate",
        "-------------------------",
        f"paths                 {len(estimate.r0_samples)}",
        f"horizon               {_fmt(estimate.horizon)}",
        f"dtau                  {_fmt(estimate.dtau)}",
        f"mean_R0               {_fmt(estimate.mean)}",
        f"se_R0                 {_fmt(estimate.se)}",
        f"mean_R0_sq            {_fmt(float(np.mean(estimate.r0_samples**2)))}",
        f"tail_fraction         {_fmt(estimate.tail_fraction)}",
        f"converged             {_fmt(estimate.converged)}",
        f"assumption_ok         {_fmt(estimate.assumption_ok)}",
        f"deterministic_value   {_fmt(estimate.deterministic_value)}",
    ]
    return "\n".join(lines) + "\n"


def write_text(path: str | Path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return p


def write_keyvalues(path: str | Path, kv: dict) -> Path:
    lines = []
    for key, val in kv.items():
        if isinstance(val, str):
            lines.append(f"{key} = {val}")
        elif val is None:
            lines.append(f"{key} = none")
        else:
            lines.append(f"{key} = {_fmt(val)}")
    return write_text(path, "\n".join(lines) + "\n")
