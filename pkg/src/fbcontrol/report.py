"""Output writers: delimited field dumps, JSON reports, and the report
figures rendered alongside them.

Every file embeds the resolved run config (CSV: a ``#``-prefixed header
line; JSON: a ``config`` key), and nothing time- or host-dependent is
written, so identical config and seed give bitwise-identical outputs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .fields import FieldSet, PolicyField

_PNG_METADATA = {"Software": "fbcontrol"}


def _config_line(config: dict) -> str:
    return "# fbcontrol-config " + json.dumps(config, sort_keys=True)


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_json(path: str | Path, payload: dict, config: dict) -> Path:
    path = Path(path)
    body = {"config": config}
    body.update(payload)
    path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")
    return path


def write_fields_csv(path: str | Path, fields: FieldSet, config: dict,
                     residuals=None) -> Path:
    """One row per (slice, node): t,x,W plus V and the recomputed
    algebraic residual when companion samples are present."""
    path = Path(path)
    has_v = fields[0].companion is not None
    cols = ["t", "x", "W"] + (["V"] if has_v else []) \
        + (["algebraic_residual"] if residuals is not None else [])
    lines = [_config_line(config), ",".join(cols)]
    for i, f in enumerate(fields):
        for k in range(f.nodes.size):
            row = [_fmt(f.time), _fmt(f.nodes[k]), _fmt(f.values[k])]
            if has_v:
                row.append(_fmt(f.companion[k]))
            if residuals is not None:
                row.append(_fmt(residuals[i][k]))
            lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_policy_csv(path: str | Path, policy: PolicyField, config: dict) -> Path:
    path = Path(path)
    lines = [_config_line(config), "t,x,u"]
    controls = np.asarray(policy.control_set, dtype=float)
    for i, t in enumerate(policy.times):
        for k, x in enumerate(policy.nodes):
            lines.append(",".join([_fmt(t), _fmt(x), _fmt(controls[policy.indices[i, k]])]))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_plot_data(path: str | Path, fields: FieldSet, config: dict) -> Path:
    """Wide x-vs-W table (one column per slice) for external plotting."""
    path = Path(path)
    header = ["x"] + [f"W_t{_fmt(f.time)}" for f in fields]
    lines = [_config_line(config), ",".join(header)]
    nodes = fields.nodes
    mat = fields.matrix()
    for k in range(nodes.size):
        lines.append(",".join([_fmt(nodes[k])] + [_fmt(mat[i, k]) for i in range(mat.shape[0])]))
    path.write_text("\n".join(lines) + "\n")
    return path


def _slice_subset(n: int, count: int = 7) -> list[int]:
    if n <= count:
        return list(range(n))
    return sorted({int(round(i)) for i in np.linspace(0, n - 1, count)})


def render_fields_figure(path: str | Path, fields: FieldSet, title: str) -> Path:
    """x-vs-W curves at a handful of evenly spaced slices (plus the
    companion V when present), written as a PNG next to the CSV."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    has_v = fields[0].companion is not None
    fig, axes = plt.subplots(1, 2 if has_v else 1,
                             figsize=(9.0 if has_v else 5.4, 3.6), squeeze=False)
    ax = axes[0][0]
    for i in _slice_subset(len(fields)):
        f = fields[i]
        ax.plot(f.nodes, f.values, lw=1.2, label=f"t={f.time:.3f}")
    ax.set_xlabel("x")
    ax.set_ylabel("W(t, x)")
    ax.set_title(title)
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    if has_v:
        axv = axes[0][1]
        for i in _slice_subset(len(fields)):
            f = fields[i]
            axv.plot(f.nodes, f.companion, lw=1.2, label=f"t={f.time:.3f}")
        axv.set_xlabel("x")
        axv.set_ylabel("V(t, x)")
        axv.set_title("companion (algebraic solution)")
        axv.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def render_discrepancy_figure(path: str | Path, fields_a: FieldSet,
                              fields_b: FieldSet, title: str) -> Path:
    """Per-slice max |A - B| over shared nodes, plus the worst slice's
    nodewise discrepancy."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    nodes = fields_a.nodes
    diffs = []
    for fa, fb in zip(fields_a, fields_b):
        vb = np.interp(nodes, fb.nodes, fb.values)
        diffs.append(np.abs(fa.values - vb))
    diffs = np.stack(diffs)
    per_slice = diffs.max(axis=1)
    worst = int(np.argmax(per_slice))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    ax1.plot(fields_a.times, per_slice, lw=1.2)
    ax1.set_xlabel("t")
    ax1.set_ylabel("max |difference|")
    ax1.set_title(title)
    ax1.grid(alpha=0.3)
    ax2.plot(nodes, diffs[worst], lw=1.2)
    ax2.set_xlabel("x")
    ax2.set_ylabel(f"|difference| at t={fields_a[worst].time:.3f}")
    ax2.set_title("worst slice")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130, metadata=_PNG_METADATA)
    plt.close(fig)
    return path
