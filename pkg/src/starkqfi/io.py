"""Result files: CSV tables, JSON summaries and standalone plot scripts."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write rows with full-precision floats and ``\\n`` line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_trajectory(path: Path, t, states: np.ndarray, energies, amplitude_indices: Sequence[int],
                     labels: Sequence[str]) -> Path:
    """CSV of selected amplitudes with the norm and energy at each time."""
    header = ["t"]
    for lab in labels:
        header += [f"re_{lab}", f"im_{lab}"]
    header += ["norm", "energy"]
    rows = []
    for k, tk in enumerate(t):
        row = [float(tk)]
        for i in amplitude_indices:
            row += [float(states[k, i].real), float(states[k, i].imag)]
        row += [float(np.linalg.norm(states[k])), float(energies[k])]
        rows.append(row)
    return write_csv(path, header, rows)


_PLOT_HEAD = '''#!/usr/bin/env python3
"""Regenerate {title} from {csv}. Requires matplotlib."""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
rows = list(csv.DictReader(open(here / "{csv}")))
'''

PLOT_BODIES = {
    "qfi_time": '''
series = defaultdict(list)
for r in rows:
    series[(float(r["h"]), float(r["U"]))].append((float(r["t"]), float(r["qfi_over_t2"])))
hs = sorted({k[0] for k in series})
fig, axes = plt.subplots(len(hs), 1, figsize=(6, 3 * len(hs)), squeeze=False)
for ax, h in zip(axes[:, 0], hs):
    for (hh, U), pts in sorted(series.items()):
        if hh != h:
            continue
        pts = [p for p in pts if p[0] > 0]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=f"U/J={U:g}")
    ax.set_title(f"h/J={h:g}")
    ax.set_xlabel("Jt")
    ax.set_ylabel("F_Q / t^2")
    ax.legend()
fig.tight_layout()
fig.savefig(here / "qfi_time.png", dpi=150)
''',
    "scaling": '''
xs = [float(r["x"]) for r in rows if r["plateau"] not in ("", "nan")]
ys = [float(r["plateau"]) for r in rows if r["plateau"] not in ("", "nan")]
fig, ax = plt.subplots(figsize=(5, 4))
ax.loglog(xs, ys, "o-")
ax.set_xlabel(rows[0]["variable"])
ax.set_ylabel("F_Q / t^2")
fig.tight_layout()
fig.savefig(here / "scaling.png", dpi=150)
''',
    "critical_point": '''
fig, ax = plt.subplots(figsize=(5, 4))
ax.semilogx([float(r["h"]) for r in rows], [float(r["plateau"]) for r in rows], "o-")
ax.set_xlabel("h/J")
ax.set_ylabel("F_Q / t^2")
fig.tight_layout()
fig.savefig(here / "critical_point.png", dpi=150)
''',
    "resonance": '''
import numpy as np
U = sorted({float(r["U"]) for r in rows})
h = sorted({float(r["h"]) for r in rows})
P = np.full((len(U), len(h)), np.nan)
A = np.full_like(P, np.nan)
for r in rows:
    i, j = U.index(float(r["U"])), h.index(float(r["h"]))
    P[i, j] = float(r["plateau"])
    A[i, j] = float(r["A_r"])
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for ax, M, name in zip(axes, (P, A), ("F_Q / t^2", "A_r")):
    im = ax.pcolormesh(h, U, M, shading="nearest")
    for m, c in zip((1, 2, 3, 4), ("tab:blue", "tab:orange", "tab:green", "tab:red")):
        ax.plot(h, [m * x for x in h], color=c, lw=1)
    ax.set_ylim(min(U), max(U))
    ax.set_xlabel("h/J")
    ax.set_ylabel("U/J")
    fig.colorbar(im, ax=ax, label=name)
fig.tight_layout()
fig.savefig(here / "resonance.png", dpi=150)
''',
    "occupancy": '''
import numpy as np
runs = defaultdict(list)
for r in rows:
    runs[(float(r["U"]), float(r["h"]))].append(r)
fig, axes = plt.subplots(1, len(runs) + 1, figsize=(4 * (len(runs) + 1), 3.5))
for ax, ((U, h), rs) in zip(axes, sorted(runs.items())):
    t = sorted({float(r["t"]) for r in rs})
    L = max(int(r["l"]) for r in rs) + 1
    M = np.zeros((len(t), L))
    for r in rs:
        M[t.index(float(r["t"])), int(r["l"])] = float(r["N_l"])
    ax.pcolormesh(range(L), t, M, shading="nearest")
    ax.set_title(f"U/J={U:g}, h/J={h:g}")
    ax.set_xlabel("site l")
    ax.set_ylabel("Jt")
    axes[-1].plot(t, M.sum(axis=1), label=f"U/J={U:g}")
axes[-1].set_xlabel("Jt")
axes[-1].set_ylabel("sum_l N_l")
axes[-1].legend()
fig.tight_layout()
fig.savefig(here / "occupancy.png", dpi=150)
''',
}


def write_plot_script(out_dir: Path, kind: str, csv_name: str, title: str) -> Path:
    path = Path(out_dir) / f"plot_{kind}.py"
    path.write_text(_PLOT_HEAD.format(title=title, csv=csv_name) + PLOT_BODIES[kind])
    return path
