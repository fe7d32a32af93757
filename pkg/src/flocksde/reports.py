"""Delimited output files with embedded provenance.

Every file starts with '# key=value' comment lines carrying the effective
config (JSON, sorted keys) and seeds, so a run can be reproduced from its own
output.  Floats are written with repr (shortest exact round trip), decimal
point, no locale dependence; rerunning the same config yields byte-identical
numeric columns.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__ as _version
from .ensemble import EnsembleResult, save_result
from .integrate import Trajectory
from .model import SystemState
from .oracles import TheoryBound

__all__ = [
    "write_trajectory_csv",
    "write_ensemble_csv",
    "write_ensemble_json",
    "write_snapshot_csv",
    "write_verify_report",
    "snapshot_filename",
]


def _fmt(value) -> str:
    return repr(float(value))


def _provenance_lines(provenance: dict, kind: str) -> list[str]:
    doc = json.dumps(provenance, sort_keys=True, separators=(",", ":"))
    return [
        f"# flocksde={_version} kind={kind}",
        f"# provenance={doc}",
    ]


def write_trajectory_csv(
    path, traj: Trajectory, provenance: dict, oracle: TheoryBound | None = None
) -> None:
    """Columns: t, v2_centered, dispersion, max_pair_dist, w_t [, oracle_v2]."""
    header = ["t", "v2_centered", "dispersion", "max_pair_dist", "w_t"]
    columns = [traj.times, traj.v2_centered, traj.dispersion, traj.max_pair_dist, traj.w]
    if oracle is not None:
        header.append("oracle_v2")
        columns.append(oracle.values)
    lines = _provenance_lines(provenance, "trajectory")
    lines.append(",".join(header))
    for row in zip(*columns):
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_ensemble_csv(path, result: EnsembleResult) -> None:
    """Columns: t, mean_dispersion, stderr_dispersion, mean_v2, stderr_v2,
    mean_pairdist, diverged_count (cumulative count of trials diverged by t)."""
    lines = _provenance_lines(result.provenance, "ensemble")
    lines.append(
        "t,mean_dispersion,stderr_dispersion,mean_v2,stderr_v2,mean_pairdist,diverged_count"
    )
    for i, t in enumerate(result.times):
        lines.append(
            ",".join(
                [
                    _fmt(t),
                    _fmt(result.mean_dispersion[i]),
                    _fmt(result.stderr_dispersion[i]),
                    _fmt(result.mean_v2[i]),
                    _fmt(result.stderr_v2[i]),
                    _fmt(result.mean_pairdist[i]),
                    str(result.diverged_by(float(t))),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_ensemble_json(path, result: EnsembleResult) -> None:
    save_result(result, path)


def snapshot_filename(t: float) -> str:
    text = f"{t:.6f}".rstrip("0").rstrip(".")
    return f"snapshot_t{text}.csv"


def write_snapshot_csv(path, state: SystemState, provenance: dict) -> None:
    """One row per particle: position components, then velocity components."""
    d = state.dim
    header = [f"x{j}" for j in range(d)] + [f"v{j}" for j in range(d)]
    lines = _provenance_lines({**provenance, "t": state.t}, "snapshot")
    lines.append(",".join(header))
    for i in range(state.n_particles):
        lines.append(",".join(_fmt(v) for v in np.concatenate([state.x[i], state.v[i]])))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_verify_report(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
