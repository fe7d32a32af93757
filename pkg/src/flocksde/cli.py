"""Command-line front end.

Subcommands:

* simulate    one trajectory; writes trajectory.csv (+ figure, snapshots)
* ensemble    Monte Carlo over trials; writes ensemble.csv / ensemble.json
* verify      invariant and oracle suite; writes verify_report.json
* thresholds  noise-strength thresholds for a kernel; prints the regime

Configuration comes from a preset (--preset fig1|fig2), a JSON config file
(--config), or built-in defaults; individual flags override either.  The
effective config is echoed into every output file.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 runtime blow-up in simulate.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import config_from_dict, run_ensemble, simulate_trial
from .integrate import BlowUpError, StepScheme
from .metrics import classify_flocking
from .model import (
    CommonMultiplicativeNoise,
    ConstantKernel,
    kernel_bounds,
)
from .oracles import pathwise_v_exact_const, thresholds
from .presets import PRESET_NAMES, preset_config
from .reports import (
    snapshot_filename,
    write_ensemble_csv,
    write_ensemble_json,
    write_snapshot_csv,
    write_trajectory_csv,
    write_verify_report,
)
from .verify import DEFAULT_SEED, run_verification

__all__ = ["main"]


class UsageError(ValueError):
    """Bad flags or config content; maps to exit code 2."""


# ---------------------------------------------------------------------------
# spec strings
# ---------------------------------------------------------------------------


def _parse_kv(text: str, what: str) -> dict:
    out = {}
    if not text:
        return out
    for part in text.split(","):
        if "=" not in part:
            raise UsageError(f"malformed {what} parameter {part!r}; expected key=value")
        key, value = part.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_kernel_spec(text: str) -> dict:
    """'constant[:K=1]' | 'rational[:K=1,c=1,beta=0.25]' | 'singular[:K=1,beta=0.25,cap=1e-6]'."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    params = _parse_kv(rest, "kernel")
    try:
        if kind == "constant":
            return {"kind": "constant", "K": float(params.pop("K", 1.0)), **_no_extra(params, "kernel")}
        if kind == "rational":
            doc = {
                "kind": "rational",
                "K": float(params.pop("K", 1.0)),
                "c": float(params.pop("c", 1.0)),
                "beta": float(params.pop("beta", 0.25)),
            }
            return {**doc, **_no_extra(params, "kernel")}
        if kind == "singular":
            cap = params.pop("cap", "1e-6")
            doc = {
                "kind": "singular",
                "K": float(params.pop("K", 1.0)),
                "beta": float(params.pop("beta", 0.25)),
                "cap_s": None if cap.lower() in {"none", "inf"} else float(cap),
            }
            return {**doc, **_no_extra(params, "kernel")}
    except ValueError as exc:
        raise UsageError(f"bad kernel spec {text!r}: {exc}") from exc
    raise UsageError(f"unknown kernel kind {kind!r}; expected constant | rational | singular")


def parse_noise_spec(text: str) -> dict:
    """'none' | 'common:sigma=0.3' | 'additive:D=4' | 'multiplicative:D=1,ve=0:0'."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    params = _parse_kv(rest, "noise")
    try:
        if kind == "none":
            return {"kind": "none", **_no_extra(params, "noise")}
        if kind == "common":
            return {"kind": "common", "sigma": float(params.pop("sigma")), **_no_extra(params, "noise")}
        if kind == "additive":
            return {"kind": "additive", "D": float(params.pop("D")), **_no_extra(params, "noise")}
        if kind == "multiplicative":
            v_ref = [float(v) for v in params.pop("ve").split(":")]
            return {
                "kind": "multiplicative",
                "D": float(params.pop("D")),
                "v_ref": v_ref,
                **_no_extra(params, "noise"),
            }
    except KeyError as exc:
        raise UsageError(f"noise spec {text!r} is missing parameter {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"bad noise spec {text!r}: {exc}") from exc
    raise UsageError(f"unknown noise kind {kind!r}; expected none | common | additive | multiplicative")


def _no_extra(params: dict, what: str) -> dict:
    if params:
        raise UsageError(f"unknown {what} parameter(s): {', '.join(sorted(params))}")
    return {}


# ---------------------------------------------------------------------------
# effective configuration
# ---------------------------------------------------------------------------


def _default_config() -> dict:
    return {
        "label": "default",
        "model": {
            "kernel": {"kind": "constant", "K": 1.0},
            "noise": {"kind": "common", "sigma": 0.1},
            "n_particles": 5,
            "dim": 2,
            "coupling_scale": 1.0,
        },
        "scheme": "euler_maruyama_ito",
        "dt": 1e-3,
        "t_final": 1.0,
        "output_times": [],
        "n_trials": 100,
        "base_seed": 0,
        "init": {"kind": "uniform_box", "x_low": 0.0, "x_high": 1.0, "v_low": 0.0, "v_high": 1.0},
        "resample_initial": True,
        "n_workers": 1,
        "snapshot_times": None,
    }


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return doc


def _effective_config(args) -> tuple[dict, dict]:
    """Resolve preset/config/defaults, apply flag overrides, return (config, extras)."""
    if getattr(args, "preset", None) and getattr(args, "config", None):
        raise UsageError("--preset and --config are mutually exclusive")
    if getattr(args, "preset", None):
        doc = preset_config(args.preset)
    elif getattr(args, "config", None):
        doc = {**_default_config(), **_load_config_file(args.config)}
    else:
        doc = _default_config()

    extras = {
        "label": doc.pop("label", "custom"),
        "snapshot_times": doc.pop("snapshot_times", None),
    }

    model = doc["model"]
    if args.kernel is not None:
        model["kernel"] = parse_kernel_spec(args.kernel)
    if args.noise is not None:
        model["noise"] = parse_noise_spec(args.noise)
    if args.sigma is not None:
        if model["noise"].get("kind") != "common":
            raise UsageError("--sigma adjusts the common noise model; use --noise to switch models")
        model["noise"]["sigma"] = args.sigma
    if args.coupling is not None:
        model["coupling_scale"] = args.coupling
    if args.n is not None:
        model["n_particles"] = args.n
    if args.dim is not None:
        model["dim"] = args.dim

    grid_stale = False
    if args.dt is not None:
        doc["dt"] = args.dt
        grid_stale = True
    if args.T is not None:
        doc["t_final"] = args.T
        grid_stale = True
    if grid_stale:
        doc["output_times"] = []
        if extras["snapshot_times"]:
            extras["snapshot_times"] = [
                t for t in extras["snapshot_times"] if t <= doc["t_final"] + 1e-12
            ]
    if args.seed is not None:
        doc["base_seed"] = args.seed
    if args.trials is not None:
        doc["n_trials"] = args.trials
    if getattr(args, "scheme", None) is not None:
        doc["scheme"] = args.scheme
    if args.workers is not None:
        doc["n_workers"] = args.workers
    if getattr(args, "fix_initial", False):
        doc["resample_initial"] = False
    if args.init_box is not None:
        parts = [float(v) for v in args.init_box.split(",")]
        if len(parts) == 2:
            xl, xh = parts
            vl, vh = parts
        elif len(parts) == 4:
            xl, xh, vl, vh = parts
        else:
            raise UsageError("--init-box wants LOW,HIGH or XLOW,XHIGH,VLOW,VHIGH")
        doc["init"] = {"kind": "uniform_box", "x_low": xl, "x_high": xh, "v_low": vl, "v_high": vh}
    return doc, extras


def _build_config(doc: dict):
    try:
        return config_from_dict(doc)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def _provenance(command: str, doc: dict, extras: dict) -> dict:
    return {
        "package": "flocksde",
        "version": __version__,
        "command": command,
        "label": extras.get("label", "custom"),
        "config": doc,
    }


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot_states(traj, snapshot_times):
    states = []
    for t_snap in snapshot_times:
        match = [s for s in traj.states if abs(s.t - t_snap) <= 1e-9 * max(1.0, abs(t_snap))]
        if not match:
            raise UsageError(
                f"snapshot time {t_snap} is not on the output grid; add it to output_times"
            )
        states.append(match[0])
    return states


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    doc, extras = _effective_config(args)
    config = _build_config(doc)
    out = _outdir(args)
    provenance = _provenance("simulate", doc, extras)
    try:
        traj = simulate_trial(config, 0)
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return 3

    oracle = None
    if args.oracle:
        model = config.model
        if not isinstance(model.kernel, ConstantKernel) or not isinstance(
            model.noise, CommonMultiplicativeNoise
        ):
            raise UsageError("--oracle needs a constant kernel and common noise")
        oracle = pathwise_v_exact_const(
            float(traj.v2_centered[0]),
            model.n_particles,
            model.noise.sigma,
            model.kernel.K,
            traj.path,
            traj.times,
        )

    write_trajectory_csv(out / "trajectory.csv", traj, provenance, oracle=oracle)
    written = ["trajectory.csv"]

    if extras.get("snapshot_times"):
        states = _snapshot_states(traj, extras["snapshot_times"])
        for state in states:
            name = snapshot_filename(state.t)
            write_snapshot_csv(out / name, state, provenance)
            written.append(name)
        if not args.no_plot:
            from . import plots

            plots.render_snapshots(states, out / "snapshots.png", title=extras["label"])
            written.append("snapshots.png")

    if not args.no_plot:
        from . import plots

        plots.render_trajectory(traj, out / "trajectory.png", title=extras["label"])
        written.append("trajectory.png")

    ratio = traj.dispersion[-1] / traj.dispersion[0] if traj.dispersion[0] > 0 else float("nan")
    print(f"simulate [{extras['label']}]: {traj.n_samples} samples to t={traj.times[-1]:g}, "
          f"dispersion {traj.dispersion[0]:.6g} -> {traj.dispersion[-1]:.6g} (ratio {ratio:.3g})")
    print(f"wrote {', '.join(written)} in {out}")
    return 0


def _cmd_ensemble(args) -> int:
    doc, extras = _effective_config(args)
    config = _build_config(doc)
    out = _outdir(args)
    result = run_ensemble(config)
    result.provenance["command"] = "ensemble"
    result.provenance["label"] = extras.get("label", "custom")

    write_ensemble_csv(out / "ensemble.csv", result)
    write_ensemble_json(out / "ensemble.json", result)
    written = ["ensemble.csv", "ensemble.json"]

    verdict = None
    if not result.empty_aggregate:
        try:
            verdict = classify_flocking(
                result.times,
                result.mean_dispersion,
                result.mean_pairdist,
                n_diverged=result.diverged_count,
            )
        except ValueError:
            verdict = None  # grid too short for the default window

    if extras.get("snapshot_times"):
        traj0 = simulate_trial(config, 0)
        states = _snapshot_states(traj0, extras["snapshot_times"])
        for state in states:
            name = snapshot_filename(state.t)
            write_snapshot_csv(out / name, state, result.provenance)
            written.append(name)
        if not args.no_plot:
            from . import plots

            plots.render_snapshots(states, out / "snapshots.png", title=extras["label"])
            written.append("snapshots.png")

    if not args.no_plot:
        from . import plots

        plots.render_ensemble(result, out / "ensemble.png", title=extras["label"])
        written.append("ensemble.png")

    print(f"ensemble [{extras['label']}]: {result.n_finished}/{result.n_trials} trials finished, "
          f"{result.diverged_count} diverged")
    if result.empty_aggregate:
        print("all trials diverged; aggregates are empty")
    if verdict is not None:
        print(
            "verdict: "
            + json.dumps(
                {
                    "velocity_alignment": verdict.velocity_alignment,
                    "group_forming": verdict.group_forming,
                    "evidence": verdict.evidence,
                },
                sort_keys=True,
            )
        )
    print(f"wrote {', '.join(written)} in {out}")
    return 0


def _cmd_verify(args) -> int:
    report = run_verification(seed=args.seed if args.seed is not None else DEFAULT_SEED,
                              ito_correction=not args.negative_control)
    out = _outdir(args)
    write_verify_report(out / "verify_report.json", report)
    for check in report["checks"]:
        mark = "PASS" if check["passed"] else "FAIL"
        print(f"{mark} {check['name']}: measured={check['measured']:.6g} "
              f"{check['comparator']} {check['bound']:.6g}")
    status = "all checks passed" if report["passed"] else "CHECK FAILURES"
    print(f"verify: {status} (report in {out / 'verify_report.json'})")
    return 0 if report["passed"] else 1


def _cmd_thresholds(args) -> int:
    kernel_doc = parse_kernel_spec(args.kernel) if args.kernel else {"kind": "constant", "K": 1.0}
    from .ensemble import _kernel_from_dict  # reuse the config-file deserializer

    try:
        kernel = _kernel_from_dict(kernel_doc)
        bounds = kernel_bounds(kernel)
        report = thresholds(args.n, bounds)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    print(f"kernel: {kernel_doc}")
    print(f"alpha (sup psi) = {bounds.alpha!r}")
    print(f"psi_star (inf psi) = {bounds.psi_star!r}")
    print(f"sigma_flock_max = {report.sigma_flock_max!r}")
    print(f"sigma_nonflock_min = {report.sigma_nonflock_min!r}")
    if not report.nonflock_applicable:
        print("note: sup psi is infinite, so no noise level certifies non-flocking; "
              "the growth bound does not apply to this kernel")
    if args.sigma is not None:
        regime = {
            "flocking": "flocking regime",
            "non-flocking": "non-flocking regime",
            "indeterminate": "gap/indeterminate",
        }[report.classify(args.sigma)]
        print(f"sigma={args.sigma!r}: {regime}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_run_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file mirroring the ensemble config schema")
    sub.add_argument("--preset", choices=PRESET_NAMES, help="built-in demonstration preset")
    sub.add_argument("--seed", type=int, help="base seed (overrides config)")
    sub.add_argument("--trials", type=int, help="number of Monte Carlo trials")
    sub.add_argument("--dt", type=float, help="integration step")
    sub.add_argument("--T", type=float, dest="T", help="time horizon")
    sub.add_argument("--sigma", type=float, help="common-noise strength")
    sub.add_argument("--kernel", help="kernel spec, e.g. rational:K=1,c=1,beta=0.25")
    sub.add_argument("--noise", help="noise spec, e.g. common:sigma=0.3 or none")
    sub.add_argument("--coupling", type=float, help="coupling scale on the alignment sum")
    sub.add_argument("--n", type=int, help="number of particles")
    sub.add_argument("--dim", type=int, help="space dimension")
    sub.add_argument("--scheme", choices=[s.value for s in StepScheme],
                     help="integration scheme (default from config)")
    sub.add_argument("--workers", type=int, help="parallel trial workers")
    sub.add_argument("--fix-initial", action="store_true",
                     help="use one initial condition for every trial")
    sub.add_argument("--init-box", help="uniform init box LOW,HIGH or XLOW,XHIGH,VLOW,VHIGH")
    sub.add_argument("--out", default="out", help="output directory (default: ./out)")
    sub.add_argument("--no-plot", action="store_true", help="skip PNG rendering")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flocksde",
        description="Stochastic flocking simulations with exact theory oracles.",
    )
    parser.add_argument("--version", action="version", version=f"flocksde {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    sim = subs.add_parser("simulate", help="run one trajectory and emit trajectory.csv")
    _add_run_options(sim)
    sim.add_argument("--oracle", action="store_true",
                     help="add the exact constant-kernel pathwise solution as a column")
    sim.set_defaults(func=_cmd_simulate)

    ens = subs.add_parser("ensemble", help="run a Monte Carlo ensemble and emit ensemble.csv/json")
    _add_run_options(ens)
    ens.set_defaults(func=_cmd_ensemble)

    ver = subs.add_parser("verify", help="run the invariant/oracle suite")
    ver.add_argument("--seed", type=int, help="suite seed (default pinned)")
    ver.add_argument("--out", default="out", help="output directory for verify_report.json")
    ver.add_argument("--negative-control", action="store_true",
                     help="drop the Ito correction; the suite must then fail")
    ver.set_defaults(func=_cmd_verify)

    thr = subs.add_parser("thresholds", help="print flocking / non-flocking noise thresholds")
    thr.add_argument("--kernel", help="kernel spec (default constant:K=1)")
    thr.add_argument("--n", type=int, required=True, help="number of particles")
    thr.add_argument("--sigma", type=float, help="classify this noise strength")
    thr.set_defaults(func=_cmd_thresholds)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
