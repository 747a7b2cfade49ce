"""Command-line runner: one subcommand per capability, INI configs, JSON/CSV outputs.

Exit codes: 0 success, 1 a verified criterion failed, 2 usage or config error.
Every output file carries the hash of the effective configuration.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import acceptance
from .bubbles import FitError, WeightSystemError, best_match, deficit_report
from .field import BoxGrid, RadialGrid, make_field, sample_bubble
from .flow import exponential_rate_fit, run
from .geometry import brute_force_direction, separate, verify
from .ground_state import decay_report, emden_fowler_residual, shoot
from .reaction import Nonlinearity, check_hypotheses
from .spectral import RadialQ, assemble_Q, constrained_coercivity, spectrum
from .threshold import NoPlateau, bisect_threshold, near_threshold_profile_check

SUBCOMMANDS = ("ground-state", "flow", "fit", "spectrum", "threshold", "separate", "verify")


class ConfigError(ValueError):
    pass


# config ---------------------------------------------------------------

def default_config_text(command: str) -> str:
    name = command.replace("-", "_") + ".ini"
    return resources.files("gsflow").joinpath("configs", name).read_text()


def load_config(command: str, path: str | None) -> tuple:
    """``(ConfigParser, canonical text)``; the shipped example when ``path`` is None."""
    text = default_config_text(command) if path is None else Path(path).read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return cp, canonical_text(cp)


def canonical_text(cp: configparser.ConfigParser) -> str:
    lines = []
    for sec in sorted(cp.sections()):
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {cp[sec][k]}" for k in sorted(cp[sec]))
    return "\n".join(lines) + "\n"


def config_hash(text: str, seed: int) -> str:
    return hashlib.sha256(f"{text}seed={seed}\n".encode()).hexdigest()[:16]


def _get(cp, sec, key, conv=str, default=None):
    if not cp.has_option(sec, key):
        if default is None:
            raise ConfigError(f"missing [{sec}] {key}")
        return default
    raw = cp[sec][key]
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from exc


def _floats(raw: str) -> list:
    return [float(x) for x in raw.replace(",", " ").split()]


def _points(raw: str) -> np.ndarray:
    rows = [r for r in raw.replace("\n", ";").split(";") if r.strip()]
    return np.array([_floats(r) for r in rows])


def _positive(cp, sec, key, default=None, conv=float):
    v = _get(cp, sec, key, conv, default)
    if not v > 0:
        raise ConfigError(f"[{sec}] {key} must be positive, got {v}")
    return v


def nonlinearity_from(cp) -> Nonlinearity:
    a0 = _get(cp, "model", "a0", float, 1.0)
    raw = _get(cp, "model", "terms")
    try:
        terms = [tuple(float(x) for x in item.split(":")) for item in raw.split(";") if item.strip()]
        if any(len(t) != 2 for t in terms):
            raise ValueError("terms are written coefficient:exponent; ...")
        return Nonlinearity(a0, tuple(terms))
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from exc


def dimension_from(cp) -> int:
    n = _get(cp, "model", "dimension", int)
    if n < 1:
        raise ConfigError("[model] dimension must be at least 1")
    return n


def grid_from(cp, n: int):
    kind = _get(cp, "grid", "kind", str, "radial")
    h = _positive(cp, "grid", "h")
    R = _floats(_get(cp, "grid", "R"))
    if any(x <= 0 for x in R):
        raise ConfigError("[grid] R must be positive")
    if kind == "radial":
        return RadialGrid(n, R[0], h)
    if kind == "box":
        return BoxGrid(n, tuple(R) if len(R) > 1 else R[0], h)
    raise ConfigError(f"[grid] kind must be radial or box, got {kind!r}")


def initial_from(cp, p, grid):
    """Initial field from the ``[initial]`` section."""
    kind = _get(cp, "initial", "kind", str, "bubbles")
    scale = _get(cp, "initial", "scale", float, 1.0)
    if kind == "bubbles":
        centers = _points(_get(cp, "initial", "centers", str, "0" if grid.radial else
                               " ".join(["0"] * grid.n)))
        weights = _floats(_get(cp, "initial", "weights", str, " ".join(["1"] * len(centers))))
        u = sample_bubble(p, centers, weights, grid).values
    elif kind == "gaussian":
        width = _positive(cp, "initial", "width")
        r = grid.r if grid.radial else grid.distance(np.zeros(grid.n))
        u = np.exp(-0.5 * (r / width) ** 2)
        u[grid.boundary_mask()] = 0.0
    else:
        raise ConfigError(f"[initial] kind must be bubbles or gaussian, got {kind!r}")
    return make_field(grid, scale * u, check=False)


# outputs --------------------------------------------------------------

class Output:
    def __init__(self, directory: str, chash: str):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = chash
        self.written = []

    def json(self, name: str, payload: dict) -> Path:
        path = self.dir / name
        body = {"config_hash": self.hash, **payload}
        path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
        self.written.append(path)
        return path

    def csv(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(f"# config_hash={self.hash}\n{text}")
        self.written.append(path)
        return path

    def text(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(f"config_hash={self.hash}\n{text}")
        self.written.append(path)
        return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _analytic_1d(nl: Nonlinearity):
    """Closed-form 1D ground state for a single power term, if applicable."""
    if len(nl.terms) != 1:
        return None
    (a, p), = nl.terms
    amp = ((p + 1) * nl.a0 / (2 * a)) ** (1 / (p - 1))
    k = (p - 1) * math.sqrt(nl.a0) / 2
    return lambda r: amp / np.cosh(k * r) ** (2 / (p - 1))


# subcommands ------------------------------------------------------------

def cmd_ground_state(cp, out: Output, seed: int) -> int:
    nl, n = nonlinearity_from(cp), dimension_from(cp)
    hyp = check_hypotheses(nl, n)
    p = shoot(nl, n, _get(cp, "shoot", "r_max", float, 20.0 / nl.decay_rate),
              _get(cp, "shoot", "h", float, 1e-3 / nl.decay_rate))
    L = p.length_scale
    d = decay_report(p, 8 * L, 16 * L)
    report = {"n": n, "nonlinearity": nl.to_dict(), "center_value": p.center_value,
              "energy": p.energy(), "r_reliable": p.r_reliable,
              "max_ode_residual": float(np.max(np.abs(p.ode_residual()))),
              "decay_band": vars(d), "hypotheses": vars(hyp)}
    if n >= 2:
        report["emden_fowler_residual"] = emden_fowler_residual(p)
    exact = _analytic_1d(nl) if n == 1 else None
    if exact is not None:
        report["sup_error_vs_closed_form"] = float(np.max(np.abs(p.xi - exact(p.r))))
    path = out.dir / "profile.csv"
    p.to_csv(path, {"config_hash": out.hash})
    out.written.append(path)
    out.json("report.json", report)
    return 0


def _spectral_ok(p, nl) -> dict:
    """Quick radial non-degeneracy check guarding the rate analysis."""
    g = RadialGrid(p.n, p.r_max, 1e-2 * p.length_scale)
    rep = spectrum(RadialQ(p, nl, g), k=p.n + 3, sectors=(0, 1), identity_trials=5)
    s0, s1 = rep.sectors[0], rep.sectors.get(1, [0.0])
    ok = sum(x < -rep.kernel_tol for x in s0) == 1 and abs(s1[0]) <= rep.kernel_tol
    return {"nondegenerate": bool(ok), "l0": s0[:3], "l1": s1[:3], "kernel_tol": rep.kernel_tol}


def cmd_flow(cp, out: Output, seed: int) -> int:
    nl, n = nonlinearity_from(cp), dimension_from(cp)
    p = shoot(nl, n)
    grid = grid_from(cp, n)
    u0 = initial_from(cp, p, grid)
    T, dt = _positive(cp, "flow", "T"), _positive(cp, "flow", "dt")
    every = _get(cp, "flow", "snapshot_every", int, 100)
    M = _get(cp, "fit", "M", int, 1)
    s = run(u0, nl, T, dt, sample_every=_get(cp, "flow", "sample_every", int, 1),
            snapshot_every=every, conv_tol=_positive(cp, "flow", "conv_tol", 1e-6),
            stop_on_converged=False)
    out.csv("log.csv", s.log_csv())
    fits = []
    times = np.asarray(s.times)
    for t, values in s.snapshots:
        u = make_field(grid, values, check=False)
        k = int(np.argmin(np.abs(times - t)))
        rate = math.sqrt(s.dissipation[k]) if k > 0 else math.nan
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit = best_match(u, p, M, seed=seed)
            entry = {"t": t, **fit.to_dict()}
            if k > 0:
                entry["deficit_report"] = deficit_report(u, fit, nl, rate).to_dict()
        except (FitError, WeightSystemError, ValueError) as exc:
            entry = {"t": t, "error": f"{type(exc).__name__}: {exc}"}
        fits.append(entry)
    out.json("fits.json", {"fits": fits})

    summary = {"event": s.event.value, "event_time": s.event_time, "t_end": s.t,
               "J_end": s.J[-1], "steps": s.steps}
    guard = _spectral_ok(p, nl)
    summary["spectral_guard"] = guard
    deficit = np.asarray(s.J) - M * p.energy()
    tail = (times >= 0.5 * times[-1]) & (deficit > 0)
    if not guard["nondegenerate"]:
        summary["rate_fit"] = "withheld: spectral non-degeneracy check failed"
    elif tail.sum() >= 2:
        summary["rate_fit"] = vars(exponential_rate_fit(times[tail], deficit[tail]))
    else:
        summary["rate_fit"] = "not available: deficit not positive over the tail"
    out.json("summary.json", summary)
    return 0


def cmd_fit(cp, out: Output, seed: int) -> int:
    nl, n = nonlinearity_from(cp), dimension_from(cp)
    p = shoot(nl, n)
    grid = grid_from(cp, n)
    u = initial_from(cp, p, grid)
    fit = best_match(u, p, _get(cp, "fit", "M", int, 1), seed=seed)
    out.json("fit.json", fit.to_dict())
    return 0


def cmd_spectrum(cp, out: Output, seed: int) -> int:
    nl, n = nonlinearity_from(cp), dimension_from(cp)
    p = shoot(nl, n)
    opQ = assemble_Q(p, nl, grid_from(cp, n))
    rep = spectrum(opQ, k=_get(cp, "spectrum", "k", int, n + 3), seed=seed)
    trials = _get(cp, "spectrum", "trials", int, 100)
    coer = constrained_coercivity(opQ, trials=trials, seed=seed) if trials else None
    payload = rep.to_dict()
    payload["coercivity_constant"] = coer.constant if coer else None
    payload["coercivity"] = vars(coer) if coer else None
    out.json("spectrum.json", payload)
    return 0


def cmd_threshold(cp, out: Output, seed: int) -> int:
    nl, n = nonlinearity_from(cp), dimension_from(cp)
    p = shoot(nl, n)
    grid = grid_from(cp, n)
    u0 = initial_from(cp, p, grid)
    res = bisect_threshold(u0, nl, tuple(_floats(_get(cp, "threshold", "bracket", str, "0.5 2"))),
                           _positive(cp, "threshold", "tol_alpha", 1e-3),
                           _positive(cp, "threshold", "T", 20.0),
                           _positive(cp, "threshold", "dt", 1e-2))
    payload = res.to_dict()
    try:
        payload["profile_check"] = near_threshold_profile_check(res, p).to_dict()
    except (NoPlateau, FitError) as exc:
        payload["profile_check"] = f"{type(exc).__name__}: {exc}"
    out.json("threshold.json", payload)
    out.csv("near_threshold_log.csv", res.near_threshold_run.log_csv())
    return 0


def cmd_separate(cp, out: Output, seed: int) -> int:
    if cp.has_option("separate", "points"):
        P = _points(cp["separate"]["points"])
    else:
        M, n = _get(cp, "separate", "M", int), _get(cp, "separate", "n", int)
        P = np.random.default_rng(seed).normal(size=(M, n))
    cert = separate(P)
    o = brute_force_direction(P, _get(cp, "separate", "oracle_samples", int, 10_000), seed=seed)
    payload = cert.to_dict()
    payload["verified"] = verify(cert)
    payload["oracle_ratio"] = o.ratio
    out.json("certificate.json", payload)
    return 0 if payload["verified"] else 1


def cmd_verify(cp, out: Output, seed: int, threads: int = 1) -> int:
    raw = _get(cp, "verify", "criteria", str, "")
    try:
        numbers = [int(x) for x in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"[verify] criteria: {exc}") from exc
    if not numbers:
        raise ConfigError("[verify] criteria is empty")
    try:
        results = acceptance.run_all(numbers, threads=threads)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    table = acceptance.summary_table(results)
    print(table)
    out.text("summary.txt", table + "\n")
    out.json("verify.json", {"criteria": [r.to_dict(timing=False) for r in results],
                             "failed": [r.name for r in results if not r.passed]})
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {"ground-state": cmd_ground_state, "flow": cmd_flow, "fit": cmd_fit,
            "spectrum": cmd_spectrum, "threshold": cmd_threshold, "separate": cmd_separate,
            "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gsflow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file; defaults to the shipped example")
        sp.add_argument("--out", default=f"out/{name}", help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="seed for randomised steps")
        sp.add_argument("--threads", type=int, default=1, help="worker threads")
        sp.add_argument("--print-config", action="store_true",
                        help="print the effective config and exit")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        ap.error("--seed must be an unsigned 64-bit integer")
    if args.threads < 1:
        ap.error("--threads must be at least 1")
    try:
        cp, text = load_config(args.command, args.config)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.print_config:
        print(text, end="")
        return 0
    _set_threads(args.threads)
    out = Output(args.out, config_hash(text, args.seed))
    (out.dir / "config.ini").write_text(text)
    fn = COMMANDS[args.command]
    try:
        if args.command == "verify":
            code = fn(cp, out, args.seed, args.threads)
        else:
            code = fn(cp, out, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # invalid model or grid parameters surface as ValueError from the library
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return 2
    for path in out.written:
        print(path)
    return code


def _set_threads(threads: int) -> None:
    import numba

    # the kernels are serial; pick a layer that needs no external runtime
    numba.config.THREADING_LAYER = "workqueue"
    numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


if __name__ == "__main__":
    sys.exit(main())
