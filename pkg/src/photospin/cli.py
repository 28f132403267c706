"""Command-line front end: spectra, failure budgets, parameter scans and oracle checks.

Every subcommand writes CSV files (comma separated, header row, ``#``
metadata lines on top) plus ``manifest.json`` listing each emitted file
with its SHA-256 digest. Outputs contain no timestamps, so the same inputs
always produce byte-identical files.

Examples::

    photospin spectrum --preset strong --out data/strong
    photospin budget --preset st --out data/st
    photospin scan --preset weak --scan t_c=50ueV,150ueV --out data/scan
    photospin scan --preset weak --zip --scan tc=50ueV,150ueV \
        --scan eps_ep=-35ueV,-1meV --scan eps_final=250ueV,1.072meV
    photospin validate --preset weak
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .lossmodels import bright_content_along, dephasing_profiles, survival_profile
from .oracle import landau_zener_oracle, propagate, transfer_fidelity
from .params import (
    DEVICE_KEYS,
    PROTOCOL_KEYS,
    ConfigError,
    DeviceParams,
    ProtocolConfig,
    SINGLE_SPIN,
    _parse_value,
    load_config,
    load_preset,
    normalize_protocol,
    parse_quantity,
)
from .protocol import PSI1, PSI2, budget_report, run_protocol, spectrum_trace
from .rabi import rabi_propagate, rwa_hamiltonian
from .spectra import TRACE_COLUMNS, trace_rows
from .sweep import inverse_speed_profile, landau_zener

# short flag names accepted in --scan specs
SCAN_ALIASES = {"tc": "t_c", "tdd": "t_dd", "epsdd": "eps_dd", "plz": "p_lz"}

BUDGET_COLUMNS = ("p_lz", "p_rec_psi1", "p_rec_psi2", "p_deph", "p_rabi_leak", "p_rabi_fail",
                  "p_success", "speed_meV_per_ns", "transfer_time_ns", "eps_ep_ueV")
SWEEP_COLUMNS = ("eps_ueV", "branch", "inverse_speed_ns_per_meV")
RECOMBINATION_COLUMNS = ("t_ns", "eps_ueV", "bc_psi1", "bc_psi2", "survival_psi1", "survival_psi2")
VALIDATE_COLUMNS = ("check", "value", "threshold", "passed")


class UsageError(Exception):
    """Bad command-line input; reported with exit status 2."""


@dataclass
class RunManifest:
    subcommand: str
    config: str
    out_dir: str
    files: dict = field(default_factory=dict)  # name -> sha256

    def add(self, path: Path):
        self.files[path.name] = _sha256(path)

    def verify(self) -> bool:
        out = Path(self.out_dir)
        return all((out / n).exists() and _sha256(out / n) == h for n, h in self.files.items())

    def write(self) -> Path:
        path = Path(self.out_dir) / "manifest.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, columns, rows, meta: dict) -> Path:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Parse a file written by :func:`write_csv` into (metadata, header, rows)."""
    meta, body = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].partition(":")
            meta[k.strip()] = v.strip()
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


# ---------------------------------------------------------------------------
# argument handling


def _nonempty(text: str) -> str:
    if not text.strip():
        raise argparse.ArgumentTypeError("value must not be empty")
    return text


def _energy(text: str) -> float:
    try:
        return parse_quantity(_nonempty(text), "energy", "flag")
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _probability(text: str) -> float:
    try:
        return parse_quantity(_nonempty(text), "number", "flag")
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common(sub: argparse.ArgumentParser):
    src = sub.add_mutually_exclusive_group()
    src.add_argument("--config", help="config file (key = value lines)")
    src.add_argument("--preset", help="bundled config: strong, weak or st")
    sub.add_argument("--out", default=".", help="output directory (created if missing)")
    sub.add_argument("--protocol", type=_nonempty, help="single-spin or singlet-triplet")
    sub.add_argument("--tc", type=_energy, help="OAQD-GDQD tunnel coupling, e.g. 150ueV")
    sub.add_argument("--tdd", type=_energy, help="inter-dot tunnel coupling, e.g. 50ueV")
    sub.add_argument("--epsdd", type=_energy, help="double-dot detuning, e.g. -2.03meV")
    sub.add_argument("--plz", type=_probability, help="allowed Landau-Zener probability")
    sub.add_argument("--grid-start", type=_energy, help="first detuning of the grid")
    sub.add_argument("--grid-stop", type=_energy, help="last detuning of the grid")
    sub.add_argument("--grid-step", type=_energy, help="grid spacing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photospin", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("spectrum", "branch energies, bright content and vertical polarization over the grid"),
        ("budget", "full protocol run and failure budget"),
        ("scan", "budgets over a parameter grid (long-format CSV)"),
        ("validate", "brute-force propagation cross-checks"),
    ):
        sub = subs.add_parser(name, help=text, description=text)
        _common(sub)
        if name == "scan":
            sub.add_argument("--scan", action="append", required=True, metavar="KEY=V1,V2,...",
                             help="swept parameter with its values; repeat for a product grid")
            sub.add_argument("--zip", action="store_true",
                             help="pair the i-th values of every --scan instead of taking the product")
            sub.add_argument("--jobs", type=int, default=1, help="worker processes")
    return parser


def load_inputs(args) -> tuple[DeviceParams, ProtocolConfig, str]:
    if args.config:
        p, cfg = load_config(args.config)
        source = str(args.config)
    elif args.preset:
        p, cfg = load_preset(args.preset)
        source = f"preset:{args.preset}"
    else:
        p, cfg = DeviceParams().validate(), ProtocolConfig().validate()
        source = "defaults"
    dev = {"t_c": args.tc, "t_dd": args.tdd, "eps_dd": args.epsdd}
    proto = {"p_lz": args.plz, "grid_start": args.grid_start, "grid_stop": args.grid_stop,
             "grid_step": args.grid_step}
    if args.protocol is not None:
        proto["protocol"] = normalize_protocol(args.protocol)
    p = dataclasses.replace(p, **{k: v for k, v in dev.items() if v is not None}).validate()
    cfg = dataclasses.replace(cfg, **{k: v for k, v in proto.items() if v is not None}).validate()
    return p, cfg, source


def parse_scan(specs) -> list[tuple[str, list]]:
    """``["t_c=50ueV,150ueV"]`` -> ``[("t_c", [50.0, 150.0])]``."""
    if not specs:
        raise UsageError("empty scan specification")
    out = []
    for spec in specs:
        key, sep, values = spec.partition("=")
        key = SCAN_ALIASES.get(key.strip(), key.strip())
        items = [v for v in (s.strip() for s in values.split(",")) if v]
        if not sep or not key or not items:
            raise UsageError(f"scan spec {spec!r} must look like KEY=V1,V2,...")
        if key in DEVICE_KEYS:
            kind = DEVICE_KEYS[key]
        elif key in PROTOCOL_KEYS and key != "protocol":
            kind = PROTOCOL_KEYS[key]
        else:
            raise UsageError(f"cannot scan unknown parameter {key!r}")
        out.append((key, [_parse_value(key, kind, v) for v in items]))
    return out


# ---------------------------------------------------------------------------
# subcommands


def _meta(args, source, p, cfg) -> dict:
    return {"photospin": __version__, "command": args.command, "config": source,
            "protocol": cfg.kind, "t_c_ueV": p.t_c, "p_lz": cfg.p_lz}


def cmd_spectrum(args, p, cfg, source, manifest: RunManifest):
    trace = spectrum_trace(p, cfg)
    meta = _meta(args, source, p, cfg) | {"grid": f"{cfg.grid_start}:{cfg.grid_stop}:{cfg.grid_step} ueV"}
    path = write_csv(Path(args.out) / "spectrum.csv", TRACE_COLUMNS, trace_rows(trace), meta)
    manifest.add(path)
    print(f"wrote {path} ({trace.n_branches} branches x {trace.grid.size} nodes)")


def budget_values(run) -> dict:
    b = run.budget
    return {
        "p_lz": b.p_lz, "p_rec_psi1": b.p_rec[0], "p_rec_psi2": b.p_rec[1], "p_deph": b.p_deph,
        "p_rabi_leak": b.p_rabi_leak, "p_rabi_fail": b.p_rabi_fail, "p_success": b.p_success,
        "speed_meV_per_ns": run.schedule.speed, "transfer_time_ns": run.schedule.transfer_time,
        "eps_ep_ueV": run.eps_ep,
    }


def cmd_budget(args, p, cfg, source, manifest: RunManifest):
    run = run_protocol(p, cfg)
    out = Path(args.out)
    meta = _meta(args, source, p, cfg)
    report = budget_report(run)
    (out / "budget.txt").write_text(report, encoding="utf-8")
    manifest.add(out / "budget.txt")
    vals = budget_values(run)
    manifest.add(write_csv(out / "budget.csv", BUDGET_COLUMNS, [[vals[c] for c in BUDGET_COLUMNS]], meta))

    tr = run.trace
    names = (PSI1, PSI2) if cfg.kind == SINGLE_SPIN else ("T+", "S", "T0")
    rows = []
    for name in names:
        inv = inverse_speed_profile(tr, name, cfg.p_lz)
        rows += [(e, name, x) for e, x in zip(tr.grid, inv)]
    manifest.add(write_csv(out / "sweep_speed.csv", SWEEP_COLUMNS, rows, meta))

    traj = run.trajectory
    bc1, bc2 = (bright_content_along(traj, w) for w in (PSI1, PSI2))
    s1, s2 = (survival_profile(traj, w, p.tau) for w in (PSI1, PSI2))
    manifest.add(write_csv(out / "recombination.csv", RECOMBINATION_COLUMNS,
                           zip(traj.t, traj.eps, bc1, bc2, s1, s2), meta))

    prof = dephasing_profiles(traj, p)
    cols = ("t_ns", "eps_ueV") + tuple(f"coherence_{k}" for k in prof)
    manifest.add(write_csv(out / "dephasing.csv", cols,
                           zip(traj.t, traj.eps, *prof.values()), meta))
    print(report, end="")


def _scan_point(payload):
    p, cfg, changes = payload
    dev = {k: v for k, v in changes.items() if k in DeviceParams.__dataclass_fields__}
    proto = {k: v for k, v in changes.items() if k not in dev}
    p = dataclasses.replace(p, **dev).validate()
    cfg = dataclasses.replace(cfg, **proto).validate()
    return budget_values(run_protocol(p, cfg))


def cmd_scan(args, p, cfg, source, manifest: RunManifest):
    axes = parse_scan(args.scan)
    keys = [k for k, _ in axes]
    values = [v for _, v in axes]
    if args.zip:
        if len({len(v) for v in values}) != 1:
            raise UsageError("--zip needs the same number of values for every --scan")
        combos = zip(*values)
    else:
        combos = itertools.product(*values)
    points = [dict(zip(keys, combo)) for combo in combos]
    payloads = [(p, cfg, pt) for pt in points]
    if args.jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_scan_point, payloads))
    else:
        results = [_scan_point(x) for x in payloads]
    rows = []
    for i, (pt, res) in enumerate(zip(points, results)):
        for q in BUDGET_COLUMNS:
            rows.append((i, *pt.values(), q, res[q]))
    cols = ("point", *keys, "quantity", "value")
    meta = _meta(args, source, p, cfg) | {"scan": "; ".join(args.scan)}
    path = write_csv(Path(args.out) / "scan.csv", cols, rows, meta)
    manifest.add(path)
    for pt, res in zip(points, results):
        label = ", ".join(f"{k}={v!r}" for k, v in pt.items())
        print(f"{label}: P_success = {100 * res['p_success']:.3f}%")


def validation_checks(p, cfg, run=None) -> list[tuple]:
    """Oracle cross-checks as ``(name, value, threshold, passed)`` rows."""
    rows = []
    gap = 20.0
    for target in (0.01, 0.1, 0.5):
        v = np.pi * gap**2 / (2 * p.hbar * -np.log(target))
        exact = landau_zener(gap, v, p.hbar)
        oracle = landau_zener_oracle(gap, v, hbar=p.hbar)
        err = abs(oracle - exact) / exact
        rows.append((f"landau_zener_rel_error_P{target}", err, 0.02, err <= 0.02))
    run = run_protocol(p, cfg) if run is None else run
    for which in (PSI1, PSI2):
        f = transfer_fidelity(run, which)
        rows.append((f"transfer_fidelity_{which}", f, 0.98, f >= 0.98))
    if run.pulse is not None:
        H = rwa_hamiltonian(run.pulse)
        T = run.pulse.t_rabi
        t = np.linspace(0.0, T, 201)
        res = propagate(lambda _t: H, np.array([0, 1, 0], complex), t, p.hbar)
        exact = rabi_propagate(run.pulse).unitary[:, 1]
        err = float(np.max(np.abs(res.psi - exact)))
        rows.append(("rabi_propagator_max_error", err, 1e-8, err <= 1e-8))
    return rows


def cmd_validate(args, p, cfg, source, manifest: RunManifest):
    rows = validation_checks(p, cfg)
    path = write_csv(Path(args.out) / "validate.csv", VALIDATE_COLUMNS, rows,
                     _meta(args, source, p, cfg))
    manifest.add(path)
    for name, value, thr, ok in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name} = {value:.6g} (threshold {thr:g})")
    return 0 if all(r[3] for r in rows) else 1


COMMANDS = {"spectrum": cmd_spectrum, "budget": cmd_budget, "scan": cmd_scan, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        p, cfg, source = load_inputs(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(args.command, source, str(out))
        status = COMMANDS[args.command](args, p, cfg, source, manifest) or 0
        manifest.write()
    except UsageError as exc:
        parser.error(str(exc))
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"photospin: error: {exc}", file=sys.stderr)
        return 1
    return status


if __name__ == "__main__":
    sys.exit(main())
