"""Command-line surface: spectrum, reduce, classify, check-symbol, probe-loss,
and batch sweeps with order-stable JSON-lines output.

Exit codes: 0 = decided/success, 2 = undetermined verdict, 1 = error.  All
reports are deterministic for identical inputs and seeds (sorted keys, repr
floats).
"""

from __future__ import annotations

import argparse
import csv as _csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import classifier, expr_parser, reduction_engine, spectral_core, symbol_lab
from .errors import GrushinLabError
from .operator_poly import CoefficientModel, TransversalData

_EPS_FLOOR = 100 * np.finfo(float).eps


@dataclass
class RunConfig:
    command: str
    output: str | None = None
    fmt: str = "json"
    grid_n: int | None = None
    tol: float | None = None
    jobs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.tol is not None and self.tol < _EPS_FLOOR:
            raise GrushinLabError(
                f"tolerance override {self.tol} below {_EPS_FLOOR:.2e}")
        if self.jobs < 1:
            raise GrushinLabError("parallelism must be >= 1")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for Undetermined
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        # let values like "-3,0,2" (beta lists, complex pairs) pass as values
        import re
        self._negative_number_matcher = re.compile(r"^-[0-9.,/eE+-]+$")


def _complex_arg(text: str) -> complex:
    parts = text.split(",")
    if len(parts) == 1:
        return complex(float(parts[0]), 0.0)
    if len(parts) == 2:
        return complex(float(parts[0]), float(parts[1]))
    raise argparse.ArgumentTypeError("expected RE or RE,IM")


def _fraction_list(text: str) -> list[Fraction]:
    return [Fraction(part.strip()) for part in text.split(",")]


def _dump(payload, cfg: RunConfig) -> str:
    if cfg.fmt == "csv":
        return _to_csv(payload)
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def _flatten(prefix: str, value, out: dict):
    if isinstance(value, dict):
        for k in sorted(value):
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], out)
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _flatten(f"{prefix}[{i}]", item, out)
    else:
        out[prefix] = value


def _to_csv(payload) -> str:
    rows = payload if isinstance(payload, list) else [payload]
    flats = []
    keys: list[str] = []
    for row in rows:
        flat: dict = {}
        _flatten("", row, flat)
        flats.append(flat)
        for k in flat:
            if k not in keys:
                keys.append(k)
    buf = io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(keys)
    for flat in flats:
        writer.writerow([flat.get(k, "") for k in keys])
    return buf.getvalue()


def _emit(text: str, cfg: RunConfig) -> None:
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _model_from_doc(doc: dict) -> CoefficientModel:
    model = CoefficientModel.from_json(doc)
    tr = doc.get("transversal")
    if tr:
        dim = int(tr["dim"])
        a_fn = expr_parser.compile_symbol(tr["a"], dim)
        b1_fn = expr_parser.compile_symbol(tr["b1"], dim)
        data = TransversalData(
            dim=dim, x0=tuple(float(v) for v in tr["x0"]),
            xi0=tuple(float(v) for v in tr["xi0"]),
            a_fn=lambda x, xi, _f=a_fn: _f(x, xi),
            b1_fn=lambda x, xi, _f=b1_fn: _f(x, xi))
        model = CoefficientModel(
            h=model.h, a_taylor=model.a_taylor, b1_taylor=model.b1_taylor,
            xi_norm=model.xi_norm, base_point=model.base_point,
            transversal=data)
    return model


# ---------------------------------------------------------------------------
# command payloads (shared by direct dispatch and sweep rows)

def run_spectrum(args: dict, cfg: RunConfig) -> tuple[dict, int]:
    n = cfg.grid_n or int(args.get("grid_n", 0)) or spectral_core.DEFAULT_N
    count = int(args.get("count", 4))
    spec = spectral_core.OscillatorSpec.auto(
        int(args["h"]), float(args["c2"]), complex(args["c1"]),
        count=count, n=n)
    if args.get("grid_t"):
        spec = spectral_core.OscillatorSpec(
            spec.h, spec.c2, spec.c1,
            spectral_core.Grid(float(args["grid_t"]), n))
    sol = spectral_core.eigenpairs(spec, count)
    orders = tuple(int(k) for k in str(args.get("moments", "0,2")).split(","))
    payload = sol.to_json(moment_orders=orders)
    csv_path = args.get("eigenfunction_csv")
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            sol.write_eigenfunction_csv(fh, "phi1")
    return payload, 0


def run_critical_b1(args: dict, cfg: RunConfig) -> tuple[dict, int]:
    values = spectral_core.critical_b1(
        int(args["h"]), int(args["j0"]),
        float(args.get("a", 1.0)), float(args.get("xi", 1.0)))
    return {"h": int(args["h"]), "j0": int(args["j0"]),
            "values": [[v.real, v.imag] for v in values]}, 0


def run_kernel_certificate(args: dict, cfg: RunConfig) -> tuple[dict, int]:
    h = int(args["h"])
    j0 = int(args["j0"])
    n = cfg.grid_n or spectral_core.DEFAULT_N
    entries = []
    ok = True
    for c1 in spectral_core.critical_b1(h, j0, float(args.get("a", 1.0)),
                                        float(args.get("xi", 1.0))):
        spec = spectral_core.OscillatorSpec.auto(h, float(args.get("a", 1.0))
                                                 * float(args.get("xi", 1.0)) ** 2,
                                                 c1, count=j0 + 3, n=n)
        sol = spectral_core.eigenpairs(spec, j0 + 2)
        ratio = sol.kernel_ratio()
        lam = float(sol.spectrum[sol.j0])
        entries.append({"c1": [c1.real, c1.imag], "j0_found": sol.j0,
                        "lambda_j0": lam, "kernel_ratio": ratio,
                        "pass": bool(ratio <= spectral_core.KERNEL_RATIO
                                     and sol.j0 == j0)})
        ok = ok and entries[-1]["pass"]
    return {"h": h, "j0": j0, "entries": entries, "pass": ok}, 0 if ok else 2


def run_reduce(args: dict, cfg: RunConfig) -> tuple[dict, int]:
    doc = args.get("model_doc") or _load_json(args["model"])
    model = _model_from_doc(doc)
    table = reduction_engine.ell_symbols(model, n=cfg.grid_n)
    payload = table.to_json()
    # seeded residual diagnostic of the bordered inverse
    rng = np.random.default_rng(cfg.seed)
    spec = spectral_core.OscillatorSpec.auto(
        model.h, model.a_taylor[0] * model.xi_norm ** 2, model.b1_taylor[0],
        n=cfg.grid_n or spectral_core.DEFAULT_N)
    sol = spectral_core.eigenpairs(spec, 1)
    solver = spectral_core.BorderedSolver(sol)
    worst = 0.0
    for _ in range(5):
        f = rng.standard_normal(len(sol.t))
        u, _theta = solver.solve(f, 0.0)
        res = sol.norm(solver.matrix @ u
                       + sol.inner(f, sol.phi2) * sol.phi2 - f) / sol.norm(f)
        worst = max(worst, res)
    payload["residual_check"] = {"seed": cfg.seed, "max_residual": worst}
    return payload, 0


def run_classify(args: dict, cfg: RunConfig) -> tuple[dict, int]:
    family = args["family"]
    tol_kw = {}
    if family == "kohn":
        g = expr_parser.parse_poly(args["g"])
        f = expr_parser.parse_poly(args["f"]) if args.get("f") else None
        verdict = classifier.kohn_loss(g, f)
    elif family == "squares":
        verdict = classifier.squares_loss(int(args["k1"]), int(args["k2"]))
    elif family == "even-example":
        verdict = classifier.even_example_loss(int(args["h"]), int(args["k"]))
    elif family == "gilioli":
        beta = args["beta"]
        if isinstance(beta, str):
            beta = _fraction_list(beta)
        verdict = classifier.gilioli_treves(
            int(args["h"]), Fraction(str(args.get("a", 1))), beta,
            int(args["xi"]), n=cfg.grid_n, **tol_kw)
    elif family == "tangential":
        doc = args.get("model_doc") or _load_json(args["model"])
        model = _model_from_doc(doc)
        verdict = classifier.tangential_bracket_test(model, n=cfg.grid_n)
    else:
        raise GrushinLabError(f"unknown classify family {family!r}")
    return verdict.to_json(), verdict.exit_code


def run_check_symbol(args: dict, cfg: RunConfig) -> tuple[dict, int]:
    doc = args.get("field_doc") or _load_json(args["file"])
    field = symbol_lab.field_from_json(doc)
    mode = args["mode"]
    c = args.get("c")
    c = float(c) if c is not None else None
    if mode == "H2":
        report = symbol_lab.check_H2(field, c)
        return report.to_json(), 0
    if mode == "h3":
        report = symbol_lab.check_h3(field, c)
        return report.to_json(), 0
    if mode == "tangential":
        report = symbol_lab.tangential_sign(field)
        code = 2 if report.verdict == symbol_lab.UNDETERMINED else 0
        return report.to_json(), code
    raise GrushinLabError(f"unknown check-symbol mode {mode!r}")


def run_probe_loss(args: dict, cfg: RunConfig) -> tuple[dict, int]:
    doc = args.get("field_doc") or _load_json(args["file"])
    field = symbol_lab.field_from_json(doc)
    spec = str(args.get("t", "16:256"))
    t_min, t_max = (float(x) for x in spec.split(":"))
    config = symbol_lab.ProbeConfig.for_range(
        t_min, t_max, points_per_octave=int(args.get("points_per_octave", 2)))
    report = symbol_lab.localization_probe(field, config)
    return report.to_json(), 0 if report.conclusive else 2


_RUNNERS = {
    "spectrum": run_spectrum,
    "critical-b1": run_critical_b1,
    "kernel-certificate": run_kernel_certificate,
    "reduce": run_reduce,
    "classify": run_classify,
    "check-symbol": run_check_symbol,
    "probe-loss": run_probe_loss,
}


def _sweep_row(packed: tuple[int, str, dict]) -> tuple[int, dict]:
    index, line, cfg_fields = packed
    cfg = RunConfig(**cfg_fields)
    try:
        row = json.loads(line)
        if not isinstance(row, dict) or "command" not in row:
            raise GrushinLabError("row must be an object with a 'command' key")
        runner = _RUNNERS.get(row["command"])
        if runner is None:
            raise GrushinLabError(f"unknown command {row['command']!r}")
        payload, code = runner(row, cfg)
        return index, {"index": index, "ok": True, "status": code,
                       "result": payload}
    except Exception as exc:  # per-row failures are recorded, never fatal
        return index, {"index": index, "ok": False, "error": str(exc)}


def run_sweep(args: dict, cfg: RunConfig) -> tuple[list, int]:
    with open(args["grid"], encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    cfg_fields = {"command": "sweep-row", "grid_n": cfg.grid_n,
                  "tol": cfg.tol, "seed": cfg.seed}
    packed = [(i, line, cfg_fields) for i, line in enumerate(lines)]
    if cfg.jobs > 1 and len(packed) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_sweep_row, packed))
    else:
        results = [_sweep_row(p) for p in packed]
    results.sort(key=lambda pair: pair[0])
    return [payload for _, payload in results], 0


def build_parser() -> _Parser:
    parser = _Parser(prog="grushin-lab", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", default=None, help="write report to file")
    common.add_argument("--format", dest="fmt", choices=("json", "csv"),
                        default="json")
    common.add_argument("--grid-n", dest="grid_n", type=int, default=None)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--jobs", type=int,
                        default=int(os.environ.get("GRUSHIN_LAB_JOBS", "1")))
    common.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common],
                       help="eigenvalues of the localized oscillator")
    p.add_argument("--h", type=int, required=True)
    p.add_argument("--c2", type=float, required=True)
    p.add_argument("--c1", type=_complex_arg, required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--grid-t", dest="grid_t", type=float, default=None)
    p.add_argument("--moments", default="0,2")
    p.add_argument("--eigenfunction-csv", dest="eigenfunction_csv", default=None)

    p = sub.add_parser("critical-b1", parents=[common],
                       help="b1 values with a vanishing eigenvalue")
    p.add_argument("--h", type=int, required=True)
    p.add_argument("--j0", type=int, required=True)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--xi", type=float, default=1.0)

    p = sub.add_parser("reduce", parents=[common],
                       help="reduced-symbol table of a coefficient model")
    p.add_argument("--model", required=True)

    p = sub.add_parser("classify", parents=[common],
                       help="closed-form hypoellipticity verdicts")
    fam = p.add_subparsers(dest="family", required=True)
    q = fam.add_parser("kohn", parents=[common])
    q.add_argument("--g", required=True)
    q.add_argument("--f", default=None)
    q = fam.add_parser("squares", parents=[common])
    q.add_argument("--k1", type=int, required=True)
    q.add_argument("--k2", type=int, required=True)
    q = fam.add_parser("even-example", parents=[common])
    q.add_argument("--h", type=int, required=True)
    q.add_argument("--k", type=int, required=True)
    q = fam.add_parser("gilioli", parents=[common])
    q.add_argument("--h", type=int, required=True)
    q.add_argument("--a", default="1")
    q.add_argument("--beta", required=True, help="beta(0),beta'(0),beta''(0)")
    q.add_argument("--xi", type=int, choices=(1, -1), required=True)
    q = fam.add_parser("tangential", parents=[common])
    q.add_argument("--model", required=True)

    p = sub.add_parser("check-symbol", parents=[common],
                       help="parabola / bracket symbol criteria")
    p.add_argument("--file", required=True)
    p.add_argument("--mode", choices=("H2", "h3", "tangential"), required=True)
    p.add_argument("--c", type=float, default=None)

    p = sub.add_parser("probe-loss", parents=[common],
                       help="localization probe slope fit")
    p.add_argument("--file", required=True)
    p.add_argument("--t", default="16:256")
    p.add_argument("--points-per-octave", dest="points_per_octave",
                   type=int, default=2)

    p = sub.add_parser("sweep", parents=[common],
                       help="run a command per JSON-lines grid row")
    p.add_argument("--grid", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    args = vars(ns)
    command = args.pop("command")
    try:
        cfg = RunConfig(command=command, output=args.pop("output"),
                        fmt=args.pop("fmt"), grid_n=args.pop("grid_n"),
                        tol=args.pop("tol"), jobs=args.pop("jobs"),
                        seed=args.pop("seed"))
        if command == "sweep":
            payloads, code = run_sweep(args, cfg)
            text = "".join(json.dumps(p, sort_keys=True, separators=(",", ":"))
                           + "\n" for p in payloads) \
                if cfg.fmt == "json" else _to_csv(payloads)
            _emit(text, cfg)
            return code
        runner = _RUNNERS[command]
        payload, code = runner(args, cfg)
        _emit(_dump(payload, cfg), cfg)
        return code
    except expr_parser.ParseError as exc:
        sys.stderr.write(json.dumps(
            {"error": str(exc), "position": exc.position,
             "expected": list(exc.expected), "kind": exc.kind},
            sort_keys=True) + "\n")
        return 1
    except (GrushinLabError, OSError, ValueError, json.JSONDecodeError) as exc:
        sys.stderr.write(json.dumps({"error": str(exc)}, sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
