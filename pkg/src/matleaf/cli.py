"""Command-line front end.

    matleaf rank --profile plateau --s 0.5 --grid 11 --seed 0
    matleaf leaf --at 0.5,0,0 --profile monotone --seed 0 --out leaf.json
    matleaf find-iso --from 0.3,0,0 --to 0.4,0,0 --profile wiggle --c 0.125 --seed 0
    matleaf verify --config run.json

Exit codes: 0 success, 1 invalid input, 2 numerical failure or a violated
property.  Reports are JSON with sorted keys and no timestamps.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .distribution import isotropy_algebra, rank_map
from .errors import ConfigError, DomainError, MatleafError, RankUnstable
from .foliation import decompose, leaf_trace
from .grid import GridSpec
from .material import find_material_isomorphism, iso_residual, symmetry_check
from .verify import report, run_suite

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _point(text: str) -> tuple:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"expected x,y,z, got {text!r}") from exc
    if len(vals) != 3:
        raise ConfigError(f"expected three coordinates, got {text!r}")
    return tuple(vals)


def _matrix(text: str) -> np.ndarray:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"expected nine comma-separated numbers, got {text!r}") from exc
    if len(vals) != 9:
        raise ConfigError("a matrix needs nine comma-separated entries (row-major)")
    return np.array(vals).reshape(3, 3)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--profile", choices=["constant", "monotone", "plateau", "wiggle"])
    common.add_argument("--s", type=float, help="plateau radius")
    common.add_argument("--c", type=float, help="wiggle centre (in squared radius)")
    common.add_argument("--radius", type=float, help="body radius")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="JSON report path; CSV goes next to it")

    ap = _Parser(prog="matleaf", description="Material distributions and their leaves.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rank", parents=[common], help="fibre dimensions over a grid")
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--mode", choices=["pointwise", "germ"], default="germ")

    p = sub.add_parser("leaf", parents=[common], help="trace one base leaf")
    p.add_argument("--at", required=True, type=_point)
    p.add_argument("--mode", choices=["pointwise", "germ"], default="germ")

    p = sub.add_parser("decompose", parents=[common], help="cover the body by leaves")
    p.add_argument("--grid", type=int, default=7)
    p.add_argument("--mode", choices=["pointwise", "germ"], default="germ")

    p = sub.add_parser("find-iso", parents=[common], help="search a material isomorphism")
    p.add_argument("--from", dest="src", required=True, type=_point)
    p.add_argument("--to", dest="dst", required=True, type=_point)

    p = sub.add_parser("symmetry", parents=[common], help="isotropy at a point")
    p.add_argument("--at", required=True, type=_point)
    p.add_argument("--matrix", type=_matrix, help="candidate symmetry, 9 entries row-major")

    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    return ap


def load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg = RunConfig.from_json(text)
    model = {k: getattr(args, k) for k in ("profile", "s", "c", "radius") if getattr(args, k) is not None}
    numerics = {"seed": args.seed} if args.seed is not None else {}
    output = {}
    if args.out:
        output = {"json": args.out, "csv": str(Path(args.out).with_suffix(".csv"))}
    return cfg.with_overrides(model, numerics, output).resolve_seed()


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(cfg: RunConfig, payload: dict, csv_text: str | None = None):
    payload = {**payload, "config": cfg.to_dict()}
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if cfg.output.json:
        Path(cfg.output.json).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if csv_text is not None and cfg.output.csv:
        Path(cfg.output.csv).write_text(csv_text, encoding="utf-8")


def cmd_rank(cfg: RunConfig, grid: int, mode: str) -> int:
    rm = rank_map(cfg.build_model(), GridSpec(n=grid), mode, cfg.dist_params())
    rows = [(*p, f, b) for p, f, b in zip(rm.points, rm.full_dims, rm.base_dims)]
    failed = rm.n_unstable > 0.01 * max(len(rm.points), 1)
    payload = {"command": "rank", "summary": rm.summary(), "unstable_fraction_exceeded": failed}
    _emit(cfg, payload, _csv_text(["x", "y", "z", "full_dim", "base_dim"], rows))
    if failed:
        sys.stderr.write(f"rank unstable at {rm.n_unstable} of {len(rm.points)} points\n")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_leaf(cfg: RunConfig, at, mode: str) -> int:
    model = cfg.build_model()
    model.body.require(at)
    leaf = leaf_trace(model, at, cfg.trace_params(mode))
    rows = [(*map(float, p), 0) for p in leaf.cloud]
    _emit(cfg, {"command": "leaf", "leaf": leaf.to_dict()}, _csv_text(["x", "y", "z", "leaf_id"], rows))
    return EXIT_OK


def cmd_decompose(cfg: RunConfig, grid: int, mode: str) -> int:
    rep = decompose(cfg.build_model(), cfg.decompose_params(grid, mode))
    _emit(cfg, {"command": "decompose", "report": rep.to_dict()},
          _csv_text(["x", "y", "z", "leaf_id"], rep.cloud_rows()))
    return EXIT_OK


def cmd_find_iso(cfg: RunConfig, src, dst) -> int:
    res = find_material_isomorphism(cfg.build_model(), src, dst, cfg.sampler(), cfg.iso_options())
    out = res.to_dict()
    out["orthogonality_defect"] = (
        float(np.linalg.norm(res.P @ res.P.T - np.eye(3))) if np.all(np.isfinite(res.P)) else None
    )
    _emit(cfg, {"command": "find-iso", "from": list(src), "to": list(dst), "result": out})
    return EXIT_OK


def cmd_symmetry(cfg: RunConfig, at, matrix) -> int:
    model = cfg.build_model()
    model.body.require(at)
    iso = isotropy_algebra(model, at, "germ", cfg.dist_params())
    payload = {"command": "symmetry", "at": list(at), "isotropy_algebra": iso.to_dict()}
    if matrix is not None:
        payload["candidate"] = {
            "matrix": matrix.tolist(),
            "accepted": symmetry_check(model, at, matrix, cfg.sampler(), cfg.numerics.accept_tol),
            "residual": iso_residual(model, at, at, matrix, cfg.sampler()),
        }
    _emit(cfg, payload)
    return EXIT_OK


def _config_roundtrip(cfg: RunConfig):
    from .verify import PropertyResult

    text = cfg.to_json()
    again = RunConfig.from_json(text).to_json()
    ok = again == text
    return [PropertyResult("cli.config_roundtrip", ok, 0.0 if ok else 1.0, 0.0, None if ok else {"config": text})]


def cmd_verify(cfg: RunConfig) -> int:
    results = run_suite(cfg.build_model(), cfg.verify_params(), extra=[lambda: _config_roundtrip(cfg)])
    rep = report(results)
    _emit(cfg, {"command": "verify", "report": rep})
    if not rep["all_passed"]:
        sys.stderr.write(f"property violated: {json.dumps(rep['first_failure'], sort_keys=True)}\n")
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args)
        cmd = args.command
        if cmd == "rank":
            return cmd_rank(cfg, args.grid, args.mode)
        if cmd == "leaf":
            return cmd_leaf(cfg, args.at, args.mode)
        if cmd == "decompose":
            return cmd_decompose(cfg, args.grid, args.mode)
        if cmd == "find-iso":
            return cmd_find_iso(cfg, args.src, args.dst)
        if cmd == "symmetry":
            return cmd_symmetry(cfg, args.at, args.matrix)
        return cmd_verify(cfg)
    except (ConfigError, DomainError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (RankUnstable, MatleafError, ArithmeticError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
