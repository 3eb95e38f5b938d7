"""``flowlab`` command line: run one config, list experiments, or verify the bundled suite."""
from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .config import ConfigError, load
from .experiments import list_experiments, run_config

DEFAULT_ROOT = "flowlab-out"

CRITERIA = [
    (1, "Penrose suite", "c01_penrose_suite"),
    (2, "Jacobian correctness", "c02_jacobian_check"),
    (3, "induced-field identity", "c03_induced_field_check"),
    (4, "equilibrium preservation", "c04_alpha_sweep"),
    (5, "linear interpolation", "c05_reparam_check"),
    (6, "rank-loss deviation", "c06_rank_loss_check"),
    (7, "cross-entropy closed form", "c07_ce_equilibrium_check"),
    (8, "cross-entropy Hessian", "c08_ce_hessian_check"),
    (9, "prescribed-path solver", "c09_prescribed_path"),
    (10, "collapse", "c10_collapse_report"),
    (11, "NTK identity", "c11_ntk_report"),
]
DETERMINISM = (12, "determinism")


def output_root(arg=None) -> Path:
    return Path(arg or os.environ.get("FLOWLAB_OUTPUT_ROOT") or DEFAULT_ROOT)


def bundled_config(stem: str) -> dict:
    text = resources.files("flowlab").joinpath("configs", f"{stem}.json").read_text()
    return json.loads(text)


def run_suite(root: Path, verbose: bool = True) -> list:
    """Run every bundled criterion config under ``root``; return ``[(number, title, manifest)]``."""
    results = []
    for number, title, stem in CRITERIA:
        manifest = run_config(bundled_config(stem), output_root=root)
        results.append((number, title, manifest))
        if verbose:
            print(f"[{'PASS' if manifest['passed'] else 'FAIL'}] criterion {number:2d}: {title}", flush=True)
            for c in manifest["checks"]:
                if not c["pass"]:
                    print(f"         {c['metric_name']} = {c['scalar']:.3e} (needs {c['comparison']} "
                          f"{c['tolerance']:.3e})", flush=True)
    return results


def csv_mismatches(root_a: Path, root_b: Path) -> list:
    """Relative paths of CSVs under ``root_a`` whose bytes differ from (or are missing in) ``root_b``."""
    bad = []
    for a in sorted(root_a.rglob("*.csv")):
        rel = a.relative_to(root_a)
        if rel.parts[0] == "replay":
            continue
        b = root_b / rel
        if not b.exists() or a.read_bytes() != b.read_bytes():
            bad.append(str(rel))
    return bad


def cmd_run(args) -> int:
    cfg = load(args.config)
    manifest = run_config(cfg, base_dir=Path(args.config).parent, output_root=args.output_root or None)
    for c in manifest["checks"]:
        print(f"[{'PASS' if c['pass'] else 'FAIL'}] {c['metric_name']} = {c['scalar']:.6e} "
              f"({c['comparison']} {c['tolerance']:.3e})")
    return 0 if manifest["passed"] else 1


def cmd_list(_args) -> int:
    width = max(len(n) for n, _ in list_experiments())
    for name, desc in list_experiments():
        print(f"{name:<{width}}  {desc}")
    return 0


def cmd_verify(args) -> int:
    if not args.all:
        print("verify: pass --all to run the full suite", file=sys.stderr)
        return 2
    root = output_root(args.output_root)
    results = run_suite(root)
    ok = all(m["passed"] for _, _, m in results)
    summary = {"tool_version": __version__,
               "criteria": [{"criterion": n, "title": t, "passed": m["passed"]} for n, t, m in results]}
    if args.check_determinism:
        replay = root / "replay"
        run_suite(replay, verbose=False)
        bad = csv_mismatches(root, replay)
        number, title = DETERMINISM
        print(f"[{'PASS' if not bad else 'FAIL'}] criterion {number:2d}: {title}")
        for rel in bad:
            print(f"         differs: {rel}")
        summary["criteria"].append({"criterion": number, "title": title, "passed": not bad, "mismatches": bad})
        ok &= not bad
    (root / "verify_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowlab", description=__doc__)
    p.add_argument("--version", action="version", version=f"flowlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("--output-root", help=f"root for relative output_dir (env FLOWLAB_OUTPUT_ROOT, default '.')")
    r.set_defaults(func=cmd_run)
    sub.add_parser("list", help="list experiment kinds").set_defaults(func=cmd_list)
    v = sub.add_parser("verify", help="run the bundled acceptance suite")
    v.add_argument("--all", action="store_true", help="run every criterion")
    v.add_argument("--output-root", help=f"where to write results (env FLOWLAB_OUTPUT_ROOT, default {DEFAULT_ROOT})")
    v.add_argument("--check-determinism", action="store_true",
                   help="run the suite a second time and compare every CSV byte for byte")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
