"""Acceptance suite: runs ``flowlab verify --all`` twice and checks every criterion.

Tolerances are pinned here rather than read from the bundled configs, so a
loosened config cannot turn a criterion green.
"""
import csv
import re

import numpy as np
import pytest

from flowlab import cli
from flowlab.reference import TINY_LABELS

RESULTS = {}  # criterion -> (title, passed); printed by the terminal-summary hook in conftest

# criterion -> (params pinned in the config echo, [(metric regex, tolerance, comparison)])
PINNED = {
    1: ({"n_matrices": 200, "max_rows": 12, "max_cols": 20},
        [(r"max_relative_residual/(penrose|pinv_pinv|pinv_transpose|pinv_gram|a_aat_pinv)$", 1e-8, "<="),
         (r"kernel_agreement_failures", 0, "==")]),
    2: ({"n_draws": 20, "fd_step": 1e-5, "min_magnitude": 1e-8},
        [(r"(tiny-full-rank|rank-deficient|affine)/max_relative_error", 1e-6, "<=")]),
    3: ({"n_draws": 20, "alphas": [0, 0.25, 0.5, 0.75, 1]},
        [(r"(tiny-full-rank|rank-deficient)/max_scaled_residual", 1e-8, "<=")]),
    4: ({"alphas": [0, 0.25, 0.5, 0.75, 1], "repeat_with_alpha": 1.0},
        [(r"alpha(0|1)/terminal_grad_norm", 1e-8, "<="),
         (r"alpha(0|1)/field_norm_at_alpha", 1e-7, "<=")]),
    5: ({"t_max": 0.99, "step_size": 1e-3},
        [(r"terminal_distance_ratio", 0.011, "<=")]),
    6: ({"eval_times": [0.25, 0.5, 0.75]},
        [(r"rank-deficient/relative_error_t0\.(25|5|75)$", 1e-3, "<="),
         (r"tiny-full-rank/max_predicted_deviation", 1e-10, "<=")]),
    7: ({"n_draws": 20, "output_dims": [2, 3, 5], "horizon": 50.0},
        [(r"max_distance_to_formula", 1e-5, "<="), (r"max_hyperplane_drift", 1e-8, "<="),
         (r"max_terminal_cost_gap", 1e-8, "<=")]),
    8: ({"n_draws": 100, "output_dims": [2, 3, 5], "z_bound": 10.0},
        [(r"rank_mismatches", 0, "=="), (r"min_eigenvalue", -1e-10, ">="),
         (r"max_null_residual", 1e-12, "<="), (r"min_vHv_on_sum_free_subspace", 1e-6, ">")]),
    9: ({"path_kind": "linear_interpolation"},
        [(r"terminal_output_error_ratio", 1e-3, "<="), (r"max_range_defect", 1e-8, "<="),
         (r"halving_error_ratio", 8.0, ">=")]),
    10: ({"t_max": 0.99},
         [(r"terminal_within_class_energy", 1e-6, "<="), (r"terminal_mean_mismatch_energy", 1e-6, "<="),
          (r"identity_residual", 1e-10, "<=")]),
    11: ({},
         [(r"(tiny-full-rank|rank-deficient|affine)/max_entry_gap_vs_DDT", 1e-10, "<="),
          (r"tiny-full-rank/min_eigenvalue", None, ">"), (r"rank-deficient/min_eigenvalue", None, "<=")]),
}
TITLES = {n: t for n, t, _ in cli.CRITERIA} | {12: "determinism"}
STEMS = {n: s for n, _, s in cli.CRITERIA}


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    root = tmp_path_factory.mktemp("verify")
    first = {n: m for n, _, m in cli.run_suite(root / "first", verbose=False)}
    cli.run_suite(root / "second", verbose=False)
    return root, first


def _record(n, ok):
    RESULTS[n] = (TITLES[n], ok)


def _evaluate(n, manifest):
    params, pins = PINNED[n]
    problems = []
    for k, v in params.items():
        if manifest["config"]["params"].get(k) != v:
            problems.append(f"param {k}={manifest['config']['params'].get(k)!r}, pinned {v!r}")
    for pattern, tol, comp in pins:
        hits = [c for c in manifest["checks"] if re.search(pattern, c["metric_name"])]
        if not hits:
            problems.append(f"no check matches {pattern}")
        for c in hits:
            if tol is not None and (c["tolerance"] != tol or c["comparison"] != comp):
                problems.append(f"{c['metric_name']} uses {c['comparison']} {c['tolerance']}, pinned {comp} {tol}")
            elif tol is None and c["comparison"] != comp:
                problems.append(f"{c['metric_name']} uses {c['comparison']}, pinned {comp}")
            if not c["pass"]:
                problems.append(f"{c['metric_name']} = {c['scalar']:.3e} fails {c['comparison']} {c['tolerance']:.3e}")
    if not manifest["passed"]:
        problems.append("manifest not passed")
    return problems


@pytest.mark.parametrize("n", sorted(PINNED))
def test_criterion(suite, n):
    _, first = suite
    problems = _evaluate(n, first[n])
    _record(n, not problems)
    assert not problems, "\n".join(problems)


def test_linear_interpolation_deviation_from_artifact(suite):
    # recompute the deviation bound of criterion 5 directly from the CSV
    root, _ = suite
    with open(root / "first" / "reparam_check" / "reparam.csv") as fh:
        rows = list(csv.DictReader(fh))
    x0 = np.array([float(rows[0][f"x_{i}"]) for i in range(6)])
    gap = np.linalg.norm(x0 - np.ravel(TINY_LABELS))
    worst = max(float(r["deviation_norm"]) for r in rows)
    assert float(rows[-1]["t"]) == pytest.approx(0.99)
    assert worst <= 1e-4 * (1 + gap)


def test_criterion_12_determinism(suite):
    root, _ = suite
    bad = cli.csv_mismatches(root / "first", root / "second")
    n_csv = len(list((root / "first").rglob("*.csv")))
    _record(12, not bad and n_csv > 0)
    assert n_csv >= len(cli.CRITERIA)
    assert not bad, f"CSV bytes differ: {bad}"
