"""Acceptance criteria. Each test prints one PASS/FAIL line and carries a ``criterion`` marker."""

import json
import os
import subprocess
import sys
import time
from pathlib import Path

import pytest

import equivalence
import instances
from conftest import PROPERTY_CRITERION, preprocess_args
from kgaudit.cli import main

HERE = Path(__file__).parent

# per-method values for two classes of three methods each
KNOWLEDGE_AWARE = ("CKE", "CFKG", "KGAT")
PATH_REASONING = ("PGPR", "UCPR", "CAFE")
METRICS = ("NDCG", "MRR", "SER", "DIV", "NOV", "PF", "COV")
METHOD_VALUES = {
    "ml1m": {
        "CKE": (0.29, 0.23, 0.26, 0.10, 0.93, 0.19, 0.70),
        "CFKG": (0.26, 0.21, 0.11, 0.11, 0.92, 0.25, 0.16),
        "KGAT": (0.29, 0.23, 0.29, 0.10, 0.93, 0.19, 0.75),
        "PGPR": (0.28, 0.21, 0.78, 0.42, 0.93, 0.27, 0.42),
        "UCPR": (0.26, 0.20, 0.53, 0.42, 0.93, 0.22, 0.25),
        "CAFE": (0.26, 0.18, 0.63, 0.44, 0.93, 0.36, 0.21),
    },
    "lfm1m": {
        "CKE": (0.40, 0.34, 0.82, 0.18, 0.88, 0.18, 0.91),
        "CFKG": (0.13, 0.10, 0.04, 0.27, 0.86, 0.34, 0.02),
        "KGAT": (0.37, 0.31, 0.79, 0.19, 0.88, 0.18, 0.89),
        "PGPR": (0.31, 0.25, 0.81, 0.54, 0.82, 0.32, 0.20),
        "UCPR": (0.34, 0.27, 0.94, 0.57, 0.87, 0.22, 0.41),
        "CAFE": (0.15, 0.09, 0.75, 0.58, 0.84, 0.36, 0.11),
    },
}
REFERENCE_P = {
    "ml1m": (0.33, 0.08, 0.01, 0.0, 0.422, 0.21, 0.33),
    "lfm1m": (0.77, 0.65, 0.38, 0.0, 0.16, 0.38, 0.34),
}
P_TOLERANCE = 0.015


def report_line(name, ok, detail=""):
    print(f"\n{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))


def class_reports(tmp_path, dataset):
    paths = []
    for cls in (KNOWLEDGE_AWARE, PATH_REASONING):
        body = {"dataset": {"name": dataset}, "cutoffs": [10],
                "methods": {m: {"aggregate": {"10": dict(zip(METRICS, METHOD_VALUES[dataset][m]))}} for m in cls}}
        p = tmp_path / f"{dataset}_{cls[0].lower()}.json"
        p.write_text(json.dumps(body))
        paths.append(p)
    return paths


@pytest.mark.criterion("p-value reproduction")
def test_class_comparison_reproduces_reference_p_values(tmp_path, capsys):
    groups = [a for m in KNOWLEDGE_AWARE for a in ("--group", f"{m}=knowledge-aware")]
    groups += [a for m in PATH_REASONING for a in ("--group", f"{m}=path-reasoning")]
    worst, elapsed, failures = 0.0, 0.0, []
    for dataset in ("ml1m", "lfm1m"):
        reports = class_reports(tmp_path, dataset)
        out = tmp_path / dataset
        start = time.perf_counter()
        code = main(["compare", "--out-dir", str(out), "--report", str(reports[0]), "--report", str(reports[1]),
                     "--metrics", ",".join(METRICS), *groups])
        elapsed += time.perf_counter() - start
        assert code == 0
        result = json.loads((out / "compare" / "compare.json").read_text())
        for metric, expected in zip(METRICS, REFERENCE_P[dataset]):
            got = result["tests"][metric]["p_value"]
            worst = max(worst, abs(got - expected))
            if not abs(got - expected) <= P_TOLERANCE:
                failures.append(f"{dataset} {metric}: {got:.4f} vs {expected}")
    ok = not failures and elapsed < 1.0
    with capsys.disabled():
        report_line("p-value reproduction", ok, f"14 cells, max |diff| {worst:.4f}, {elapsed:.3f} s")
    assert not failures, failures
    assert elapsed < 1.0


@pytest.mark.criterion("dataset statistics on ML1M")
def test_ml1m_statistics(tmp_path, capsys):
    root = os.environ.get("KGAUDIT_ML1M_DIR")
    if not root:
        with capsys.disabled():
            print("\nSKIP  dataset statistics on ML1M  (set KGAUDIT_ML1M_DIR to the converted raw files)")
        pytest.skip("KGAUDIT_ML1M_DIR is not set; raw ML1M and its KG are not available offline")
    root = Path(root)
    want = {"users": 6040, "products": 2984, "interactions": 932295, "entities": 13804, "entity_types": 12,
            "relations": 193089, "relation_types": 11}
    start = time.perf_counter()
    seen = {}
    for basis in ("after-head", "before-head"):
        out = tmp_path / basis
        args = ["preprocess", "--out-dir", str(out), "--interactions", str(root / "interactions.tsv"),
                "--kg-triples", str(root / "kg_triples.tsv"), "--entity-types", str(root / "entity_types.tsv"),
                "--user-attributes", str(root / "user_attributes.tsv"), "--share-basis", basis,
                "--min-user-interactions", "20", "--min-product-interactions", "10"]
        assert main(args) == 0
        stats = json.loads((out / "stats.json").read_text())["stats"]
        seen[basis] = {k: stats[k] for k in want}
    elapsed = time.perf_counter() - start
    matched = [b for b, s in seen.items() if s == want]
    ok = bool(matched) and elapsed < 120
    with capsys.disabled():
        for basis, s in seen.items():
            print(f"\n      {basis}: {s}")
        report_line("dataset statistics on ML1M", ok, f"matching variants {matched}, {elapsed:.1f} s")
    assert matched, seen
    assert elapsed < 120


@pytest.mark.criterion("brute-force metric equivalence")
def test_every_metric_matches_the_naive_recomputation(capsys):
    bad = {}
    for seed in range(1000):
        problems = equivalence.mismatches(instances.random_instance(seed))
        if problems:
            bad[seed] = problems
    with capsys.disabled():
        report_line("brute-force metric equivalence", not bad, f"1000 instances, {len(bad)} with mismatches")
    assert not bad, dict(list(bad.items())[:3])


@pytest.mark.criterion(PROPERTY_CRITERION)
def test_property_suites_pass(capsys):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           str(HERE / "test_properties.py")], capture_output=True, text=True, cwd=HERE.parent)
    elapsed = time.perf_counter() - start
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    with capsys.disabled():
        report_line(PROPERTY_CRITERION, proc.returncode == 0, f"{summary}, {elapsed:.1f} s")
    assert proc.returncode == 0, proc.stdout[-3000:]


def fidelity_row(report, method):
    fid = report["methods"][method]["fidelity_sweep"]
    return [fid[str(k)] for k in (10, 20, 50, 100)]


def top_paths(src, dst, depth):
    """Keep the path rows of each user's first ``depth`` explained products."""
    kept, count = [], {}
    for row in src.read_text().splitlines(True):
        user = row.split("\t", 1)[0]
        count[user] = count.get(user, 0) + 1
        if count[user] <= depth:
            kept.append(row)
    dst.write_text("".join(kept))


@pytest.mark.criterion("fidelity sweep")
def test_fidelity_sweep(pipeline_dir, tmp_path, capsys):
    base = pipeline_dir / "baselines"
    top_paths(base / "pathcount.paths.tsv", tmp_path / "top10.paths.tsv", 10)
    target = tmp_path / "sweep"
    target.mkdir()
    (target / "bundle").symlink_to(pipeline_dir / "bundle")
    (target / "split").symlink_to(pipeline_dir / "split")
    code = main(["evaluate", "--out-dir", str(target), "--format", "json",
                 "--method", f"full={base / 'pathcount.recs.tsv'},{base / 'pathcount.paths.tsv'}",
                 "--method", f"top10={base / 'pathcount.recs.tsv'},{tmp_path / 'top10.paths.tsv'}"])
    assert code == 0
    report = json.loads((target / "report" / "report.json").read_text())
    full, top10 = fidelity_row(report, "full"), fidelity_row(report, "top10")
    decays = all(a >= b for a, b in zip(top10, top10[1:])) and top10[-1] < top10[0]
    ok = full == [1.0] * 4 and top10[0] == 1.0 and decays
    with capsys.disabled():
        report_line("fidelity sweep", ok, "full " + " ".join(f"{v:.3f}" for v in full)
                    + " | top-10 paths " + " ".join(f"{v:.3f}" for v in top10))
    assert full == [1.0] * 4
    assert top10[0] == 1.0
    assert decays, top10


def run_pipeline(raw, out, workers):
    assert main(preprocess_args(raw, out, "--seed", "3")) == 0
    assert main(["split", "--out-dir", str(out)]) == 0
    assert main(["baseline", "--out-dir", str(out)]) == 0
    assert main(["evaluate", "--out-dir", str(out), "--workers", str(workers), "--format", "json,csv"]) == 0
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.suffix in (".json", ".csv")}


@pytest.mark.criterion("determinism")
def test_pipeline_outputs_are_byte_identical(fixture_raw, tmp_path, capsys):
    runs = {w: run_pipeline(fixture_raw, tmp_path / f"w{w}", w) for w in (1, 2)}
    again = run_pipeline(fixture_raw, tmp_path / "w1-again", 1)
    differing = sorted(n for n in runs[1] if runs[1][n] != runs[2].get(n) or runs[1][n] != again.get(n))
    same_files = set(runs[1]) == set(runs[2]) == set(again)
    ok = not differing and same_files and len(runs[1]) > 4
    with capsys.disabled():
        report_line("determinism", ok, f"{len(runs[1])} json/csv files, workers 1 and 2, repeated run")
    assert same_files
    assert not differing, differing
