"""Command-line entry point: preprocess, split, baseline, evaluate, compare, stats.

Exit codes: 0 success, 2 usage, 3 parse/validation, 4 internal invariant breach.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import EvalConfig, compare_methods, evaluate
from .explanation import SELECTION_POLICIES, precompute_weights
from .formats import load_method, write_interactions, write_paths, write_recommendations
from .ingest import (BUNDLE_FILES, ConfigError, DatasetBundle, ParseError, PreprocessConfig, SHARE_BASES, compute_stats,
                     load_raw, parse_interactions, preprocess, read_bundle, write_bundle)
from .models import PATH_POLICIES, recommend_mostpop, recommend_pathcount, train_mostpop
from .report import compare_table, config_hash, dumps, sha256_file, write_report
from .split import SplitBundle, SplitConfig, SplitConfigError, chronological_split

log = logging.getLogger("kgaudit")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_INVARIANT = 0, 2, 3, 4
SPLIT_NAMES = ("train", "valid", "test")


class UsageError(Exception):
    pass


class InvariantError(Exception):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in str(text).split(",") if x.strip())


def _pairs(values, what: str) -> dict[str, str]:
    out = {}
    for item in values or ():
        key, sep, val = item.partition("=")
        if not sep or not key or not val:
            raise UsageError(f"{what} must look like NAME=VALUE, got {item!r}")
        out[key] = val
    return out


# ---------------------------------------------------------------------------
# parser

def _global_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="key = value file with defaults for any option")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", default="kgaudit-out")
    g.add_argument("--format", type=_str_list, default=("json", "csv"), help="subset of json,csv,svg")
    g.add_argument("--cutoffs", type=_int_list, default=(10,))
    g.add_argument("--fidelity-cutoffs", type=_int_list, default=(10, 20, 50, 100))
    g.add_argument("--require-attributes", action=argparse.BooleanOptionalAction, default=True)
    g.add_argument("--delimiter", default="\t")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = argparse.ArgumentParser(prog="kgaudit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kgaudit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="clean raw data into a canonical bundle")
    p.add_argument("--interactions", required=True)
    p.add_argument("--kg-triples", required=True)
    p.add_argument("--entity-types")
    p.add_argument("--user-attributes")
    p.add_argument("--product-providers")
    p.add_argument("--provider-attributes")
    p.add_argument("--category-relation")
    p.add_argument("--provider-relation")
    p.add_argument("--min-user-interactions", type=int, default=20)
    p.add_argument("--min-product-interactions", type=int, default=10)
    p.add_argument("--min-relation-share", type=float, default=0.03)
    p.add_argument("--sample-users", type=int)
    p.add_argument("--share-basis", choices=SHARE_BASES, default="after-head",
                   help="triples the relation-share threshold is measured against")

    p = sub.add_parser("stats", parents=[common], help="print statistics of a preprocessed bundle")
    p.add_argument("--bundle", help="bundle directory (default OUT_DIR/bundle)")

    p = sub.add_parser("split", parents=[common], help="chronological train/valid/test split")
    p.add_argument("--bundle")
    p.add_argument("--train-fraction", type=float, default=0.6)
    p.add_argument("--valid-fraction", type=float, default=0.2)
    p.add_argument("--test-fraction", type=float, default=0.2)

    p = sub.add_parser("baseline", parents=[common], help="run reference recommenders")
    p.add_argument("--bundle")
    p.add_argument("--model", action="append", choices=("mostpop", "pathcount"))
    p.add_argument("--k", type=int, help="list length (default: largest cutoff)")
    p.add_argument("--max-hops", type=int, default=3)
    p.add_argument("--path-policy", choices=PATH_POLICIES, default="recent")

    p = sub.add_parser("evaluate", parents=[common], help="compute every metric for method outputs")
    p.add_argument("--bundle")
    p.add_argument("--method", action="append", metavar="NAME=RECS[,PATHS]",
                   help="method output files (default: every baseline under OUT_DIR/baselines)")
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--path-selection", choices=SELECTION_POLICIES, default="first")
    p.add_argument("--group", action="append", metavar="METHOD=CLASS",
                   help="optional two-class grouping for significance tests")

    p = sub.add_parser("compare", parents=[common], help="Welch t-tests between two classes of methods")
    p.add_argument("--report", action="append", required=True)
    p.add_argument("--group", action="append", required=True, metavar="METHOD=CLASS")
    p.add_argument("--cutoff", type=int)
    p.add_argument("--metrics", type=_str_list)
    p.add_argument("--alpha", type=float, default=0.05)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Load ``--config`` values as defaults of the chosen subcommand."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    command = next((a for a in rest if not a.startswith("-")), None)
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub_action.choices.get(command)
    if subparser is None:
        return
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=", ":"))
    try:
        text = Path(known.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    cp.read_string("[run]\n" + text)
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in cp["run"].items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None:
            raise UsageError(f"unknown config key {key!r} for {command}")
        if isinstance(action, argparse.BooleanOptionalAction):
            value = raw.strip().lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            value = action.type(raw)
        else:
            value = raw
        if isinstance(action, argparse._AppendAction):
            value = [v.strip() for v in raw.split(",") if v.strip()]
        defaults[dest] = value
    subparser.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# helpers

def _bundle_dir(args) -> Path:
    return Path(args.bundle) if getattr(args, "bundle", None) else Path(args.out_dir) / "bundle"


def _load_bundle(args) -> DatasetBundle:
    d = _bundle_dir(args)
    if not d.is_dir():
        raise UsageError(f"no preprocessed bundle at {d}; run `kgaudit preprocess` first")
    return read_bundle(d)


def _load_split(args, bundle: DatasetBundle) -> SplitBundle:
    d = Path(args.out_dir) / "split"
    if not all((d / f"{n}.tsv").exists() for n in SPLIT_NAMES):
        raise UsageError(f"no split at {d}; run `kgaudit split` first")
    n_users, n_entities = len(bundle.user_vocab), len(bundle.entity_vocab)
    parts = [parse_interactions(d / f"{n}.tsv", user_vocab=bundle.user_vocab, entity_vocab=bundle.entity_vocab,
                                name=f"{n}.tsv") for n in SPLIT_NAMES]
    if len(bundle.user_vocab) != n_users or len(bundle.entity_vocab) != n_entities:
        raise ParseError("split files reference users or products outside the bundle", source=str(d))
    return SplitBundle(*parts)


def _checksums(paths) -> dict[str, str]:
    return {Path(p).name: sha256_file(p) for p in sorted(paths, key=lambda p: Path(p).name)}


def _provenance(args, config: dict, inputs) -> dict:
    return {"tool": "kgaudit", "version": __version__, "seed": args.seed,
            "config_hash": config_hash(config), "inputs": _checksums(inputs)}


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")


def _check_bundle(bundle: DatasetBundle, cfg: PreprocessConfig) -> None:
    inter = bundle.interactions
    if len(inter):
        u_counts = np.bincount(inter.users)
        p_counts = np.bincount(inter.products)
        if u_counts[u_counts > 0].min() < cfg.min_user_interactions \
                or p_counts[p_counts > 0].min() < cfg.min_product_interactions:
            raise InvariantError("k-core thresholds do not hold after preprocessing")
    if not np.all(bundle.kg.degree[bundle.catalog] > 0):
        raise InvariantError("catalog product without knowledge-graph triples")
    if cfg.require_attributes and any(u not in bundle.user_attributes for u in inter.distinct_users.tolist()):
        raise InvariantError("user without sensitive attributes survived preprocessing")


# ---------------------------------------------------------------------------
# commands

def cmd_preprocess(args) -> int:
    cfg = PreprocessConfig(
        min_user_interactions=args.min_user_interactions,
        min_product_interactions=args.min_product_interactions,
        min_relation_share=args.min_relation_share,
        category_relation=args.category_relation,
        provider_relation=args.provider_relation,
        require_attributes=args.require_attributes,
        sample_users=args.sample_users,
        seed=args.seed,
        share_basis=args.share_basis,
    )
    files = {"interactions": args.interactions, "kg_triples": args.kg_triples,
             "entity_types": args.entity_types, "user_attributes": args.user_attributes,
             "product_providers": args.product_providers, "provider_attributes": args.provider_attributes}
    given = {k: v for k, v in files.items() if v}
    for name, path in given.items():
        if not Path(path).is_file():
            raise UsageError(f"missing input file for --{name.replace('_', '-')}: {path}")
    if cfg.require_attributes and not args.user_attributes:
        raise UsageError("--user-attributes is required unless --no-require-attributes is given")
    raw = load_raw(delimiter=args.delimiter, **files)
    bundle = preprocess(raw, cfg)
    _check_bundle(bundle, cfg)
    out = Path(args.out_dir)
    write_bundle(bundle, out / "bundle")
    stats = compute_stats(bundle).as_dict()
    config = {"preprocess": cfg.__dict__}
    _write_json(out / "stats.json", {"stats": stats, "duplicate_triples": raw.kg.duplicates,
                                     "provenance": _provenance(args, config, given.values())})
    print(dumps(stats), end="")
    return EXIT_OK


def cmd_stats(args) -> int:
    bundle = _load_bundle(args)
    stats = compute_stats(bundle).as_dict()
    _write_json(Path(args.out_dir) / "stats.json",
                {"stats": stats, "provenance": _provenance(args, {"stats": True},
                                                           [_bundle_dir(args) / n for n in BUNDLE_FILES])})
    print(dumps(stats), end="")
    return EXIT_OK


def cmd_split(args) -> int:
    bundle = _load_bundle(args)
    cfg = SplitConfig(args.train_fraction, args.valid_fraction, args.test_fraction)
    split = chronological_split(bundle.interactions, cfg)
    d = Path(args.out_dir) / "split"
    d.mkdir(parents=True, exist_ok=True)
    for name in SPLIT_NAMES:
        write_interactions(getattr(split, name), d / f"{name}.tsv")
    summary = {"config": cfg.__dict__, "users": len(split.sizes),
               "dropped_users": [bundle.user_vocab.label(u) for u in split.dropped_users],
               **{name: len(getattr(split, name)) for name in SPLIT_NAMES}}
    _write_json(d / "split.json", summary)
    print(dumps(summary), end="")
    return EXIT_OK


def cmd_baseline(args) -> int:
    bundle = _load_bundle(args)
    split = _load_split(args, bundle)
    k = args.k or max(max(args.cutoffs), max(args.fidelity_cutoffs))
    models = args.model or ["mostpop", "pathcount"]
    users = sorted(split.train.products_by_user)
    d = Path(args.out_dir) / "baselines"
    d.mkdir(parents=True, exist_ok=True)
    catalog = bundle.catalog.tolist()
    for model in models:
        if model == "mostpop":
            pop = train_mostpop(split.train, catalog)
            lists = {u: recommend_mostpop(pop, u, k, split.seen_products(u)) for u in users}
        else:
            lists = {u: recommend_pathcount(bundle.kg, split.train, u, k, args.max_hops, catalog=catalog,
                                            seen=split.seen_products(u), policy=args.path_policy)
                     for u in users}
        write_recommendations(lists, d / f"{model}.recs.tsv", bundle.user_vocab, bundle.entity_vocab)
        write_paths(lists, d / f"{model}.paths.tsv", bundle.user_vocab, bundle.entity_vocab, catalog)
        log.info("%s: %d lists written", model, len(lists))
    return EXIT_OK


def _method_files(args) -> dict[str, tuple[Path, Path | None]]:
    if args.method:
        out = {}
        for name, spec in _pairs(args.method, "--method").items():
            recs, _, paths = spec.partition(",")
            out[name] = (Path(recs), Path(paths) if paths else None)
    else:
        d = Path(args.out_dir) / "baselines"
        out = {p.name[:-len(".recs.tsv")]: (p, None) for p in sorted(d.glob("*.recs.tsv"))}
        for name, (recs, _) in list(out.items()):
            paths = d / f"{name}.paths.tsv"
            out[name] = (recs, paths if paths.exists() else None)
    if not out:
        raise UsageError("no method outputs given and no baselines found")
    for name, (recs, paths) in out.items():
        for p in (recs, paths):
            if p is not None and not p.is_file():
                raise UsageError(f"missing file for method {name}: {p}")
    return out


def cmd_evaluate(args) -> int:
    bundle = _load_bundle(args)
    split = _load_split(args, bundle)
    cfg = EvalConfig(cutoffs=tuple(args.cutoffs), fidelity_cutoffs=tuple(args.fidelity_cutoffs),
                     beta=args.beta, path_policy=args.path_selection, workers=args.workers)
    files = _method_files(args)
    weights = precompute_weights(split.train, bundle.kg, cfg.beta)
    methods, diagnostics = {}, {}
    for name, (recs, paths) in sorted(files.items()):
        methods[name], diagnostics[name] = load_method(
            recs, paths, bundle.user_vocab, bundle.entity_vocab, bundle.catalog.tolist(), bundle.kg,
            split.train, weights, cfg.path_policy)
    report = evaluate(bundle, split, methods, cfg)
    for name, diag in diagnostics.items():
        report["methods"][name]["path_diagnostics"] = diag
    grouping = _pairs(args.group, "--group")
    if grouping:
        k = str(cfg.cutoffs[0])
        per_method = {m: body["aggregate"][k] for m, body in report["methods"].items()}
        report["class_tests"] = compare_methods(per_method, grouping).as_dict()
    config = {"eval": report["eval_config"], "methods": sorted(files), "grouping": grouping}
    inputs = [_bundle_dir(args) / n for n in BUNDLE_FILES]
    inputs += [Path(args.out_dir) / "split" / f"{n}.tsv" for n in SPLIT_NAMES]
    inputs += [p for pair in files.values() for p in pair if p is not None]
    report["provenance"] = _provenance(args, config, inputs)
    written = write_report(report, Path(args.out_dir) / "report", args.format)
    for p in written:
        print(p)
    return EXIT_OK


def cmd_compare(args) -> int:
    reports = []
    for path in args.report:
        try:
            reports.append(json.loads(Path(path).read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise UsageError(f"missing report {path}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc})", source=path) from None
    datasets = {json.dumps(r.get("dataset"), sort_keys=True) for r in reports}
    if len(datasets) > 1:
        raise UsageError("reports were computed on different datasets")
    cutoff = str(args.cutoff or reports[0]["cutoffs"][0])
    per_method: dict[str, dict] = {}
    for r in reports:
        if int(cutoff) not in r["cutoffs"]:
            raise UsageError(f"cutoff {cutoff} missing from a report")
        for name, body in r["methods"].items():
            if name in per_method:
                raise UsageError(f"method {name} appears in more than one report")
            per_method[name] = {m: (v if v is not None else float("nan"))
                                for m, v in body["aggregate"][cutoff].items()}
    grouping = _pairs(args.group, "--group")
    metrics = args.metrics
    if metrics is None:
        names: list[str] = []
        for m in sorted(grouping):
            names.extend(x for x in per_method.get(m, {}) if x not in names)
        metrics = names
    try:
        result = compare_methods(per_method, grouping, metrics, args.alpha).as_dict()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result["cutoff"] = int(cutoff)
    d = Path(args.out_dir) / "compare"
    _write_json(d / "compare.json", result)
    lines = ["metric,statistic,df,p_value,significant"]
    for m, t in result["tests"].items():
        lines.append(f"{m},,,," if t is None else
                     f"{m},{t['statistic']!r},{t['df']!r},{t['p_value']!r},{t['significant']}")
    (d / "compare.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(compare_table(result), end="")
    return EXIT_OK


COMMANDS = {"preprocess": cmd_preprocess, "stats": cmd_stats, "split": cmd_split,
            "baseline": cmd_baseline, "evaluate": cmd_evaluate, "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"kgaudit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, SplitConfigError, FileNotFoundError) as exc:
        print(f"kgaudit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"kgaudit: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InvariantError as exc:
        print(f"kgaudit: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"kgaudit: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
