"""``noisytree`` command line: simulate, corrupt, estimate, recover, experiment, rf.

Exit status is 0 on success, 2 for configuration problems (bad flags,
unreadable or invalid spec files) and 3 for failures while running.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io as nio
from .bench import ExperimentSpec, run_experiment, write_outputs
from .errors import ConfigError, NoisyTreeError
from .metrics import distance_matrix_empirical, distance_matrix_exact
from .models import corrupt, sample
from .recovery import RecoveryConfig, recover
from .tree import _split_masks, robinson_foulds, semi_labeled_equal, suppress_degree_two

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
U64 = 2**64


class _ConfigFailure(Exception):
    pass


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be an integer")
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("must be an integer")
    if v < 1:
        raise argparse.ArgumentTypeError("must be ≥ 1")
    return v


def _load_json(path, what):
    if path is None:
        raise _ConfigFailure(f"--spec is required for {what}")
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise _ConfigFailure(f"cannot read {what} file {path}: {exc.strerror}")
    except json.JSONDecodeError as exc:
        raise _ConfigFailure(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})")


def _configured(fn, *args):
    """Run a parsing step, turning its failures into configuration errors."""
    try:
        return fn(*args)
    except (ConfigError, _ConfigFailure):
        raise
    except OSError as exc:
        raise _ConfigFailure(f"cannot read {exc.filename}: {exc.strerror}")
    except (KeyError, TypeError, ValueError) as exc:
        raise _ConfigFailure(f"invalid input: {exc}")


def _out_dir(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_data(path):
    """A sample batch or a distance matrix, judged from the header."""
    p = Path(path)
    if p.suffix in (".phy", ".phylip"):
        return nio.distances_from_phylip(p.read_text())
    first = p.read_text().split("\n", 1)[0]
    if first.startswith(","):
        return nio.distances_from_csv(p.read_text())
    return nio.read_batch(p)


def _write_distances(D, out, fmt):
    if fmt == "json":
        path = out / "distances.json"
        path.write_text(json.dumps({
            "labels": list(D.labels),
            "values": D.values.tolist(),
            "provenance": D.provenance,
            "flags": sorted([list(f) for f in D.flags]),
            "noisy_offset": D.noisy_offset,
        }, indent=1))
    else:
        path = out / "distances.csv"
        path.write_text(nio.distances_to_csv(D))
    (out / "distances.phy").write_text(nio.distances_to_phylip(D))
    return path


# ---------------------------------------------------------------- commands


def cmd_simulate(args):
    raw = _load_json(args.spec, "model")
    model = _configured(nio.model_from_dict, raw)
    batch = sample(model, args.sample_size or 1000, args.seed)
    out = _out_dir(args)
    nio.write_batch(batch, out / "clean.csv")
    print(out / "clean.csv")


def cmd_corrupt(args):
    raw = _load_json(args.spec, "noise")
    batch = _configured(nio.read_batch, args.input)
    noise = _configured(nio.noise_from_dict, raw, batch.labels, batch.r)
    noisy = corrupt(batch, noise, args.seed)
    out = _out_dir(args)
    nio.write_batch(noisy, out / "noisy.csv")
    print(out / "noisy.csv")


def cmd_estimate(args):
    if args.exact:
        raw = _load_json(args.spec, "model")
        model = _configured(nio.model_from_dict, raw)
        noise = None
        if "noise" in raw:
            noise = _configured(nio.noise_from_dict, raw["noise"], model.tree.nodes,
                                getattr(model, "r", None))
        D = distance_matrix_exact(model, noise)
    else:
        if args.input is None:
            raise _ConfigFailure("estimate needs an input batch or --exact with --spec")
        D = distance_matrix_empirical(_configured(nio.read_batch, args.input))
    print(_write_distances(D, _out_dir(args), args.format))


def cmd_recover(args):
    conf = {}
    if args.spec:
        conf = _load_json(args.spec, "recovery")
    config = _configured(lambda c: RecoveryConfig(**c), conf)
    data = _configured(_read_data, args.input)
    reference = _configured(nio.read_tree, args.reference) if args.reference else None
    result = recover(data, config, reference)
    out = _out_dir(args)
    tree = result.tree.underlying
    (out / "tbar_e.nwk").write_text(nio.to_newick(tree) + "\n")
    payload = {
        "tbar_e": nio.tree_to_dict(tree),
        "shrunk_edges": [list(e) for e in result.shrunk_edges],
        "tstar": nio.tree_to_dict(result.tstar) if result.tstar is not None else None,
        "diagnostics": result.diagnostics,
    }
    if result.tstar is not None:
        (out / "tstar.nwk").write_text(nio.to_newick(result.tstar) + "\n")
    (out / "result.json").write_text(json.dumps(payload, indent=1, default=_jsonable))
    print(nio.to_newick(result.tstar if result.tstar is not None else tree))


def _jsonable(x):
    if isinstance(x, (set, frozenset, tuple)):
        return sorted(x) if isinstance(x, (set, frozenset)) else list(x)
    if hasattr(x, "item"):
        return x.item()
    raise TypeError(type(x).__name__)


def cmd_experiment(args):
    raw = _load_json(args.spec, "experiment")
    if not isinstance(raw, dict):
        raise ConfigError("$", "experiment spec must be a JSON object")
    for flag, key in (("seed", "seed"), ("replicates", "replicates"), ("sample_size", "sample_size")):
        if getattr(args, flag) is not None:
            raw[key] = getattr(args, flag)
    if args.exact:
        raw["exact"] = True
    spec = _configured(ExperimentSpec.from_dict, raw)
    rows = list(run_experiment(spec))
    paths = write_outputs(spec, rows, _out_dir(args), args.format)
    print(f"{len(rows)} rows -> {paths['rows']}")


def cmd_rf(args):
    a = _configured(nio.read_tree, args.tree_a)
    b = _configured(nio.read_tree, args.tree_b)
    if args.no_suppress:
        sa, sb = a, b
    else:
        sa, sb = suppress_degree_two(a), suppress_degree_two(b)
    diff, total = robinson_foulds(sa, sb)
    _, ma = _split_masks(sa)
    _, mb = _split_masks(sb)
    rf = diff / total if total else 0.0
    equal = semi_labeled_equal(sa, sb)
    report = {
        "rf_normalized": rf,
        "shared_splits": len(ma & mb),
        "unique_a": len(ma - mb),
        "unique_b": len(mb - ma),
        "semi_labeled_equal": equal,
    }
    if args.format == "json":
        print(json.dumps(report))
    else:
        print("rf_normalized,shared_splits,unique_a,unique_b,semi_labeled_equal")
        print(f"{rf:.6g},{report['shared_splits']},{report['unique_a']},{report['unique_b']},{equal}")


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="JSON specification file")
    common.add_argument("--seed", type=_seed, default=None, help="base seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = argparse.ArgumentParser(prog="noisytree", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="sample a clean batch from a model file")
    s.add_argument("--sample-size", type=_positive, default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("corrupt", parents=[common], help="corrupt a batch with a noise file")
    s.add_argument("input")
    s.set_defaults(func=cmd_corrupt)

    s = sub.add_parser("estimate", parents=[common], help="distance matrix from a batch or a model")
    s.add_argument("input", nargs="?")
    s.add_argument("--exact", action="store_true", help="use exact model distances")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("recover", parents=[common], help="recover the tree from a batch or distances")
    s.add_argument("input")
    s.add_argument("--reference", help="true tree, for diagnostics")
    s.set_defaults(func=cmd_recover)

    s = sub.add_parser("experiment", parents=[common], help="run a replicate grid")
    s.add_argument("--exact", action="store_true")
    s.add_argument("--replicates", type=_positive, default=None)
    s.add_argument("--sample-size", type=_positive, default=None)
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("rf", parents=[common], help="compare two trees")
    s.add_argument("tree_a")
    s.add_argument("tree_b")
    s.add_argument("--no-suppress", action="store_true", help="compare without suppressing degree-2 nodes")
    s.set_defaults(func=cmd_rf)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _ConfigFailure as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoisyTreeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
