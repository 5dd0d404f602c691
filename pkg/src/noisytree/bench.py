"""Simulation harness: sweep noise levels, replicate, score, aggregate.

Each replicate of a sweep cell draws its randomness from
``SeedSequence(seed, spawn_key=(cell, replicate))``, so any subset of
replicates can be run in any order (or in parallel) and reproduce exactly.
All ε levels of a replicate are scored on the same reconstructed tree.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NotReducible
from .metrics import distance_matrix_empirical, distance_matrix_exact
from .models import (
    BetaChannel,
    CorruptionSpec,
    IsingParams,
    corrupt,
    flip_for_length,
    from_symmetric,
    gaussian_for_length,
    ising_to_discrete,
    linear_from_correlations,
    sample,
)
from .recovery import (
    _neighbor_joining,
    extract_tstar_with_ties,
    refit_terminal_lengths,
    leaf_errors,
    shrink_edges_with_log,
    shrink_to_binary_prior_with_log,
)
from .tree import (
    LabeledTree,
    robinson_foulds_normalized,
    semi_labeled_equal,
    suppressed_augmented,
    validate_tree,
)

THREADS_ENV = "NOISY_TREE_THREADS"
BINARY = "binary"

PRESETS = {
    "chain8": validate_tree(range(1, 9), [(i, i + 1) for i in range(1, 8)]),
    "binary10": validate_tree(
        range(1, 11),
        [(1, 2), (1, 3), (1, 4), (4, 5), (4, 8), (5, 6), (5, 7), (8, 9), (8, 10)],
    ),
    "star8": validate_tree(range(1, 9), [(1, i) for i in range(2, 9)]),
}

MODEL_KINDS = ("symmetric", "ising", "gaussian", "beta")
ROW_FIELDS = [
    "tree", "model", "r", "sweep_param", "sweep_value", "epsilon", "replicate",
    "seed", "rf_normalized", "tbar_e_exact", "tstar_exact", "leaf_errors",
    "n_shrunk", "degenerate_flags",
]


def preset(name: str) -> LabeledTree:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError("tree", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one experiment grid."""

    tree: object = "binary10"
    model: dict = field(default_factory=lambda: {"kind": "symmetric", "r": 2, "theta": 0.2})
    sweep: list = field(default_factory=lambda: [0.5])
    epsilons: list = field(default_factory=lambda: [0.5])
    replicates: int = 50
    sample_size: int = 5000
    seed: int = 0
    targets: list = field(default_factory=lambda: ["tbar_e", "tstar"])
    binary_prior: bool = False
    exact: bool = False

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        if not isinstance(raw, dict):
            raise ConfigError("$", "experiment spec must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        spec = cls(**raw)
        spec.validate()
        return spec

    def validate(self):
        self.tree_obj()
        kind = self.model.get("kind") if isinstance(self.model, dict) else None
        if kind not in MODEL_KINDS:
            raise ConfigError("model.kind", f"must be one of {MODEL_KINDS}")
        if kind == "symmetric":
            r = self.model.get("r", 2)
            th = self.model.get("theta", 0.2)
            if not isinstance(r, int) or r < 2:
                raise ConfigError("model.r", "must be an integer ≥ 2")
            if not 0 < th < 1 / r:
                raise ConfigError("model.theta", f"must lie in (0, 1/{r})")
        if kind == "beta":
            th = self.model.get("theta", 0.2)
            if not 0 < th < 0.5:
                raise ConfigError("model.theta", "must lie in (0, 1/2)")
        if kind == "gaussian":
            rho = self.model.get("rho", math.exp(-0.5))
            if not 0 < abs(rho) < 1:
                raise ConfigError("model.rho", "must lie in (-1, 1) without 0")
        if not isinstance(self.sweep, list) or not self.sweep:
            raise ConfigError("sweep", "must be a nonempty list")
        for k, v in enumerate(self.sweep):
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"sweep[{k}]", "must be positive")
        if not isinstance(self.epsilons, list):
            raise ConfigError("epsilons", "must be a list")
        for k, e in enumerate(self.epsilons):
            if e != BINARY and (not isinstance(e, (int, float)) or e < 0 or not math.isfinite(e)):
                raise ConfigError(f"epsilons[{k}]", f"must be ≥ 0 or {BINARY!r}")
        if not self.levels():
            raise ConfigError("epsilons", "no shrinking level selected")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError("replicates", "must be an integer ≥ 1")
        if not isinstance(self.sample_size, int) or self.sample_size < 1:
            raise ConfigError("sample_size", "must be an integer ≥ 1")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        for k, t in enumerate(self.targets):
            if t not in ("tbar_e", "tstar"):
                raise ConfigError(f"targets[{k}]", "must be 'tbar_e' or 'tstar'")

    def tree_obj(self) -> LabeledTree:
        if isinstance(self.tree, str):
            if self.tree in PRESETS:
                return PRESETS[self.tree]
            path = Path(self.tree)
            if path.exists():
                from .io import read_tree
                return read_tree(path)
            raise ConfigError("tree", f"unknown preset or file {self.tree!r}")
        if isinstance(self.tree, dict):
            from .io import tree_from_dict
            try:
                return tree_from_dict(self.tree)
            except Exception as exc:
                raise ConfigError("tree", str(exc))
        raise ConfigError("tree", "must be a preset name, a file path, or a JSON tree")

    @property
    def tree_name(self) -> str:
        return self.tree if isinstance(self.tree, str) else "custom"

    @property
    def sweep_param(self) -> str:
        return "a" if self.model["kind"] == "beta" else "ell"

    def levels(self) -> list:
        out = list(self.epsilons)
        if self.binary_prior and BINARY not in out:
            out.append(BINARY)
        return out


def build_models(spec: ExperimentSpec, value: float):
    """Clean model and corruption spec for one sweep value."""
    tree = spec.tree_obj()
    m = spec.model
    kind = m["kind"]
    if kind == "symmetric":
        r = m.get("r", 2)
        clean = from_symmetric(tree, r, m.get("theta", 0.2))
        return clean, CorruptionSpec.uniform(tree.nodes, flip_for_length(value, r))
    if kind == "ising":
        params = IsingParams(
            tree,
            {v: m.get("h", 0.0) for v in tree.nodes},
            {e: m.get("beta", 0.5) for e in tree.edges},
            encoding=m.get("encoding", "spin"),
        )
        clean = ising_to_discrete(params)
        marg = clean.marginals()
        return clean, CorruptionSpec({v: flip_for_length(value, 2, marg[v]) for v in tree.nodes})
    if kind == "gaussian":
        clean = linear_from_correlations(tree, m.get("rho", math.exp(-0.5)))
        var = clean.variances()
        return clean, CorruptionSpec({v: gaussian_for_length(value, var[v]) for v in tree.nodes})
    if kind == "beta":
        clean = from_symmetric(tree, 2, m.get("theta", 0.2))
        return clean, CorruptionSpec.uniform(tree.nodes, BetaChannel.symmetric(value))
    raise ConfigError("model.kind", f"unknown model kind {kind!r}")


def _replicate_seed(base: int, cell: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(base, spawn_key=(cell, rep))


def _estimate(spec, clean, noise, cell, rep):
    if spec.exact:
        return distance_matrix_exact(clean, noise)
    s_sample, s_noise = _replicate_seed(spec.seed, cell, rep).spawn(2)
    noisy = corrupt(sample(clean, spec.sample_size, s_sample), noise, s_noise)
    return distance_matrix_empirical(noisy)


def _run_cell(args):
    spec, cell = args
    value = spec.sweep[cell]
    tree = spec.tree_obj()
    clean, noise = build_models(spec, value)
    r = getattr(clean, "r", None) or 1
    rows = []
    for rep in range(spec.replicates):
        D = _estimate(spec, clean, noise, cell, rep)
        offset = D.noisy_offset
        reference = suppressed_augmented(tree, offset=offset)
        raw, _ = _neighbor_joining(D)
        for eps in spec.levels():
            row = {
                "tree": spec.tree_name,
                "model": spec.model["kind"],
                "r": r,
                "sweep_param": spec.sweep_param,
                "sweep_value": value,
                "epsilon": eps,
                "replicate": rep,
                "seed": f"{spec.seed}:{cell}:{rep}",
                "degenerate_flags": len(D.flags),
            }
            try:
                if eps == BINARY:
                    shrunk, log = shrink_to_binary_prior_with_log(raw)
                else:
                    shrunk, log = shrink_edges_with_log(raw, eps)
            except NotReducible:
                shrunk, log = raw, None
            row["n_shrunk"] = -1 if log is None else len(log)
            row["rf_normalized"] = robinson_foulds_normalized(shrunk, reference)
            row["tbar_e_exact"] = semi_labeled_equal(shrunk, reference)
            if "tstar" in spec.targets:
                try:
                    tstar, _ = extract_tstar_with_ties(refit_terminal_lengths(shrunk, D), offset)
                    row["tstar_exact"] = tstar == tree
                    row["leaf_errors"] = leaf_errors(tstar, tree)
                except NotReducible:
                    row["tstar_exact"] = False
                    row["leaf_errors"] = len(tree.leaves)
            else:
                row["tstar_exact"] = ""
                row["leaf_errors"] = ""
            rows.append(row)
    return rows


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(spec: ExperimentSpec):
    """Yield one row per (sweep value, ε level, replicate), in canonical order."""
    spec.validate()
    tasks = [(spec, cell) for cell in range(len(spec.sweep))]
    workers = min(_threads(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rows in pool.map(_run_cell, tasks):
                yield from _canonical(rows, spec)
    else:
        for task in tasks:
            yield from _canonical(_run_cell(task), spec)


def _canonical(rows, spec):
    levels = spec.levels()
    return sorted(rows, key=lambda r: (levels.index(r["epsilon"]), r["replicate"]))


def aggregate(rows, spec: ExperimentSpec | None = None) -> list:
    """Mean/stddev of RF and recovery rates per (sweep value, ε) cell."""
    cells = {}
    for row in rows:
        cells.setdefault((row["sweep_value"], row["epsilon"]), []).append(row)
    out = []
    for (value, eps), group in cells.items():
        rf = [g["rf_normalized"] for g in group]
        ok_bar = [g["tbar_e_exact"] for g in group]
        rec = {
            "tree": group[0]["tree"],
            "model": group[0]["model"],
            "r": group[0]["r"],
            "sweep_param": group[0]["sweep_param"],
            "sweep_value": value,
            "epsilon": eps,
            "replicates": len(group),
            "rf_mean": statistics.fmean(rf),
            "rf_std": statistics.pstdev(rf) if len(rf) > 1 else 0.0,
            "tbar_e_rate": statistics.fmean(ok_bar),
        }
        if group[0]["tstar_exact"] != "":
            ok = [g["tstar_exact"] for g in group]
            rec["tstar_rate"] = statistics.fmean(ok)
            given = [g["tstar_exact"] for g in group if g["tbar_e_exact"]]
            rec["tstar_rate_given_tbar_e"] = statistics.fmean(given) if given else float("nan")
        out.append(rec)
    return out


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, fields=None) -> str:
    rows = list(rows)
    fields = fields or (list(rows[0]) if rows else ROW_FIELDS)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([_fmt(row.get(f, "")) for f in fields])
    return buf.getvalue()


def write_outputs(spec: ExperimentSpec, rows, out_dir, fmt: str = "csv") -> dict:
    """Write long rows, aggregated cells and a manifest; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    agg = aggregate(rows, spec)
    paths = {}
    if fmt == "csv":
        paths["rows"] = out / "rows.csv"
        paths["rows"].write_text(rows_to_csv(rows, ROW_FIELDS))
        paths["aggregate"] = out / "aggregate.csv"
        paths["aggregate"].write_text(rows_to_csv(agg))
    else:
        paths["rows"] = out / "rows.json"
        paths["rows"].write_text(json.dumps(rows, indent=1, sort_keys=True))
        paths["aggregate"] = out / "aggregate.json"
        paths["aggregate"].write_text(json.dumps(agg, indent=1, sort_keys=True))
    from . import __version__
    manifest = {
        "spec": asdict(spec),
        "row_count": len(rows),
        "seeding": "SeedSequence(seed, spawn_key=(cell, replicate))",
        "versions": {"noisytree": __version__, "numpy": np.__version__},
    }
    paths["manifest"] = out / "manifest.json"
    paths["manifest"].write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return paths
