"""``neuropathnet`` command line: synth, extract, train, eval, gradcheck, ablate, report, sweep-partitions.

Every numeric setting lives in one nested config (see ``docs/formats.md``).
Values are resolved with precedence command-line > config file > built-in
default, and the resolved table is printed to stderr at startup.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import gradcheck as gc
from .dfc import (
    WindowSpec,
    extract_paths,
    read_paths,
    read_timeseries,
    write_paths,
    write_timeseries,
)
from .errors import ConfigError, DataError, NeuroPathError
from .metrics import METRIC_NAMES, evaluate
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .partitions import load_scheme
from .synthgen import config_from_dict, generate, mixed_contrast, step_contrast
from .training import Dataset, TrainConfig, fit_full, run_cv

log = logging.getLogger("neuropathnet")

SCHEME_SWEEP = ("yeo7", "yeo17", "schaefer100_10")

# row label -> switches, cumulative in this order
ABLATION_ROWS = (
    ("PM", dict(use_path_encoder=True, use_global_fusion=False, use_multihead=False, use_temporal_pool=False)),
    ("PM+GE", dict(use_path_encoder=True, use_global_fusion=True, use_multihead=False, use_temporal_pool=False)),
    ("PM+GE+MHA", dict(use_path_encoder=True, use_global_fusion=True, use_multihead=True, use_temporal_pool=False)),
    ("PM+GE+MHA+TP", dict(use_path_encoder=True, use_global_fusion=True, use_multihead=True, use_temporal_pool=True)),
)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def default_config() -> dict:
    train = TrainConfig().to_dict()
    train.pop("seed")
    return {
        "seed": 0,
        "jobs": 1,
        "scheme": "yeo7",
        "window": {"window_length": 30, "stride": 15},
        "model": ModelConfig().to_dict(),
        "train": train,
        "synth": {
            "preset": "mixed_contrast",
            "gap": 1.0,
            "subjects_per_class": 100,
            "scan_length": 300,
            "noise_std": 1.0,
        },
    }


def _flatten(doc: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and k != "classes":
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _assign(doc: dict, dotted: str, value):
    parts = dotted.split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted!r}: {p!r} is not a section")
    node[parts[-1]] = value


def _merge(base: dict, over: dict, source: str, sources: dict, prefix: str = ""):
    for k, v in over.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and isinstance(base.get(k), dict) and k != "synth":
            _merge(base[k], v, source, sources, key + ".")
        elif isinstance(v, dict) and isinstance(base.get(k), dict):
            # a synth section given in full replaces the preset defaults
            if "classes" in v:
                base[k] = {}
            _merge(base[k], v, source, sources, key + ".")
        else:
            base[k] = v
            for fk in _flatten({k: v}, prefix):
                sources[fk] = source


def read_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {p} does not parse: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {p} must hold a mapping at top level")
    return doc


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    return key.strip(), value


def resolve_config(config_path=None, overrides=()) -> tuple[dict, dict]:
    """Merge defaults, an optional file and ``key=value`` overrides.

    Returns the resolved config and a map from dotted key to its source
    (``default``, ``file`` or ``cli``).
    """
    cfg = default_config()
    sources = {k: "default" for k in _flatten(cfg)}
    if config_path is not None:
        _merge(cfg, read_config_file(config_path), "file", sources)
    cli: dict = {}
    for key, value in overrides:
        _assign(cli, key, value)
    _merge(cfg, cli, "cli", sources)
    for section in ("train", "synth"):
        if "seed" in cfg.get(section, {}):
            raise ConfigError(f"{section}.seed is not accepted; set the top-level seed instead")
    known = set(default_config()) | {"data"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    # validate eagerly so bad values fail before any work starts
    window_spec(cfg)
    model_config(cfg)
    train_config(cfg)
    return cfg, sources


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def print_config(cfg: dict, sources: dict, stream=None):
    stream = stream or sys.stderr
    flat = _flatten(cfg)
    width = max(len(k) for k in flat)
    print("# resolved configuration (precedence: cli > file > default)", file=stream)
    for k in sorted(flat):
        print(f"#   {k:<{width}} = {json.dumps(flat[k], default=str)}  [{sources.get(k, 'default')}]", file=stream)


def window_spec(cfg: dict) -> WindowSpec:
    try:
        return WindowSpec(**cfg["window"])
    except TypeError as exc:
        raise ConfigError(f"bad window section: {exc}") from None


def model_config(cfg: dict) -> ModelConfig:
    return ModelConfig.from_dict(cfg["model"])


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig.from_dict({**cfg["train"], "seed": int(cfg["seed"])})


def synth_config(cfg: dict, scheme=None):
    doc = dict(cfg["synth"])
    scheme = scheme if scheme is not None else load_scheme(cfg["scheme"])
    seed = int(cfg["seed"])
    if "classes" in doc:
        doc.pop("preset", None)
        doc["scheme"] = scheme
        return config_from_dict({**doc, "seed": seed})
    preset = doc.pop("preset", "mixed_contrast")
    builders = {"mixed_contrast": mixed_contrast, "step_contrast": step_contrast}
    if preset not in builders:
        raise ConfigError(f"unknown synth preset {preset!r}; expected one of {sorted(builders)}")
    try:
        return builders[preset](scheme, seed=seed, **doc)
    except TypeError as exc:
        raise ConfigError(f"bad synth section for preset {preset!r}: {exc}") from None


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """Collects inputs and outputs; written as ``manifest.json`` in the output directory."""

    def __init__(self, command: str, cfg: dict, out_dir: Path):
        self.doc = {
            "command": command,
            "tool_version": __version__,
            "config_sha256": config_hash(cfg),
            "seed": cfg.get("seed"),
            "inputs": [],
            "outputs": [],
            "started": _now(),
        }
        self.out_dir = out_dir

    def input(self, path):
        self.doc["inputs"].append(str(path))

    def output(self, path):
        self.doc["outputs"].append(str(Path(path).relative_to(self.out_dir)))

    def write(self):
        self.doc["finished"] = _now()
        self.doc["outputs"] = sorted(set(self.doc["outputs"]))
        (self.out_dir / "manifest.json").write_text(json.dumps(self.doc, indent=2) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return repr(float(v))


def _sorted_csv(folder: Path) -> list[Path]:
    return sorted(p for p in folder.glob("*.csv"))


def list_timeseries(data_dir: Path) -> list[Path]:
    folder = data_dir / "timeseries" if (data_dir / "timeseries").is_dir() else data_dir
    files = _sorted_csv(folder)
    if not files:
        raise DataError(f"no time-series files found in {folder}")
    return files


def load_dataset(data_dir, cfg: dict, manifest: Manifest | None = None) -> Dataset:
    """Trajectories from ``<data>/paths`` (extract output), else extracted from ``<data>/timeseries``."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"data directory {data_dir} not found")
    if manifest is not None:
        manifest.input(data_dir)
    paths_dir = data_dir / "paths"
    if paths_dir.is_dir():
        files = _sorted_csv(paths_dir)
        if not files:
            raise DataError(f"no trajectory files found in {paths_dir}")
        return Dataset.from_pathsets([read_paths(f) for f in files])
    scheme = load_scheme(cfg["scheme"])
    spec = window_spec(cfg)
    sets = [extract_paths(read_timeseries(f), scheme, spec) for f in list_timeseries(data_dir)]
    return Dataset.from_pathsets(sets)


def _write_representations(path: Path, ids, labels, z: np.ndarray):
    header = ["subject_id", "label"] + [f"z{k}" for k in range(z.shape[1])]
    _write_csv(path, header, [[s, int(y)] + [_fmt(v) for v in row] for s, y, row in zip(ids, labels, z)])


def _write_predictions(path: Path, ids, labels, probs: np.ndarray, folds=None):
    header = ["subject_id", "label"] + (["fold"] if folds is not None else []) + [f"p{k}" for k in range(probs.shape[1])]
    rows = []
    for i, (s, y, p) in enumerate(zip(ids, labels, probs)):
        rows.append([s, int(y)] + ([folds[i]] if folds is not None else []) + [_fmt(v) for v in p])
    _write_csv(path, header, rows)


def read_representations(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"representation file {p} not found")
    with open(p, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0][:2] != ["subject_id", "label"]:
        raise DataError(f"{p}: expected header subject_id,label,z0,...")
    ids = [r[0] for r in rows[1:]]
    labels = np.array([int(r[1]) for r in rows[1:]], dtype=np.int64)
    z = np.array([[float(v) for v in r[2:]] for r in rows[1:]], dtype=np.float64)
    return ids, labels, z


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args, cfg) -> int:
    out = Path(args.out)
    ts_dir = out / "timeseries"
    ts_dir.mkdir(parents=True, exist_ok=True)
    man = Manifest("synth", cfg, out)
    scfg = synth_config(cfg)
    subjects = generate(scfg)
    for ts in subjects:
        f = ts_dir / f"{ts.subject_id}.csv"
        write_timeseries(ts, f)
        man.output(f)
    _write_csv(out / "labels.csv", ["subject_id", "label"], [[ts.subject_id, ts.label] for ts in subjects])
    man.output(out / "labels.csv")
    man.write()
    print(f"wrote {len(subjects)} subjects to {ts_dir}")
    return 0


def cmd_extract(args, cfg) -> int:
    data = Path(args.data)
    if not data.is_dir():
        raise DataError(f"data directory {data} not found")
    out = Path(args.out)
    paths_dir = out / "paths"
    paths_dir.mkdir(parents=True, exist_ok=True)
    man = Manifest("extract", cfg, out)
    man.input(data)
    scheme = load_scheme(cfg["scheme"])
    spec = window_spec(cfg)
    degenerate = 0
    files = list_timeseries(data)
    for f in files:
        ps = extract_paths(read_timeseries(f), scheme, spec)
        degenerate += ps.degenerate
        target = paths_dir / f"{ps.subject_id}.csv"
        write_paths(ps, target, spec, scheme.name)
        man.output(target)
    man.doc["degenerate_series"] = int(degenerate)
    man.write()
    print(f"extracted {scheme.n_paths} trajectories for each of {len(files)} subjects into {paths_dir}")
    if degenerate:
        print(f"note: {degenerate} zero-variance window series were assigned r = 0", file=sys.stderr)
    return 0


def _metrics_rows(cv) -> list[list[str]]:
    return cv.table()


def cmd_train(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("train", cfg, out)
    data = load_dataset(args.data or cfg.get("data"), cfg, man)
    mcfg, tcfg = model_config(cfg), train_config(cfg)
    t0 = time.perf_counter()
    cv = run_cv(data, mcfg, tcfg, jobs=int(cfg["jobs"]))
    table = _metrics_rows(cv)
    _write_csv(out / "metrics.csv", table[0], table[1:])
    man.output(out / "metrics.csv")
    ids, labels, probs, folds = [], [], [], []
    for f in cv.folds:
        ids += f.test_ids
        labels += f.test_labels.tolist()
        probs.append(f.test_probs)
        folds += [f.fold] * len(f.test_ids)
    _write_predictions(out / "cv_predictions.csv", ids, labels, np.concatenate(probs), folds)
    man.output(out / "cv_predictions.csv")

    final = fit_full(data, mcfg, tcfg)
    model = final.model
    train_probs = model.predict_proba(data.paths)
    train_metrics = evaluate(train_probs, data.labels)
    save_checkpoint(out / "model.ckpt", model, {"config_sha256": config_hash(cfg), "seed": cfg["seed"]})
    man.output(out / "model.ckpt")
    _write_representations(out / "representations.csv", data.ids, data.labels, model.representations(data.paths))
    man.output(out / "representations.csv")
    summary = {
        "config_sha256": config_hash(cfg),
        "seed": cfg["seed"],
        "config": cfg,
        "folds": cv.rows,
        "mean": cv.mean,
        "std": cv.std,
        "final_train_metrics": train_metrics,
        "final_train_losses": final.losses,
        "subjects": len(data),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    man.output(out / "summary.json")
    man.doc["elapsed_seconds"] = round(time.perf_counter() - t0, 3)
    man.write()
    print("CV " + "  ".join(f"{m}={cv.mean[m]:.4f}±{cv.std[m]:.4f}" for m in METRIC_NAMES))
    return 0


def cmd_eval(args, cfg) -> int:
    ckpt = Path(args.checkpoint)
    model, meta = load_checkpoint(ckpt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("eval", cfg, out)
    man.input(ckpt)
    data = load_dataset(args.data or cfg.get("data"), cfg, man)
    probs = model.predict_proba(data.paths)
    m = evaluate(probs, data.labels)
    _write_csv(out / "metrics.csv", list(METRIC_NAMES), [[_fmt(m[k]) for k in METRIC_NAMES]])
    man.output(out / "metrics.csv")
    _write_predictions(out / "predictions.csv", data.ids, data.labels, probs)
    man.output(out / "predictions.csv")
    _write_representations(out / "representations.csv", data.ids, data.labels, model.representations(data.paths))
    man.output(out / "representations.csv")
    man.write()
    print("  ".join(f"{k}={m[k]:.4f}" for k in METRIC_NAMES))
    return 0


def cmd_gradcheck(args, cfg) -> int:
    t0 = time.perf_counter()
    results = gc.run(seed=int(cfg["seed"]), n_communities=args.communities, windows=args.windows,
                     d=args.d, heads=args.heads, layers=args.layers)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<28} max_rel_err={r.max_rel_error:.3e}")
    worst = max(r.max_rel_error for r in results)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed; max relative error {worst:.3e} "
          f"(tolerance {gc.TOLERANCE:g}, h={gc.STEP:g})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        man = Manifest("gradcheck", cfg, out)
        _write_csv(out / "gradcheck.csv", ["check", "max_rel_error", "passed"],
                   [[r.name, _fmt(r.max_rel_error), int(r.passed)] for r in results])
        man.output(out / "gradcheck.csv")
        man.doc["elapsed_seconds"] = round(time.perf_counter() - t0, 3)
        man.write()
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return 3
    return 0


def _summary_row(label, cv) -> list[str]:
    return [label] + [_fmt(cv.mean[m]) for m in METRIC_NAMES] + [_fmt(cv.std[m]) for m in METRIC_NAMES]


SUMMARY_HEADER = [*METRIC_NAMES, *(f"{m}_std" for m in METRIC_NAMES)]


def cmd_ablate(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("ablate", cfg, out)
    data = load_dataset(args.data or cfg.get("data"), cfg, man)
    base, tcfg = model_config(cfg), train_config(cfg)
    rows = []
    for label, switches in ABLATION_ROWS:
        cv = run_cv(data, replace(base, **switches), tcfg, jobs=int(cfg["jobs"]))
        rows.append(_summary_row(label, cv))
        print(f"{label:<14} " + "  ".join(f"{m}={cv.mean[m]:.4f}" for m in METRIC_NAMES))
    _write_csv(out / "ablation.csv", ["modules", *SUMMARY_HEADER], rows)
    man.output(out / "ablation.csv")
    acc = [float(r[1]) for r in rows]
    monotone = all(b >= a for a, b in zip(acc, acc[1:]))
    man.doc["accuracy_monotone"] = monotone
    man.write()
    print(f"accuracy non-decreasing across rows: {monotone}")
    return 0


def cosine_similarity(z: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        raise DataError("a representation vector is all zeros; cosine similarity is undefined")
    u = z / norms[:, None]
    s = u @ u.T
    s = (s + s.T) / 2.0
    np.fill_diagonal(s, 1.0)
    return np.clip(s, -1.0, 1.0)


def class_similarity_summary(sim: np.ndarray, labels: np.ndarray) -> dict:
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(labels.size, dtype=bool)
    within = sim[same & off]
    between = sim[~same]
    return {
        "mean_within_class": float(within.mean()) if within.size else float("nan"),
        "mean_between_class": float(between.mean()) if between.size else float("nan"),
    }


def cmd_report(args, cfg) -> int:
    run = Path(args.run)
    src = run / "representations.csv"
    ids, labels, z = read_representations(src)
    order = np.argsort(labels, kind="stable")
    ids = [ids[i] for i in order]
    labels, z = labels[order], z[order]
    sim = cosine_similarity(z)
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("report", cfg, out)
    man.input(src)
    _write_csv(out / "similarity.csv", ["subject_id", "label", *ids],
               [[s, int(y)] + [_fmt(v) for v in row] for s, y, row in zip(ids, labels, sim)])
    man.output(out / "similarity.csv")
    summary = class_similarity_summary(sim, labels)
    summary["subjects"] = len(ids)
    (out / "similarity_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    man.output(out / "similarity_summary.json")
    man.write()
    print(f"within-class {summary['mean_within_class']:.4f}  between-class {summary['mean_between_class']:.4f}")
    return 0


def cmd_sweep(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("sweep-partitions", cfg, out)
    mcfg, tcfg = model_config(cfg), train_config(cfg)
    spec = window_spec(cfg)
    rows = []
    for name in args.schemes:
        scheme = load_scheme(name)
        subjects = generate(synth_config(cfg, scheme))
        data = Dataset.from_pathsets([extract_paths(ts, scheme, spec) for ts in subjects])
        cv = run_cv(data, mcfg, tcfg, jobs=int(cfg["jobs"]))
        rows.append([name, scheme.n_communities, scheme.n_paths] + _summary_row(name, cv)[1:])
        print(f"{name:<16} N={scheme.n_communities:<3} " + "  ".join(f"{m}={cv.mean[m]:.4f}" for m in METRIC_NAMES))
    _write_csv(out / "partitions.csv", ["scheme", "communities", "paths", *SUMMARY_HEADER], rows)
    man.output(out / "partitions.csv")
    man.write()
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML or JSON run config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config value, e.g. train.epochs=20 (repeatable)")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    p.add_argument("--jobs", type=int, help="maximum worker processes for cross-validation folds")
    p.add_argument("-q", "--quiet", action="store_true", help="do not print the resolved config")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neuropathnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"neuropathnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a labelled synthetic cohort")
    _common(p)
    p.add_argument("--scheme", help="bundled scheme name or scheme JSON path")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="compute community-pair trajectories")
    _common(p)
    p.add_argument("--data", required=True, help="directory of time-series CSV files")
    p.add_argument("--scheme")
    p.add_argument("--window-length", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="k-fold cross-validation plus a final model on all subjects")
    _common(p)
    p.add_argument("--data", help="extract output or synth output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op and the full model")
    _common(p)
    p.add_argument("--communities", type=int, default=3)
    p.add_argument("--windows", type=int, default=4)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="cumulative module ablation table (PM, +GE, +MHA, +TP)")
    _common(p)
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="cosine similarity matrix of learned subject representations")
    _common(p)
    p.add_argument("--run", required=True, help="train or eval output directory")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep-partitions", help="synthesise, extract and cross-validate per partition scheme")
    _common(p)
    p.add_argument("--schemes", nargs="+", default=list(SCHEME_SWEEP),
                   help=f"scheme names or files (default: {' '.join(SCHEME_SWEEP)})")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def _collect_overrides(args) -> list[tuple[str, object]]:
    pairs = [parse_override(s) for s in args.overrides]
    if args.seed is not None:
        pairs.append(("seed", args.seed))
    if args.jobs is not None:
        pairs.append(("jobs", args.jobs))
    if getattr(args, "scheme", None):
        pairs.append(("scheme", args.scheme))
    if getattr(args, "window_length", None) is not None:
        pairs.append(("window.window_length", args.window_length))
    if getattr(args, "stride", None) is not None:
        pairs.append(("window.stride", args.stride))
    return pairs


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, sources = resolve_config(args.config, _collect_overrides(args))
        if not args.quiet:
            print_config(cfg, sources)
        return args.func(args, copy.deepcopy(cfg))
    except NeuroPathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
