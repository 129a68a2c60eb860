"""Experiment runner: split, select, embed, classify, record.

Every (repetition, selector, k) triple yields one :class:`RunRecord`.
Records are appended to ``records.csv`` as soon as they are produced, a
``summary.csv`` aggregates them per (selector, k, classifier), and
``manifest.json`` stores the configuration that produced both.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import subprocess
import time
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import select_fft, select_forward, select_kcentres, select_random
from .dataset import Dataset, SplitSpec, generate_blobs, load_any, split_indices
from .dissim import CachedProvider, Measure, OnDemandProvider
from .dspace import classify_1nn, classify_ldc, embed, error_rate
from .fitness import FitnessContext
from .ga import GaParams, run_ga
from .hashing import build_pivot_table

log = logging.getLogger(__name__)

CLASSIFIERS = ("1nn", "ldc")
GA_SELECTORS = {
    "ga-mst": ("mst", False),
    "ga-mst-clust": ("mst", True),
    "ga-sup": ("supervised", False),
    "ga-sup-clust": ("supervised", True),
    "ga-sup-lsh": ("supervised_lsh", False),
    "ga-sup-lsh-clust": ("supervised_lsh", True),
}
GA_FIELDS = ("population_size", "reproduction_prob", "mutation_prob", "generations")
SELECTORS = ("random", "fft", "kcentres", "forward", *GA_SELECTORS)
PARAM_ALIASES = {
    "S": "population_size",
    "rp": "reproduction_prob",
    "mp": "mutation_prob",
    "iter": "generations",
    "p": "pivots",
}


@dataclass
class ExperimentConfig:
    data: str | None = None
    blobs: str | None = "10,300,5,0.6,0"
    label_column: str = "label"
    measure: str = "euclidean"
    validation_fraction: float = 0.6
    train_fraction: float = 0.2
    test_fraction: float = 0.2
    overlap: bool = False
    selectors: list[str] = field(default_factory=lambda: ["random", "ga-sup"])
    k_list: list[int] = field(default_factory=lambda: [10, 20, 30, 40])
    repetitions: int = 10
    classifiers: list[str] = field(default_factory=lambda: ["1nn", "ldc"])
    output_dir: str | None = "results"
    seed: int | None = None
    population_size: int = 20
    reproduction_prob: float = 0.5
    mutation_prob: float = 0.02
    generations: int = 20
    pivots: int = 64
    pivot_rounds: int = 16
    kcentres_max_iters: int = 50
    ldc_reg: float | None = None
    cache_size: int = 0

    def validate(self) -> None:
        if not self.selectors or not self.k_list or not self.classifiers:
            raise ValueError("need at least one selector, one k and one classifier")
        for spec in self.selectors:
            parse_selector(spec)
        for c in self.classifiers:
            if c not in CLASSIFIERS:
                raise ValueError(f"unknown classifier {c!r}; expected one of {CLASSIFIERS}")
        if any(k < 1 for k in self.k_list):
            raise ValueError("every k must be >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.seed is None or self.seed < 0:
            raise ValueError("an unsigned master seed is required")
        if (self.data is None) == (self.blobs is None):
            raise ValueError("exactly one of data / blobs must be given")
        if self.test_fraction <= 0:
            raise ValueError("test_fraction must be > 0 to measure errors")
        if self.train_fraction <= 0 and not self.overlap:
            raise ValueError("train_fraction must be > 0 unless overlap is set")
        Measure.parse(self.measure)


def parse_selector(spec: str) -> tuple[str, dict]:
    """``"ga-sup(mp=0.1,iter=25)"`` -> ``("ga-sup", {"mutation_prob": 0.1, "generations": 25})``."""
    m = re.fullmatch(r"\s*([\w-]+)\s*(?:\((.*)\))?\s*", spec)
    if not m or m.group(1) not in SELECTORS:
        raise ValueError(f"unknown selector {spec!r}; expected one of {SELECTORS}")
    params = {}
    if m.group(2):
        for item in m.group(2).split(","):
            key, _, value = item.partition("=")
            key = PARAM_ALIASES.get(key.strip(), key.strip())
            params[key] = _number(value.strip())
    return m.group(1), params


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


@dataclass
class RunRecord:
    selector: str
    k: int
    repetition: int
    seed: int
    status: str = "ok"
    message: str = ""
    indices: list[int] = field(default_factory=list)
    fitness_trace: list[float] = field(default_factory=list)
    selection_s: float = 0.0
    embedding_s: float = 0.0
    classification_s: float = 0.0
    errors: dict[str, float] = field(default_factory=dict)
    evals: int = 0

    def row(self, classifiers) -> dict:
        out = {
            "selector": self.selector,
            "k": self.k,
            "repetition": self.repetition,
            "seed": self.seed,
            "status": self.status,
            "message": self.message,
            "indices": " ".join(str(i) for i in self.indices),
            "fitness_trace": " ".join(repr(float(v)) for v in self.fitness_trace),
            "selection_s": f"{self.selection_s:.6f}",
            "embedding_s": f"{self.embedding_s:.6f}",
            "classification_s": f"{self.classification_s:.6f}",
            "evals": self.evals,
        }
        for c in classifiers:
            value = self.errors.get(c)
            out[f"error_{c}"] = "" if value is None else repr(float(value))
        return out


def record_columns(classifiers) -> list[str]:
    base = list(RunRecord("", 0, 0, 0).row([]))
    return base + [f"error_{c}" for c in classifiers]


def derive_seed(master: int, *parts) -> int:
    """Stable 32-bit seed for a named sub-task of the sweep."""
    words = [master] + [p if isinstance(p, int) else zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.data is not None:
        return load_any(cfg.data, cfg.label_column)
    classes, per_class, q, spread, seed = cfg.blobs.split(",")
    return generate_blobs(int(classes), int(per_class), int(q), float(spread), int(seed))


def _make_provider(ds: Dataset, cfg: ExperimentConfig):
    measure = Measure.parse(cfg.measure)
    if cfg.cache_size > 0:
        return CachedProvider(ds, measure, capacity=cfg.cache_size)
    return OnDemandProvider(ds, measure)


def select(name: str, overrides: dict, ctx: FitnessContext, candidates, k: int, seed: int, cfg: ExperimentConfig):
    """Run one named selector; returns a PrototypeSet."""
    if name == "random":
        return select_random(candidates, k, seed)
    if name == "fft":
        return select_fft(ctx.provider, candidates, k, seed)
    if name == "kcentres":
        iters = int(overrides.get("max_iters", cfg.kcentres_max_iters))
        return select_kcentres(ctx.provider, candidates, k, seed, iters)
    if name == "forward":
        return select_forward(ctx, candidates, k)
    fitness, clustering = GA_SELECTORS[name]
    values = {name: getattr(cfg, name) for name in GA_FIELDS}
    values.update({key: v for key, v in overrides.items() if key in values})
    params = GaParams(**values, use_clustering=clustering, seed=seed)
    if fitness == "supervised_lsh":
        p = int(overrides.get("pivots", cfg.pivots))
        table = build_pivot_table(
            ctx.provider, candidates, p=p, seed=derive_seed(seed, "pivots"),
            max_rounds=cfg.pivot_rounds, objects=np.union1d(candidates, ctx.validation_indices),
        )
        ctx = FitnessContext(ctx.provider, ctx.validation_indices, ctx.validation_labels, table, ctx.labels)
    return run_ga(ctx, fitness, params, candidates, k)


def run_one(ds, provider, parts, cfg, name, overrides, k, rep, seed) -> RunRecord:
    validation, train, test = parts
    rec = RunRecord(name if not overrides else f"{name}{_fmt(overrides)}", k, rep, seed)
    ctx = FitnessContext(provider, validation, ds.labels[validation], labels=ds.labels)
    try:
        before = provider.eval_count
        t0 = time.perf_counter()
        protos = select(name, overrides, ctx, validation, k, seed, cfg)
        rec.selection_s = time.perf_counter() - t0
        rec.evals = provider.eval_count - before
        rec.indices = protos.indices.tolist()
        rec.fitness_trace = list(protos.fitness_trace or [])

        t0 = time.perf_counter()
        train_emb = embed(provider, train, protos)
        test_emb = embed(provider, test, protos)
        rec.embedding_s = time.perf_counter() - t0

        t0 = time.perf_counter()
        for c in cfg.classifiers:
            if c == "1nn":
                pred = classify_1nn(train_emb, ds.labels[train], test_emb)
            else:
                pred = classify_ldc(train_emb, ds.labels[train], test_emb, cfg.ldc_reg)
            rec.errors[c] = error_rate(pred, ds.labels[test])
        rec.classification_s = time.perf_counter() - t0
    except Exception as exc:  # recorded per record; the sweep continues
        log.warning("selector %s k=%d rep=%d failed: %s", name, k, rep, exc)
        rec.status = "error"
        rec.message = f"{type(exc).__name__}: {exc}"
    return rec


def _fmt(overrides: dict) -> str:
    inv = {v: key for key, v in PARAM_ALIASES.items()}
    return "(" + ",".join(f"{inv.get(key, key)}={v}" for key, v in overrides.items()) + ")"


def run_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    """Run the full sweep; writes records incrementally when ``output_dir`` is set."""
    cfg.validate()
    ds = load_dataset(cfg)
    selectors = [parse_selector(s) for s in cfg.selectors]
    out_dir = Path(cfg.output_dir) if cfg.output_dir else None
    writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(cfg, ds, out_dir / "manifest.json")
        fh = (out_dir / "records.csv").open("w", newline="", encoding="utf-8")
        writer = csv.DictWriter(fh, fieldnames=record_columns(cfg.classifiers))
        writer.writeheader()
        fh.flush()

    records = []
    try:
        for rep in range(cfg.repetitions):
            spec = SplitSpec(cfg.validation_fraction, cfg.train_fraction, cfg.test_fraction,
                             seed=derive_seed(cfg.seed, rep, "split"))
            validation, train, test = split_indices(ds.labels, spec)
            if cfg.overlap:
                train = np.union1d(train, validation)
            provider = _make_provider(ds, cfg)
            for name, overrides in selectors:
                for k in cfg.k_list:
                    seed = derive_seed(cfg.seed, rep, name, k)
                    rec = run_one(ds, provider, (validation, train, test), cfg, name, overrides, k, rep, seed)
                    records.append(rec)
                    if writer is not None:
                        writer.writerow(rec.row(cfg.classifiers))
                        fh.flush()
    finally:
        if writer is not None:
            fh.close()
    if out_dir is not None:
        write_summary(summarize(records, cfg.classifiers), out_dir / "summary.csv")
    return records


def summarize(records, classifiers=CLASSIFIERS) -> list[dict]:
    """Mean and sample standard deviation of errors per (selector, k, classifier).

    Failed records are excluded from the statistics and counted in
    ``failures``.
    """
    if not records:
        raise ValueError("no records to summarize")
    groups: dict[tuple[str, int], list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.selector, rec.k), []).append(rec)
    rows = []
    for (selector, k), recs in groups.items():
        ok = [r for r in recs if r.status == "ok"]
        for c in classifiers:
            errs = np.array([r.errors[c] for r in ok if c in r.errors], dtype=np.float64)
            rows.append({
                "selector": selector,
                "k": k,
                "classifier": c,
                "runs": int(errs.size),
                "failures": len(recs) - len(ok),
                "mean_error": float(errs.mean()) if errs.size else float("nan"),
                "sd_error": float(errs.std(ddof=1)) if errs.size > 1 else 0.0,
                "mean_selection_s": float(np.mean([r.selection_s for r in ok])) if ok else float("nan"),
                "mean_evals": float(np.mean([r.evals for r in ok])) if ok else float("nan"),
            })
    return rows


def write_summary(rows, path) -> None:
    cols = ["selector", "k", "classifier", "runs", "failures", "mean_error", "sd_error",
            "mean_selection_s", "mean_evals"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: (repr(v) if isinstance(v, float) else v) for key, v in row.items()})


def read_records(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def source_revision() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).parent,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"protosel-{__version__}" + (f"+g{rev}" if rev else "")


def write_manifest(cfg: ExperimentConfig, ds: Dataset, path) -> None:
    doc = {
        "config": asdict(cfg),
        "revision": source_revision(),
        "dataset": {"n": ds.n, "q": ds.q, "classes": len(ds.classes), "revision": ds.revision},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# flat key = value config files


def read_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Overlay ``key = value`` lines onto ``base`` (defaults if omitted).

    Lists are comma separated, except ``selectors`` which is separated by
    ``;`` since selector parameters use commas. Blank lines and ``#``
    comments are ignored; ``none`` clears an optional value.
    """
    cfg = base or ExperimentConfig()
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in types:
            raise ValueError(f"{path}:{lineno}: unknown or malformed entry {line!r}")
        setattr(cfg, key, coerce(key, types[key], value))
    return cfg


def coerce(key: str, type_name: str, value: str):
    if value.lower() == "none" and "None" in str(type_name):
        return None
    t = str(type_name)
    if key == "selectors":
        return [s.strip() for s in value.split(";") if s.strip()]
    if t.startswith("list[int]"):
        return [int(v) for v in value.split(",") if v.strip()]
    if t.startswith("list[str]"):
        return [v.strip() for v in value.split(",") if v.strip()]
    if t.startswith("bool"):
        if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{key}: expected a boolean, got {value!r}")
        return value.lower() in ("true", "1", "yes")
    if t.startswith("int"):
        return int(value)
    if t.startswith("float"):
        return float(value)
    return value


# ---------------------------------------------------------------------------
# scaling probe


def generation_time(n: int, k: int = 10, q: int = 32, generations: int = 20, seed: int = 0) -> float:
    """Mean wall-clock seconds per generation of GA-MST without clustering on ``|V| = n``."""
    ds = generate_blobs(10, max(1, n // 10), q, 0.5, seed)
    provider = OnDemandProvider(ds)
    v = np.arange(ds.n)
    ctx = FitnessContext(provider, v, ds.labels, labels=ds.labels)
    marks = {}

    def stamp(gen, *_):
        marks[gen] = time.perf_counter()

    run_ga(ctx, "mst", GaParams(generations=generations, seed=seed), v, k, callback=stamp)
    return (marks[generations] - marks[0]) / generations


def scaling_ratio(n: int, trials: int = 5, **kwargs) -> float:
    """Median per-generation time at ``2n`` divided by that at ``n``."""
    small = [generation_time(n, seed=t, **kwargs) for t in range(trials)]
    large = [generation_time(2 * n, seed=t, **kwargs) for t in range(trials)]
    return float(np.median(large) / np.median(small))
