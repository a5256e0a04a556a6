"""Cached pipeline stages: ingest, biosignals, features, train, evaluate, report.

Every artifact lives under the cache directory next to a ``.prov.json`` sidecar
recording the config hash, registry version, seed and upstream hashes. Stage
outputs are keyed by a hash of their inputs, so an unchanged rerun is a cache hit.
"""
from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .dsp import Signal
from .emd import BIOSIGNAL_NAMES, BiosignalSet, EmdConfig, SiftConfig, derive_biosignals
from .evaluation import DEFAULT_MODEL, EvalConfig, EvalReport, render_report, run_task
from .features.basic import WindowPlan
from .features.extract import (
    build_registry,
    extract_feature_matrix,
    read_feature_csv,
    write_feature_csv,
)
from .ingest import (
    Diagnosis,
    Sex,
    SubjectRecord,
    TaskSpec,
    assemble_dataset,
    load_recording,
    manifest_text,
    subject_target,
)
from .models import (
    FeatureMatrix,
    ForestConfig,
    GbmConfig,
    clip_and_standardize,
    impute_missing,
    serialize,
    train_gradient_boosting,
    train_random_forest,
)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    working_rate: float = 4000.0
    window_length_s: float = 10.0
    window_step_s: float = 1.0
    emd: dict = field(default_factory=dict)      # EmdConfig overrides
    registry_version: str = "v1"
    tasks: tuple = ("binary_healthy",)
    seed: int = 0
    model_kind: str | None = None
    forest: dict = field(default_factory=dict)   # ForestConfig overrides
    gbm: dict = field(default_factory=dict)      # GbmConfig overrides

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        d = dict(d)
        if "tasks" in d:
            d["tasks"] = tuple(d["tasks"])
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def validate(self):
        if not self.working_rate > 0:
            raise ConfigError("working_rate must be positive")
        try:
            self.window_plan()
            self.emd_config()
            build_registry(self.registry_version)
            ForestConfig(**self.forest)
            GbmConfig(**self.gbm)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None
        for t in self.tasks:
            try:
                TaskSpec.named(t)
            except ValueError as e:
                raise ConfigError(str(e)) from None
        if self.model_kind not in (None, "forest", "gbm"):
            raise ConfigError(f"model_kind must be forest or gbm, got {self.model_kind!r}")

    def window_plan(self) -> WindowPlan:
        return WindowPlan(self.window_length_s, self.window_step_s)

    def emd_config(self) -> EmdConfig:
        d = dict(self.emd)
        if "sift" in d:
            d["sift"] = SiftConfig(**d["sift"])
        return EmdConfig(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["tasks"] = list(self.tasks)
        return d

    def hash(self) -> str:
        return sha256_text(json.dumps(self.to_dict(), sort_keys=True))


def sha256_bytes(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def sha256_text(s: str) -> str:
    return sha256_bytes(s.encode())


def key_of(*parts) -> str:
    return sha256_text(json.dumps(parts, sort_keys=True, default=str))[:24]


def atomic_write(path: Path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_provenance(path: Path, cfg: PipelineConfig, stage: str, upstream: dict, **extra) -> None:
    prov = {
        "stage": stage,
        "artifact_sha256": sha256_bytes(Path(path).read_bytes()),
        "config_hash": cfg.hash(),
        "registry_version": cfg.registry_version,
        "seed": cfg.seed,
        "upstream": upstream,
        "package_version": __version__,
        **extra,
    }
    atomic_write(Path(str(path) + ".prov.json"), json.dumps(prov, sort_keys=True, indent=1))


@dataclass
class Cache:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    @property
    def dataset_file(self) -> Path:
        return self.path("dataset.json")


# ingest

def ingest(root_dir, cfg: PipelineConfig, cache: Cache, jobs: int = 1) -> dict:
    """Validate the distribution and record recordings, hashes and subject metadata."""
    root = Path(root_dir).resolve()
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    dataset, skipped = assemble_dataset(root, None, jobs)
    for p, why in skipped:
        log.warning("skipped %s: %s", p, why)
    by_stem = {p.stem: p for p in sorted(root.rglob("*")) if p.suffix.lower() == ".wav"}
    recordings, subjects = [], []
    for s in dataset.subjects:
        subjects.append({"patient_id": s.patient_id, "diagnosis": s.diagnosis.value, "age": s.age_years,
                         "sex": None if s.sex is None else s.sex.value, "bmi": s.bmi})
        for r in s.recordings:
            path = by_stem[r.meta.stem]
            recordings.append({"patient_id": s.patient_id, "stem": r.meta.stem,
                               "path": str(path), "sha256": sha256_bytes(path.read_bytes())})
    manifest = manifest_text(dataset)
    atomic_write(cache.path("manifest.tsv"), manifest)
    doc = {"root": str(root), "subjects": subjects, "recordings": recordings,
           "skipped": [[str(p), w] for p, w in skipped], "manifest_sha256": sha256_text(manifest)}
    atomic_write(cache.dataset_file, json.dumps(doc, sort_keys=True, indent=1))
    write_provenance(cache.dataset_file, cfg, "ingest", {})
    log.info("ingested %d subjects, %d recordings (%d skipped)", len(subjects), len(recordings), len(skipped))
    return doc


def load_ingested(cache: Cache) -> dict:
    if not cache.dataset_file.exists():
        raise FileNotFoundError(f"no ingested dataset in {cache.root}; run `ingest <root>` first")
    return json.loads(cache.dataset_file.read_text())


def subject_records(doc: dict) -> dict:
    return {s["patient_id"]: SubjectRecord(s["patient_id"], Diagnosis(s["diagnosis"]), s["age"],
                                           None if s["sex"] is None else Sex(s["sex"]), s["bmi"])
            for s in doc["subjects"]}


# biosignals

def _bios_key(rec: dict, cfg: PipelineConfig) -> str:
    return key_of("biosignals", rec["sha256"], cfg.working_rate, dataclasses.asdict(cfg.emd_config()))


def save_biosignals(path: Path, b: BiosignalSet) -> None:
    buf = io.BytesIO()
    arrays = {name: sig.samples for name, sig in b.signals().items()}
    np.savez(buf, rate=np.array(b.rate), substituted=np.array(sorted(b.substituted), dtype=str), **arrays)
    atomic_write(path, buf.getvalue())


def load_biosignals(path: Path) -> BiosignalSet:
    with np.load(path) as z:
        rate = float(z["rate"])
        sigs = {name: Signal(z[name], rate) for name in BIOSIGNAL_NAMES}
        subst = tuple(str(s) for s in z["substituted"])
    return BiosignalSet(**sigs, substituted=subst)


def _biosignal_job(rec: dict, cfg: PipelineConfig, out: Path) -> None:
    r = load_recording(Path(rec["path"]), cfg.working_rate)
    save_biosignals(out, derive_biosignals(r.signal, cfg.emd_config()))


def biosignals(cfg: PipelineConfig, cache: Cache, jobs: int = 1) -> list[tuple[dict, Path]]:
    doc = load_ingested(cache)
    items = [(rec, cache.path("biosignals", _bios_key(rec, cfg) + ".npz")) for rec in doc["recordings"]]
    todo = [(rec, p) for rec, p in items if not p.exists()]
    log.info("biosignals: %d cached, %d to compute", len(items) - len(todo), len(todo))
    if jobs == 1:
        for rec, p in todo:
            _biosignal_job(rec, cfg, p)
    else:
        Parallel(n_jobs=jobs)(delayed(_biosignal_job)(rec, cfg, p) for rec, p in todo)
    for rec, p in todo:
        write_provenance(p, cfg, "biosignals", {"recording_sha256": rec["sha256"]}, recording=rec["stem"])
    return items


# features

def _features_job(rec: dict, bios_path: Path, cfg: PipelineConfig, out: Path) -> None:
    reg = build_registry(cfg.registry_version)
    vectors = extract_feature_matrix(load_biosignals(bios_path), cfg.window_plan(), reg,
                                     rec["patient_id"], rec["stem"])
    buf = io.StringIO()
    write_feature_csv(vectors, reg, buf)
    atomic_write(out, buf.getvalue())


def features(cfg: PipelineConfig, cache: Cache, jobs: int = 1) -> Path:
    """Per-recording feature files, concatenated into ``features.csv`` in recording order."""
    items = biosignals(cfg, cache, jobs)
    reg = build_registry(cfg.registry_version)
    plan = cfg.window_plan()
    keyed = []
    for rec, bp in items:
        k = key_of("features", bp.stem, reg.fingerprint(), plan.length_s, plan.step_s)
        keyed.append((rec, bp, cache.path("features", k + ".csv")))
    todo = [t for t in keyed if not t[2].exists()]
    log.info("features: %d cached, %d to compute", len(keyed) - len(todo), len(todo))
    if jobs == 1:
        for rec, bp, out in todo:
            _features_job(rec, bp, cfg, out)
    else:
        Parallel(n_jobs=jobs)(delayed(_features_job)(rec, bp, cfg, out) for rec, bp, out in todo)
    for rec, bp, out in todo:
        write_provenance(out, cfg, "features", {"biosignals": bp.stem}, recording=rec["stem"])

    parts = []
    for i, (_, _, out) in enumerate(keyed):
        lines = out.read_text().splitlines(keepends=True)
        parts.extend(lines if i == 0 else lines[1:])
    combined = cache.path("features.csv")
    text = "".join(parts)
    if not combined.exists() or combined.read_text() != text:
        atomic_write(combined, text)
    write_provenance(combined, cfg, "features", {"recordings": [out.stem for _, _, out in keyed]},
                     registry_fingerprint=reg.fingerprint(), n_features=len(reg))
    return combined


def load_feature_matrix(path: Path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        names, vectors = read_feature_csv(fh)
    if not vectors:
        raise ValueError(f"{path} has no feature rows (all recordings shorter than one window?)")
    return FeatureMatrix.from_vectors(names, vectors)


def task_matrix(m: FeatureMatrix, task: TaskSpec, subjects: dict) -> FeatureMatrix:
    """Rows of subjects inside ``task`` with their targets attached."""
    targets = {pid: subject_target(s, task) for pid, s in subjects.items()}
    rows = [i for i, g in enumerate(m.group_ids) if targets.get(int(g)) is not None]
    if not rows:
        raise ValueError(f"no subjects are eligible for task {task.kind.value}")
    sub = m.subset(rows)
    dtype = float if task.kind.is_regression else np.int64
    return sub.with_targets(np.array([targets[int(g)] for g in sub.group_ids], dtype=dtype))


def _eval_config(cfg: PipelineConfig, jobs: int) -> EvalConfig:
    return EvalConfig(model_kind=cfg.model_kind, seed=cfg.seed, forest=ForestConfig(**cfg.forest),
                      gbm=GbmConfig(**cfg.gbm), jobs=jobs)


def _prepare_task(cfg, cache, task_name, jobs):
    task = TaskSpec.named(task_name)
    fpath = features(cfg, cache, jobs)
    m = task_matrix(load_feature_matrix(fpath), task, subject_records(load_ingested(cache)))
    return task, fpath, m


# train / evaluate / report

def train(cfg: PipelineConfig, cache: Cache, task_name: str, jobs: int = 1) -> Path:
    task, fpath, m = _prepare_task(cfg, cache, task_name, jobs)
    fhash = sha256_bytes(fpath.read_bytes())
    kind = cfg.model_kind or DEFAULT_MODEL[task.kind]
    out = cache.path("models", f"{task.kind.value}-{key_of('train', fhash, cfg.hash(), kind)}.json")
    if out.exists():
        log.info("train: cache hit %s", out.name)
        return out
    m = impute_missing(m)
    scaler, ms = clip_and_standardize(m, m)
    if kind == "forest":
        model = train_random_forest(ms, ForestConfig(**{**cfg.forest, "seed": cfg.seed}), jobs)
    else:
        model = train_gradient_boosting(ms, GbmConfig(**{**cfg.gbm, "seed": cfg.seed}),
                                        task.kind.is_regression)
    text = serialize.dumps(model, scaler, task=task.kind.value, feature_names=list(m.feature_names),
                           registry_version=cfg.registry_version, seed=cfg.seed,
                           config_hash=cfg.hash(), features_sha256=fhash)
    atomic_write(out, text)
    write_provenance(out, cfg, "train", {"features_sha256": fhash})
    return out


def evaluate(cfg: PipelineConfig, cache: Cache, task_name: str, jobs: int = 1) -> tuple[Path, EvalReport | None]:
    task, fpath, m = _prepare_task(cfg, cache, task_name, jobs)
    fhash = sha256_bytes(fpath.read_bytes())
    kind = cfg.model_kind or DEFAULT_MODEL[task.kind]
    key = key_of("evaluate", fhash, cfg.hash(), kind)
    out = cache.path("reports", f"{task.kind.value}-{key}.json")
    if out.exists():
        log.info("evaluate: cache hit %s", out.name)
        return out, None
    report = run_task(m, task, kind, _eval_config(cfg, jobs))
    doc = report.to_dict()
    doc["provenance"] = {"config_hash": cfg.hash(), "registry_version": cfg.registry_version,
                         "seed": cfg.seed, "features_sha256": fhash}
    atomic_write(out, json.dumps(doc, sort_keys=True, indent=1))
    atomic_write(out.with_suffix(".roc.csv"), report.roc_csv())
    write_provenance(out, cfg, "evaluate", {"features_sha256": fhash})
    return out, report


def _report_from_doc(doc: dict) -> EvalReport:
    return EvalReport(TaskSpec.named(doc["task"]), doc["model_kind"], doc["metrics"], doc["window_metrics"])


def report(cfg: PipelineConfig, cache: Cache) -> str:
    """Combined table over the newest evaluation of each task in the cache."""
    newest = {}
    docs = [p for p in cache.path("reports").glob("*.json") if not p.name.endswith(".prov.json")]
    for p in sorted(docs, key=lambda p: p.stat().st_mtime):
        doc = json.loads(p.read_text())
        newest[doc["task"]] = doc
    if not newest:
        raise FileNotFoundError(f"no evaluation reports in {cache.path('reports')}; run `evaluate` first")
    text = render_report([_report_from_doc(newest[t]) for t in sorted(newest)])
    atomic_write(cache.path("report.txt"), text)
    return text
