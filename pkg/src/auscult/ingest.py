"""Parsing of the ICBHI respiratory sound distribution.

File conventions handled here:

* recordings ``<patient>_<index>_<location>_<mode>_<device>.wav`` with a
  sibling ``.txt`` holding one respiratory cycle per line
  (``begin end crackles wheezes``);
* a diagnosis table (``patient diagnosis`` per line, whitespace or comma);
* a demographics table (``patient age sex adult_bmi child_weight child_height``,
  ``NA`` for missing fields).
"""
from __future__ import annotations

import enum
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .dsp import Signal
from .errors import (
    DuplicatePatient,
    EmptyDataset,
    InvalidRecording,
    MalformedFilename,
    MalformedLine,
    MissingMetadata,
    UnknownDiagnosis,
)
from .wav import decode_wav

log = logging.getLogger(__name__)


class ChestLocation(str, enum.Enum):
    Tc = "Tc"
    Al = "Al"
    Ar = "Ar"
    Pl = "Pl"
    Pr = "Pr"
    Ll = "Ll"
    Lr = "Lr"


class AcquisitionMode(str, enum.Enum):
    single_channel = "sc"
    multi_channel = "mc"


class Diagnosis(str, enum.Enum):
    Healthy = "Healthy"
    Pneumonia = "Pneumonia"
    Bronchiolitis = "Bronchiolitis"
    Bronchiectasis = "Bronchiectasis"
    COPD = "COPD"
    URTI = "URTI"
    LRTI = "LRTI"
    Asthma = "Asthma"

    @classmethod
    def parse(cls, text: str) -> "Diagnosis":
        key = text.strip().lower()
        for d in cls:
            if d.value.lower() == key:
                return d
        raise UnknownDiagnosis(f"unknown diagnosis {text!r}")


# conventional 1-based ICBHI diagnosis labels
DIAGNOSIS_LABELS = {
    Diagnosis.Healthy: 0,
    Diagnosis.Pneumonia: 1,
    Diagnosis.Bronchiolitis: 2,
    Diagnosis.Bronchiectasis: 3,
    Diagnosis.COPD: 4,
    Diagnosis.URTI: 5,
    Diagnosis.LRTI: 6,
    Diagnosis.Asthma: 7,
}


class Sex(str, enum.Enum):
    male = "male"
    female = "female"


class TaskKind(str, enum.Enum):
    binary_healthy = "binary_healthy"
    binary_copd = "binary_copd"
    six_class = "six_class"
    four_class = "four_class"
    gender = "gender"
    age_regression = "age_regression"
    bmi_regression = "bmi_regression"

    @property
    def is_regression(self) -> bool:
        return self in (TaskKind.age_regression, TaskKind.bmi_regression)


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind
    exclusions: tuple = ()

    @classmethod
    def named(cls, name: str, exclusions=()) -> "TaskSpec":
        try:
            kind = TaskKind(name)
        except ValueError:
            valid = ", ".join(k.value for k in TaskKind)
            raise ValueError(f"unknown task {name!r}; valid tasks: {valid}") from None
        return cls(kind, tuple(exclusions))

    @property
    def n_classes(self) -> int | None:
        return {
            TaskKind.binary_healthy: 2,
            TaskKind.binary_copd: 2,
            TaskKind.gender: 2,
            TaskKind.six_class: 6,
            TaskKind.four_class: 4,
        }.get(self.kind)


_FILENAME_RE = re.compile(r"^(?P<stem>[^.]+)\.(?P<ext>wav|txt)$", re.IGNORECASE)


@dataclass(frozen=True)
class RecordingMeta:
    patient_id: int
    recording_index: str
    chest_location: ChestLocation
    acquisition_mode: AcquisitionMode
    device: str

    @property
    def stem(self) -> str:
        return "_".join((str(self.patient_id), self.recording_index, self.chest_location.value,
                         self.acquisition_mode.value, self.device))

    def format(self, ext: str = "wav") -> str:
        return f"{self.stem}.{ext}"


@dataclass(frozen=True)
class CycleAnnotation:
    begin_s: float
    end_s: float
    crackles: bool
    wheezes: bool


@dataclass(frozen=True, eq=False)
class Recording:
    meta: RecordingMeta
    samples: np.ndarray
    rate: float
    cycles: tuple = ()

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if not self.rate > 0:
            raise InvalidRecording(f"rate must be positive, got {self.rate}")
        if x.size == 0:
            raise InvalidRecording("recording has no samples")
        if not np.all(np.isfinite(x)):
            raise InvalidRecording("recording has non-finite samples")
        object.__setattr__(self, "samples", x)

    @property
    def signal(self) -> Signal:
        return Signal(self.samples, self.rate)

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate


@dataclass(frozen=True, eq=False)
class SubjectRecord:
    patient_id: int
    diagnosis: Diagnosis
    age_years: float | None = None
    sex: Sex | None = None
    bmi: float | None = None
    recordings: tuple = ()


@dataclass(frozen=True, eq=False)
class Dataset:
    subjects: tuple

    def __post_init__(self):
        ids = [s.patient_id for s in self.subjects]
        if len(ids) != len(set(ids)):
            raise DuplicatePatient("patient ids must be unique")

    def __len__(self):
        return len(self.subjects)

    def subject(self, patient_id: int) -> SubjectRecord:
        for s in self.subjects:
            if s.patient_id == patient_id:
                return s
        raise KeyError(patient_id)

    @property
    def n_recordings(self) -> int:
        return sum(len(s.recordings) for s in self.subjects)


@dataclass(frozen=True)
class SubjectInfo:
    diagnosis: Diagnosis
    age_years: float | None = None
    sex: Sex | None = None
    bmi: float | None = None


def parse_recording_filename(name: str) -> RecordingMeta:
    """Parse ``101_1b1_Al_sc_Meditron.wav`` style names (extension optional)."""
    base = Path(name).name
    m = _FILENAME_RE.match(base)
    stem = m.group("stem") if m else base
    tokens = stem.split("_")
    if len(tokens) != 5:
        raise MalformedFilename(f"{name!r}: expected 5 underscore-separated tokens, got {len(tokens)}")
    pid, idx, loc, mode, device = tokens
    try:
        patient = int(pid)
    except ValueError:
        raise MalformedFilename(f"{name!r}: patient id {pid!r} is not an integer") from None
    if patient <= 0:
        raise MalformedFilename(f"{name!r}: patient id must be positive")
    try:
        location = ChestLocation(loc)
    except ValueError:
        raise MalformedFilename(f"{name!r}: unknown chest location {loc!r}") from None
    try:
        acq = AcquisitionMode(mode)
    except ValueError:
        raise MalformedFilename(f"{name!r}: unknown acquisition mode {mode!r}") from None
    return RecordingMeta(patient, idx, location, acq, device)


def parse_cycle_annotations(text: str) -> list[CycleAnnotation]:
    cycles = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise MalformedLine(lineno, f"expected 4 columns, got {len(parts)}")
        try:
            begin, end = float(parts[0]), float(parts[1])
        except ValueError:
            raise MalformedLine(lineno, "non-numeric cycle bounds") from None
        if parts[2] not in ("0", "1") or parts[3] not in ("0", "1"):
            raise MalformedLine(lineno, "flags must be 0 or 1")
        if not 0 <= begin < end:
            raise MalformedLine(lineno, f"cycle bounds must satisfy 0 <= begin < end, got {begin}, {end}")
        cycles.append(CycleAnnotation(begin, end, parts[2] == "1", parts[3] == "1"))
    return cycles


def _field(tok: str) -> float | None:
    return None if tok.upper() in ("NA", "NAN", "") else float(tok)


def _split(line: str) -> list[str]:
    return [t for t in re.split(r"[,\s]+", line.strip()) if t]


def _is_header(tokens) -> bool:
    return not tokens[0].isdigit()


def child_bmi(weight_kg: float, height: float) -> float:
    """BMI from weight and height; heights above 3 are taken as centimetres."""
    h = height / 100.0 if height > 3.0 else height
    return weight_kg / (h * h)


def parse_metadata_tables(diagnosis_text: str, demographics_text: str | None = None) -> dict[int, SubjectInfo]:
    diagnoses: dict[int, Diagnosis] = {}
    for lineno, line in enumerate(diagnosis_text.splitlines(), start=1):
        tokens = _split(line)
        if not tokens or _is_header(tokens):
            continue
        if len(tokens) < 2:
            raise MalformedLine(lineno, "diagnosis row needs patient id and diagnosis")
        pid = int(tokens[0])
        if pid in diagnoses:
            raise DuplicatePatient(f"patient {pid} listed twice in diagnosis table")
        diagnoses[pid] = Diagnosis.parse(tokens[1])

    demo: dict[int, tuple] = {}
    for lineno, line in enumerate((demographics_text or "").splitlines(), start=1):
        tokens = _split(line)
        if not tokens or _is_header(tokens):
            continue
        tokens = (tokens + ["NA"] * 6)[:6]
        pid = int(tokens[0])
        if pid in demo:
            raise DuplicatePatient(f"patient {pid} listed twice in demographics table")
        try:
            age, adult_bmi, weight, height = (_field(tokens[i]) for i in (1, 3, 4, 5))
        except ValueError:
            raise MalformedLine(lineno, "non-numeric demographic field") from None
        sex = {"M": Sex.male, "F": Sex.female}.get(tokens[2].upper())
        bmi = adult_bmi
        if bmi is None and weight is not None and height is not None and height > 0:
            bmi = child_bmi(weight, height)
        demo[pid] = (age, sex, bmi)

    return {pid: SubjectInfo(d, *demo.get(pid, (None, None, None))) for pid, d in diagnoses.items()}


def _find_table(root: Path, keyword: str) -> Path | None:
    hits = sorted(p for p in root.rglob("*") if p.is_file() and keyword in p.name.lower()
                  and p.suffix.lower() in (".txt", ".csv", ".tsv"))
    return hits[0] if hits else None


def load_recording(path: Path, working_rate: float | None = None) -> Recording:
    meta = parse_recording_filename(path.name)
    sig = decode_wav(path.read_bytes())
    if sig.samples.size == 0:
        raise InvalidRecording(f"{path.name}: empty data chunk")
    if working_rate is not None and sig.rate != working_rate:
        sig = dsp.resample(sig, working_rate)
    duration = sig.samples.size / sig.rate
    cycles = ()
    ann = path.with_suffix(".txt")
    if ann.exists():
        parsed = []
        for c in parse_cycle_annotations(ann.read_text()):
            if c.begin_s >= duration:
                log.warning("%s: cycle starting at %.3f s is past the audio end; dropped", path.name, c.begin_s)
                continue
            if c.end_s > duration:
                log.warning("%s: cycle end %.3f s clamped to audio end %.3f s", path.name, c.end_s, duration)
                c = CycleAnnotation(c.begin_s, duration, c.crackles, c.wheezes)
            parsed.append(c)
        cycles = tuple(parsed)
    return Recording(meta, sig.samples, sig.rate, cycles)


def assemble_dataset(root_dir, working_rate: float | None = None, jobs: int = 1):
    """Load a distribution root into a Dataset.

    Returns ``(dataset, skipped)`` where ``skipped`` lists ``(path, reason)``
    for every audio file that was not attached to a subject. With
    ``working_rate`` set, audio is resampled while loading.
    """
    root = Path(root_dir)
    wavs = sorted(p for p in root.rglob("*") if p.suffix.lower() == ".wav")
    diag_path = _find_table(root, "diagnosis")
    if diag_path is None:
        raise MissingMetadata(f"no diagnosis table found under {root}")
    demo_path = _find_table(root, "demographic")
    if demo_path is None:
        log.warning("no demographics table under %s; age, sex and BMI will be absent", root)
    info = parse_metadata_tables(diag_path.read_text(),
                                 demo_path.read_text() if demo_path else None)

    skipped = []
    candidates = []
    for p in wavs:
        try:
            meta = parse_recording_filename(p.name)
        except MalformedFilename as e:
            skipped.append((p, str(e)))
            continue
        if meta.patient_id not in info:
            skipped.append((p, f"patient {meta.patient_id} has no diagnosis row"))
            continue
        candidates.append(p)

    def _load(p):
        try:
            return load_recording(p, working_rate), None
        except (InvalidRecording, ValueError) as e:
            return None, str(e)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            loaded = list(pool.map(_load, candidates))
    else:
        loaded = [_load(p) for p in candidates]

    by_patient: dict[int, list] = {}
    for p, (rec, err) in zip(candidates, loaded):
        if rec is None:
            skipped.append((p, err))
            continue
        by_patient.setdefault(rec.meta.patient_id, []).append(rec)
    if not by_patient:
        raise EmptyDataset(f"no usable recordings under {root}")

    subjects = []
    for pid in sorted(by_patient):
        i = info[pid]
        recs = tuple(sorted(by_patient[pid], key=lambda r: r.meta.stem))
        subjects.append(SubjectRecord(pid, i.diagnosis, i.age_years, i.sex, i.bmi, recs))
    return Dataset(tuple(subjects)), skipped


_SIX = (Diagnosis.Pneumonia, Diagnosis.Bronchiolitis, Diagnosis.Bronchiectasis,
        Diagnosis.COPD, Diagnosis.URTI, Diagnosis.LRTI)
_FOUR = {
    Diagnosis.Pneumonia: 0,
    Diagnosis.Bronchiolitis: 1,
    Diagnosis.Bronchiectasis: 1,
    Diagnosis.COPD: 2,
    Diagnosis.URTI: 3,
    Diagnosis.LRTI: 3,
}


def class_label(diagnosis: Diagnosis, task: TaskSpec) -> int | None:
    """Dense class label of ``diagnosis`` for a classification task, None if excluded.

    six_class uses DIAGNOSIS_LABELS 1..6 shifted to 0..5.
    """
    kind = task.kind
    if kind == TaskKind.binary_healthy:
        return 0 if diagnosis == Diagnosis.Healthy else 1
    if kind == TaskKind.binary_copd:
        if diagnosis == Diagnosis.Healthy:
            return None
        return 1 if diagnosis == Diagnosis.COPD else 0
    if kind == TaskKind.six_class:
        return DIAGNOSIS_LABELS[diagnosis] - 1 if diagnosis in _SIX else None
    if kind == TaskKind.four_class:
        return _FOUR.get(diagnosis)
    raise ValueError(f"{kind.value} is not a diagnosis classification task")


def subject_target(subject: SubjectRecord, task: TaskSpec):
    """Per-subject target for any task, or None when the subject is outside it."""
    if subject.patient_id in task.exclusions:
        return None
    kind = task.kind
    if kind == TaskKind.gender:
        return None if subject.sex is None else int(subject.sex == Sex.female)
    if kind == TaskKind.age_regression:
        return subject.age_years
    if kind == TaskKind.bmi_regression:
        return subject.bmi
    return class_label(subject.diagnosis, task)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, enum.Enum):
        return v.value
    return repr(float(v)) if isinstance(v, float) else str(v)


MANIFEST_COLUMNS = ("patient_id", "diagnosis", "age", "sex", "bmi", "n_recordings")


def manifest_text(dataset: Dataset, delimiter: str = "\t") -> str:
    lines = [delimiter.join(MANIFEST_COLUMNS)]
    for s in dataset.subjects:
        row = (s.patient_id, s.diagnosis, s.age_years, s.sex, s.bmi, len(s.recordings))
        lines.append(delimiter.join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"
