"""Recurrent-event dataset representation and CSV ingestion.

Each record is one gap time: the time from the (k-1)-th to the k-th
recurrence of a subject, right censored, together with the subject's
treatment stratum and the covariates measured at the start of the interval.

CSV layout (header required, RFC-4180 style)::

    subject,recurrence,stratum,time,status,z1,...,zp

``status`` is 1 for an observed event and 0 for censoring.  A schema mapping
can rename columns and collapse extended status codes (for example the
bladder study's "death from other causes") onto {0, 1} at parse time.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "Observation",
    "Dataset",
    "CsvSchema",
    "BLADDER_STATUS_MAP",
    "load_csv",
    "write_csv",
    "validate",
    "prepare_bladder",
    "bladder_path",
    "load_bladder",
]


@dataclass(frozen=True)
class Observation:
    """One gap-time record of one subject."""

    subject_id: int
    recurrence: int  # k, 1-based
    stratum: int  # j, 1-based
    gap_time: float
    event: int  # 1 event, 0 censored
    covariates: tuple[float, ...]

    def __post_init__(self):
        if self.gap_time <= 0:
            raise ValueError(f"subject {self.subject_id}: gap time must be positive")
        if self.event not in (0, 1):
            raise ValueError(f"subject {self.subject_id}: status must be 0 or 1")
        if self.recurrence < 1 or self.stratum < 1:
            raise ValueError(f"subject {self.subject_id}: indices are 1-based")


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of gap-time records.

    ``n_recurrences`` (K) and ``n_strata`` (G) default to the maxima present
    in the records; they can be forced larger when a model is fitted over a
    wider grid than the data happens to populate.
    """

    observations: tuple[Observation, ...]
    n_recurrences: int = 0
    n_strata: int = 0
    stratum_labels: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        obs = tuple(self.observations)
        if not obs:
            raise ValueError("no observations")
        K = max(o.recurrence for o in obs)
        G = max(o.stratum for o in obs)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "n_recurrences", max(self.n_recurrences, K))
        object.__setattr__(self, "n_strata", max(self.n_strata, G))
        p = len(obs[0].covariates)
        if any(len(o.covariates) != p for o in obs):
            raise ValueError("inconsistent covariate dimension")

    @property
    def n_covariates(self) -> int:
        return len(self.observations[0].covariates)

    @property
    def subjects(self) -> tuple[int, ...]:
        # sorted so that derived subject indexing never depends on row order
        return tuple(sorted({o.subject_id for o in self.observations}))

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    def subjects_per_stratum(self) -> dict[int, int]:
        strata = {}
        for o in self.observations:
            strata.setdefault(o.subject_id, o.stratum)
        counts = {j: 0 for j in range(1, self.n_strata + 1)}
        for j in strata.values():
            counts[j] += 1
        return counts

    def records_per_cell(self) -> dict[tuple[int, int], int]:
        """n_kj: number of k-th gap records in stratum j."""
        counts: dict[tuple[int, int], int] = {}
        for o in self.observations:
            key = (o.recurrence, o.stratum)
            counts[key] = counts.get(key, 0) + 1
        return counts

    def select(self, k: int | None = None, j: int | None = None) -> list[Observation]:
        return [
            o
            for o in self.observations
            if (k is None or o.recurrence == k) and (j is None or o.stratum == j)
        ]


@dataclass(frozen=True)
class CsvSchema:
    """Column-name map plus optional status recoding for load_csv."""

    subject: str = "subject"
    recurrence: str = "recurrence"
    stratum: str = "stratum"
    time: str = "time"
    status: str = "status"
    covariates: tuple[str, ...] | None = None  # None: every z-prefixed column
    status_map: dict[int, int] | None = None  # raw code -> {0, 1}


# The bladder study codes a final interval 2 when it ended in death from
# bladder disease (treated as an event) and 3 when death had another or an
# unknown cause (treated as censoring).
BLADDER_STATUS_MAP = {0: 0, 1: 1, 2: 1, 3: 0}


def _open_text(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8")


def load_csv(source, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Parse a gap-time CSV into a validated Dataset.

    ``source`` may be a path, bytes, or an open (binary or text) stream.
    Raises ValueError with the offending line number on malformed rows and
    on schema mismatches.
    """
    fh = _open_text(source)
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("no observations: empty CSV") from None
    header = [h.strip() for h in header]
    idx = {name: i for i, name in enumerate(header)}

    for col in (schema.subject, schema.recurrence, schema.stratum, schema.time, schema.status):
        if col not in idx:
            raise ValueError(f"schema mismatch: column '{col}' not in header {header}")
    if schema.covariates is None:
        cov_cols = [h for h in header if h.startswith("z")]
    else:
        cov_cols = list(schema.covariates)
        missing = [c for c in cov_cols if c not in idx]
        if missing:
            raise ValueError(f"schema mismatch: covariate columns {missing} not in header")

    status_map = schema.status_map or {0: 0, 1: 1}
    observations = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            raw_status = int(row[idx[schema.status]])
            if raw_status not in status_map:
                raise ValueError(f"status code {raw_status} not covered by the schema's status map")
            observations.append(
                Observation(
                    subject_id=int(row[idx[schema.subject]]),
                    recurrence=int(row[idx[schema.recurrence]]),
                    stratum=int(row[idx[schema.stratum]]),
                    gap_time=float(row[idx[schema.time]]),
                    event=status_map[raw_status],
                    covariates=tuple(float(row[idx[c]]) for c in cov_cols),
                )
            )
        except (ValueError, IndexError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if not observations:
        raise ValueError("no observations")
    return Dataset(tuple(observations))


def write_csv(ds: Dataset, target) -> None:
    """Write a Dataset back out; floats carry 15 significant digits."""
    own = isinstance(target, (str, Path))
    fh = open(target, "w", encoding="utf-8", newline="") if own else target
    try:
        writer = csv.writer(fh, lineterminator="\n")
        p = ds.n_covariates
        writer.writerow(
            ["subject", "recurrence", "stratum", "time", "status"]
            + [f"z{i + 1}" for i in range(p)]
        )
        for o in ds.observations:
            writer.writerow(
                [o.subject_id, o.recurrence, o.stratum, f"{o.gap_time:.15g}", o.event]
                + [f"{z:.15g}" for z in o.covariates]
            )
    finally:
        if own:
            fh.close()


def validate(ds: Dataset) -> list[str]:
    """Return human-readable invariant violations (empty list when clean).

    Violations are data, not failures: a subject whose recurrence indices do
    not form a prefix 1..k, a stratum that changes within a subject, or a
    non-positive gap time (possible when Dataset rows were built directly).
    """
    problems = []
    by_subject: dict[int, list[Observation]] = {}
    for o in ds.observations:
        by_subject.setdefault(o.subject_id, []).append(o)
        if o.gap_time <= 0:
            problems.append(f"subject {o.subject_id}: non-positive time at k={o.recurrence}")
        if o.event not in (0, 1):
            problems.append(f"subject {o.subject_id}: status {o.event} not in {{0,1}}")
    for sid, obs in by_subject.items():
        strata = {o.stratum for o in obs}
        if len(strata) > 1:
            problems.append(f"subject {sid}: stratum changes across records {sorted(strata)}")
        ks = sorted(o.recurrence for o in obs)
        if ks != list(range(1, len(ks) + 1)):
            problems.append(f"subject {sid}: non-prefix recurrence indices {ks}")
    return problems


def prepare_bladder(raw: Dataset, max_recurrence: int = 2) -> Dataset:
    """Bladder-study preparation: months to years, covariates scaled by 100.

    Only the first ``max_recurrence`` gap records per subject are retained
    (the analysis uses the first and second recurrences).  Covariates are the
    tumour count and the largest tumour size at the start of each interval,
    both divided by 100.  Raises when a retained record is missing a
    covariate value (encoded as NaN).
    """
    kept = []
    for o in raw.observations:
        if o.recurrence > max_recurrence:
            continue
        if any(np.isnan(z) for z in o.covariates):
            raise ValueError(f"subject {o.subject_id}: missing covariate at k={o.recurrence}")
        kept.append(
            replace(
                o,
                gap_time=o.gap_time / 12.0,
                covariates=tuple(z / 100.0 for z in o.covariates),
            )
        )
    if not kept:
        raise ValueError("no observations after preparation")
    return Dataset(tuple(kept), stratum_labels=dict(raw.stratum_labels))


def bladder_path() -> Path:
    """Path of the bundled raw bladder-style CSV (months, unscaled covariates)."""
    return Path(resources.files("gsfm").joinpath("data/bladder_standin.csv"))


def _stratum_labels() -> dict[int, str]:
    path = resources.files("gsfm").joinpath("data/bladder_strata.json")
    with path.open("r", encoding="utf-8") as fh:
        return {int(k): v for k, v in json.load(fh).items()}


def load_bladder(prepared: bool = True) -> Dataset:
    """Load the bundled bladder recurrence dataset.

    The bundled file is a synthetic stand-in with the published study's
    shape (118 subjects, three treatment arms, interval-level tumour
    covariates, status codes 0-3); see the README for its provenance and for
    converting the original records.  With ``prepared=True`` the gap times
    are returned in years, covariates divided by 100 and recurrences
    truncated at K=2.
    """
    schema = CsvSchema(status_map=BLADDER_STATUS_MAP)
    ds = load_csv(bladder_path(), schema)
    ds = Dataset(ds.observations, stratum_labels=_stratum_labels())
    return prepare_bladder(ds) if prepared else ds
