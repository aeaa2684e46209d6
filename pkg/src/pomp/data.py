"""Patient records, disease taxonomy, dataset IO, splitting, and feature scaling.

A dataset is a flat list of consultation records, each carrying six free-text
narrative fields, four continuous demographic features, two discrete
demographic features, and gold category/disease labels.  Files are UTF-8
JSONL, one record per line; the taxonomy is a separate JSON document.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

TEXT_FIELDS = ("chronic", "surgery", "therapy", "usage", "symptom", "allergy")
CONTINUOUS_FIELDS = ("age", "height", "weight", "duration")
GENDERS = ("female", "male")
PREGNANCY_STATES = ("not_pregnant", "pregnant", "unknown")


class DatasetError(ValueError):
    """Raised for malformed dataset files or records violating invariants."""


class TaxonomyError(ValueError):
    """Raised for structurally invalid taxonomies."""


@dataclass(frozen=True)
class PatientRecord:
    """One consultation: narrative texts, demographics, and gold labels.

    Continuous fields may be ``None`` (missing in the source file); they are
    imputed with training-split means when the normalizer is applied.
    """

    text_chronic: str = ""
    text_surgery: str = ""
    text_therapy: str = ""
    text_usage: str = ""
    text_symptom: str = ""
    text_allergy: str = ""
    age: float | None = None
    height: float | None = None
    weight: float | None = None
    duration: float | None = None
    gender: str = "female"
    pregnancy: str = "unknown"
    category_label: str = ""
    disease_label: str = ""
    precomputed_text_embedding: tuple[float, ...] | None = None

    def text(self, field_name: str) -> str:
        if field_name not in TEXT_FIELDS:
            raise ValueError(f"unknown text field {field_name!r}")
        return getattr(self, f"text_{field_name}")

    def continuous(self, field_name: str) -> float | None:
        if field_name not in CONTINUOUS_FIELDS:
            raise ValueError(f"unknown continuous field {field_name!r}")
        return getattr(self, field_name)

    def validate(self, taxonomy: "Taxonomy") -> None:
        """Check all record invariants against a taxonomy; raise DatasetError."""
        for name in CONTINUOUS_FIELDS:
            value = self.continuous(name)
            if value is None:
                continue
            if not math.isfinite(value) or value < 0:
                raise DatasetError(f"{name} must be finite and >= 0, got {value!r}")
        if self.gender not in GENDERS:
            raise DatasetError(f"unknown gender {self.gender!r}")
        if self.pregnancy not in PREGNANCY_STATES:
            raise DatasetError(f"unknown pregnancy value {self.pregnancy!r}")
        if self.category_label not in taxonomy.category_index:
            raise DatasetError(f"unknown category {self.category_label!r}")
        if self.disease_label not in taxonomy.membership[self.category_label]:
            raise DatasetError(
                f"disease {self.disease_label!r} is not in category "
                f"{self.category_label!r}"
            )

    def to_json_dict(self) -> dict:
        out: dict = {name: self.text(name) for name in TEXT_FIELDS}
        for name in CONTINUOUS_FIELDS:
            out[name] = self.continuous(name)
        out["gender"] = self.gender
        out["pregnancy"] = self.pregnancy
        out["category"] = self.category_label
        out["disease"] = self.disease_label
        if self.precomputed_text_embedding is not None:
            out["text_embedding"] = list(self.precomputed_text_embedding)
        return out

    @classmethod
    def from_json_dict(cls, obj: Mapping) -> "PatientRecord":
        if not isinstance(obj, Mapping):
            raise DatasetError("record must be a JSON object")
        required = set(TEXT_FIELDS) | set(CONTINUOUS_FIELDS) | {
            "gender", "pregnancy", "category", "disease",
        }
        missing = required - set(obj)
        if missing:
            raise DatasetError(f"missing keys: {sorted(missing)}")
        kwargs: dict = {}
        for name in TEXT_FIELDS:
            value = obj[name]
            if not isinstance(value, str):
                raise DatasetError(f"{name} must be a string")
            kwargs[f"text_{name}"] = value
        for name in CONTINUOUS_FIELDS:
            value = obj[name]
            if value is not None and not isinstance(value, (int, float)):
                raise DatasetError(f"{name} must be a number or null")
            kwargs[name] = None if value is None else float(value)
        kwargs["gender"] = obj["gender"]
        kwargs["pregnancy"] = obj["pregnancy"]
        kwargs["category_label"] = obj["category"]
        kwargs["disease_label"] = obj["disease"]
        embedding = obj.get("text_embedding")
        if embedding is not None:
            if not isinstance(embedding, Sequence) or isinstance(embedding, str):
                raise DatasetError("text_embedding must be an array of numbers")
            kwargs["precomputed_text_embedding"] = tuple(float(x) for x in embedding)
        return cls(**kwargs)


@dataclass(frozen=True)
class Taxonomy:
    """Category list, global disease list, and per-category disease subsets.

    Categories may share diseases.  All orderings are fixed at construction
    and preserved through serialization, so label indices are stable.
    """

    categories: tuple[str, ...]
    diseases: tuple[str, ...]
    membership: Mapping[str, tuple[str, ...]]
    category_index: Mapping[str, int] = field(init=False, repr=False)
    disease_index: Mapping[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(set(self.categories)) != len(self.categories):
            raise TaxonomyError("duplicate category ids")
        if len(set(self.diseases)) != len(self.diseases):
            raise TaxonomyError("duplicate disease ids")
        if set(self.membership) != set(self.categories):
            raise TaxonomyError("membership keys must equal the category list")
        covered: set[str] = set()
        disease_set = set(self.diseases)
        for cate, subset in self.membership.items():
            if len(set(subset)) != len(subset):
                raise TaxonomyError(f"duplicate diseases in category {cate!r}")
            unknown = set(subset) - disease_set
            if unknown:
                raise TaxonomyError(
                    f"category {cate!r} lists unknown diseases {sorted(unknown)}"
                )
            covered.update(subset)
        orphans = disease_set - covered
        if orphans:
            raise TaxonomyError(f"diseases in no category: {sorted(orphans)}")
        object.__setattr__(
            self, "category_index", {c: i for i, c in enumerate(self.categories)}
        )
        object.__setattr__(
            self, "disease_index", {d: i for i, d in enumerate(self.diseases)}
        )

    @property
    def label_count_per_head(self) -> dict[str, int]:
        """Output size of every classifier head (tier-1 plus one per category)."""
        sizes = {"category": len(self.categories)}
        for cate in self.categories:
            sizes[cate] = len(self.membership[cate])
        return sizes

    def local_disease_index(self, category: str, disease: str) -> int:
        """Position of a disease inside one category's ordered subset."""
        return self.membership[category].index(disease)

    def to_dict(self) -> dict:
        return {
            "categories": list(self.categories),
            "diseases": list(self.diseases),
            "membership": {c: list(s) for c, s in self.membership.items()},
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Taxonomy":
        try:
            categories = tuple(obj["categories"])
            diseases = tuple(obj["diseases"])
            membership = {c: tuple(s) for c, s in obj["membership"].items()}
        except (KeyError, TypeError, AttributeError) as exc:
            raise TaxonomyError(f"invalid taxonomy document: {exc}") from exc
        return cls(categories=categories, diseases=diseases, membership=membership)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=False), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Taxonomy":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise TaxonomyError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(obj)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of validated records plus the taxonomy they obey."""

    records: tuple[PatientRecord, ...]
    taxonomy: Taxonomy

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[PatientRecord]:
        return iter(self.records)

    def __getitem__(self, idx: int) -> PatientRecord:
        return self.records[idx]


def load_dataset(path: str | Path, taxonomy: Taxonomy) -> Dataset:
    """Read a JSONL dataset file, validating every record against the taxonomy.

    Raises DatasetError naming the 1-based line number of the first bad line.
    """
    path = Path(path)
    records: list[PatientRecord] = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            try:
                record = PatientRecord.from_json_dict(obj)
                record.validate(taxonomy)
            except DatasetError as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from exc
            records.append(record)
    return Dataset(records=tuple(records), taxonomy=taxonomy)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write a dataset as UTF-8 JSONL, one record per line, in order."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in ds.records:
            handle.write(json.dumps(record.to_json_dict(), sort_keys=False))
            handle.write("\n")


def _allocate_counts(n: int, ratios: Sequence[float]) -> list[int]:
    """Split n items into len(ratios) integer counts by largest remainder,
    then nudge so every nonzero-ratio split gets >= 2 items when feasible."""
    raw = [r * n for r in ratios]
    counts = [int(math.floor(x)) for x in raw]
    leftover = n - sum(counts)
    by_fraction = sorted(
        range(len(ratios)), key=lambda i: (counts[i] - raw[i], i)
    )
    for i in by_fraction[:leftover]:
        counts[i] += 1
    active = [i for i, r in enumerate(ratios) if r > 0]
    if n >= 2 * len(active):
        for i in active:
            while counts[i] < 2:
                donor = max(active, key=lambda j: counts[j])
                if counts[donor] <= 2:
                    break
                counts[donor] -= 1
                counts[i] += 1
    return counts


def split_dataset(
    ds: Dataset,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic stratified-by-category (train, val, test) partition.

    Categories with fewer records than active splits contribute everything to
    the train split (with a warning) rather than starving a split.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    if any(r < 0 for r in ratios):
        raise ValueError(f"split ratios must be non-negative, got {ratios}")
    rng = np.random.default_rng(seed)
    by_category: dict[str, list[int]] = {c: [] for c in ds.taxonomy.categories}
    for idx, record in enumerate(ds.records):
        by_category[record.category_label].append(idx)
    buckets: tuple[list[int], list[int], list[int]] = ([], [], [])
    n_active = sum(1 for r in ratios if r > 0)
    for cate in ds.taxonomy.categories:
        indices = by_category[cate]
        if not indices:
            continue
        order = rng.permutation(len(indices))
        shuffled = [indices[i] for i in order]
        if len(indices) < n_active:
            warnings.warn(
                f"category {cate!r} has only {len(indices)} records; "
                "all assigned to the train split",
                stacklevel=2,
            )
            buckets[0].extend(shuffled)
            continue
        counts = _allocate_counts(len(indices), ratios)
        start = 0
        for split_idx, count in enumerate(counts):
            buckets[split_idx].extend(shuffled[start : start + count])
            start += count
    splits = []
    for bucket in buckets:
        bucket.sort()
        splits.append(
            Dataset(records=tuple(ds.records[i] for i in bucket), taxonomy=ds.taxonomy)
        )
    return splits[0], splits[1], splits[2]


@dataclass(frozen=True)
class ContinuousNormalizer:
    """Per-feature scaling fitted on the training split only.

    Each continuous feature is divided by the maximum absolute value seen in
    training (floored at epsilon), mapping training values into [0, 1].
    Test-time values may exceed 1; they are not clamped.  Missing values are
    imputed with the training mean before scaling.
    """

    scales: Mapping[str, float]
    means: Mapping[str, float]
    epsilon: float = 1e-9

    def __post_init__(self) -> None:
        for name in CONTINUOUS_FIELDS:
            if name not in self.scales:
                raise ValueError(f"normalizer missing scale for {name!r}")
            if self.scales[name] < self.epsilon:
                raise ValueError(f"scale for {name!r} is below epsilon")

    def normalize(self, record: PatientRecord) -> np.ndarray:
        values = np.empty(len(CONTINUOUS_FIELDS), dtype=np.float64)
        for i, name in enumerate(CONTINUOUS_FIELDS):
            raw = record.continuous(name)
            if raw is None:
                raw = self.means[name]
            values[i] = raw / self.scales[name]
        return values

    def to_dict(self) -> dict:
        return {
            "scales": dict(self.scales),
            "means": dict(self.means),
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "ContinuousNormalizer":
        return cls(
            scales=dict(obj["scales"]),
            means=dict(obj["means"]),
            epsilon=float(obj["epsilon"]),
        )


def fit_normalizer(train: Dataset, epsilon: float = 1e-9) -> ContinuousNormalizer:
    """Fit per-feature scales (max |value|, floored at epsilon) and imputation
    means on the training split."""
    if len(train) == 0:
        raise ValueError("cannot fit a normalizer on an empty training split")
    scales: dict[str, float] = {}
    means: dict[str, float] = {}
    for name in CONTINUOUS_FIELDS:
        values = [
            record.continuous(name)
            for record in train
            if record.continuous(name) is not None
        ]
        if values:
            scales[name] = max(max(abs(v) for v in values), epsilon)
            means[name] = float(sum(values) / len(values))
        else:
            scales[name] = epsilon
            means[name] = 0.0
    return ContinuousNormalizer(scales=scales, means=means, epsilon=epsilon)


@dataclass(frozen=True)
class StatsReport:
    """Descriptive statistics of a dataset (record counts, token counts,
    demographic histograms)."""

    record_count: int
    records_per_category: dict[str, int]
    distinct_diseases_per_category: dict[str, int]
    avg_tokens_per_patient: float
    avg_tokens_per_category: dict[str, float]
    gender_counts: dict[str, int]
    age_histogram: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "record_count": self.record_count,
            "records_per_category": self.records_per_category,
            "distinct_diseases_per_category": self.distinct_diseases_per_category,
            "avg_tokens_per_patient": self.avg_tokens_per_patient,
            "avg_tokens_per_category": self.avg_tokens_per_category,
            "gender_counts": self.gender_counts,
            "age_histogram": self.age_histogram,
        }


def dataset_stats(ds: Dataset) -> StatsReport:
    """Per-category counts, distinct diseases, average raw-text token counts,
    and demographic histograms.  An empty dataset yields an empty report."""
    from .text import split_text  # local import: text module depends on this one

    per_cat_records: dict[str, int] = {}
    per_cat_diseases: dict[str, set[str]] = {}
    per_cat_tokens: dict[str, int] = {}
    gender_counts = {g: 0 for g in GENDERS}
    age_bins = [f"{lo}-{lo + 9}" for lo in range(0, 90, 10)] + ["90+"]
    age_histogram = {b: 0 for b in age_bins}
    total_tokens = 0
    for record in ds:
        cate = record.category_label
        per_cat_records[cate] = per_cat_records.get(cate, 0) + 1
        per_cat_diseases.setdefault(cate, set()).add(record.disease_label)
        n_tokens = sum(len(split_text(record.text(f))) for f in TEXT_FIELDS)
        per_cat_tokens[cate] = per_cat_tokens.get(cate, 0) + n_tokens
        total_tokens += n_tokens
        gender_counts[record.gender] += 1
        if record.age is not None:
            bin_idx = min(int(record.age // 10), 9)
            age_histogram[age_bins[bin_idx]] += 1
    n = len(ds)
    return StatsReport(
        record_count=n,
        records_per_category=dict(sorted(per_cat_records.items())),
        distinct_diseases_per_category={
            c: len(s) for c, s in sorted(per_cat_diseases.items())
        },
        avg_tokens_per_patient=(total_tokens / n) if n else 0.0,
        avg_tokens_per_category={
            c: per_cat_tokens[c] / per_cat_records[c] for c in sorted(per_cat_tokens)
        },
        gender_counts=gender_counts,
        age_histogram=age_histogram,
    )


def with_precomputed_embedding(
    record: PatientRecord, embedding: Sequence[float]
) -> PatientRecord:
    """Copy of a record carrying a precomputed sentence embedding."""
    return replace(record, precomputed_text_embedding=tuple(float(x) for x in embedding))
