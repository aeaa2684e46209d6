"""Deterministic synthetic dataset generator with a planted labeling rule.

Stands in for the (private) consultation data: each record's category is
determined by a designated keyword in the symptom text, and the disease
within the category by a second keyword plus, optionally, demographic
thresholds (age, gender).  The exact generative rule is returned alongside
the data so tests can score against a Bayes-optimal labeler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, PatientRecord, Taxonomy

AGE_THRESHOLD = 50.0

# Table-1-shaped constants of the source corpus: 6 categories, per-category
# record and disease-subset sizes.
REFERENCE_RECORDS_PER_CATEGORY = (1413, 4157, 4543, 4965, 6143, 9518)
REFERENCE_DISEASES_PER_CATEGORY = (29, 41, 63, 31, 29, 55)


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and seed of a generated dataset.

    ``records_per_category`` and ``diseases_per_category`` accept either a
    single int (applied to every category) or one int per category.
    ``overlap_fraction`` is the fraction of each category's disease subset
    shared with the previous category's subset.
    """

    seed: int = 0
    records_per_category: int | tuple[int, ...] = 200
    category_count: int = 6
    diseases_per_category: int | tuple[int, ...] = 5
    overlap_fraction: float = 0.0
    demographic_dependence: bool = False
    vocabulary_size: int = 200
    tokens_per_field: int = 8

    def __post_init__(self) -> None:
        if self.category_count < 1:
            raise ValueError("category_count must be >= 1")
        if self.vocabulary_size < 1 or self.tokens_per_field < 1:
            raise ValueError("vocabulary_size and tokens_per_field must be >= 1")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValueError("overlap_fraction must be in [0, 1)")
        for count in self.record_counts() + self.disease_counts():
            if count < 1:
                raise ValueError("all per-category counts must be >= 1")

    def _per_category(self, value: int | tuple[int, ...]) -> tuple[int, ...]:
        if isinstance(value, int):
            return (value,) * self.category_count
        if len(value) != self.category_count:
            raise ValueError(
                f"expected {self.category_count} per-category values, got {len(value)}"
            )
        return tuple(value)

    def record_counts(self) -> tuple[int, ...]:
        return self._per_category(self.records_per_category)

    def disease_counts(self) -> tuple[int, ...]:
        return self._per_category(self.diseases_per_category)


def reference_corpus_spec(seed: int = 0, **overrides) -> SyntheticSpec:
    """A spec mirroring the source corpus shape (record counts, subset sizes,
    overlapping subsets)."""
    params: dict = dict(
        seed=seed,
        records_per_category=REFERENCE_RECORDS_PER_CATEGORY,
        category_count=6,
        diseases_per_category=REFERENCE_DISEASES_PER_CATEGORY,
        overlap_fraction=0.28,
    )
    params.update(overrides)
    return SyntheticSpec(**params)


@dataclass(frozen=True)
class OracleRule:
    """The exact generative labeling rule of a synthetic dataset.

    Category: the (unique) category keyword found in the symptom text.
    Disease: the group keyword selects either a disease directly or, with
    demographic dependence, a pair resolved by an age threshold (even
    groups) or by gender (odd groups).
    """

    category_keywords: tuple[str, ...]
    group_keywords: Mapping[str, tuple[str, ...]]
    membership: Mapping[str, tuple[str, ...]]
    demographic_dependence: bool
    age_threshold: float = AGE_THRESHOLD
    categories: tuple[str, ...] = field(default=())

    def disease_for(self, category: str, group: int, age: float, gender: str) -> str:
        subset = self.membership[category]
        if not self.demographic_dependence:
            return subset[group]
        lo = 2 * group
        hi = min(2 * group + 1, len(subset) - 1)
        if lo == hi:
            return subset[lo]
        if group % 2 == 0:
            return subset[hi] if age >= self.age_threshold else subset[lo]
        return subset[hi] if gender == "male" else subset[lo]

    def label(self, record: PatientRecord) -> tuple[str, str]:
        """Apply the planted rule to a record, reproducing its gold labels."""
        from .text import split_text

        tokens = set(split_text(record.text_symptom))
        category = None
        for idx, cate in enumerate(self.categories):
            if self.category_keywords[idx] in tokens:
                category = cate
                break
        if category is None:
            raise ValueError("no category keyword present in symptom text")
        group = None
        for g, keyword in enumerate(self.group_keywords[category]):
            if keyword in tokens:
                group = g
                break
        if group is None:
            raise ValueError(f"no disease keyword for category {category!r}")
        if record.age is None:
            raise ValueError("planted rule requires an age")
        return category, self.disease_for(category, group, record.age, record.gender)

    def accuracy(self, ds: Dataset) -> float:
        """Fraction of records whose stored labels the rule reproduces."""
        if len(ds) == 0:
            raise ValueError("empty dataset")
        hits = 0
        for record in ds:
            cate, dise = self.label(record)
            if cate == record.category_label and dise == record.disease_label:
                hits += 1
        return hits / len(ds)


def _build_taxonomy(spec: SyntheticSpec) -> Taxonomy:
    disease_counts = spec.disease_counts()
    categories = tuple(f"cat{i:02d}" for i in range(spec.category_count))
    diseases: list[str] = []
    membership: dict[str, tuple[str, ...]] = {}
    previous: tuple[str, ...] = ()
    for i, cate in enumerate(categories):
        m = disease_counts[i]
        shared = 0
        if i > 0 and spec.overlap_fraction > 0:
            shared = min(int(math.floor(spec.overlap_fraction * m)), len(previous))
        subset = list(previous[len(previous) - shared :]) if shared else []
        while len(subset) < m:
            name = f"dis{len(diseases):03d}"
            diseases.append(name)
            subset.append(name)
        membership[cate] = tuple(subset)
        previous = tuple(subset)
    return Taxonomy(
        categories=categories, diseases=tuple(diseases), membership=membership
    )


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Taxonomy, OracleRule]:
    """Generate a dataset whose labels follow a planted keyword/demographic rule.

    Pure function of the spec (seed included): repeated calls produce
    byte-identical datasets.
    """
    taxonomy = _build_taxonomy(spec)
    categories = taxonomy.categories
    cat_keywords = tuple(f"catsign{i}" for i in range(len(categories)))
    group_keywords: dict[str, tuple[str, ...]] = {}
    for i, cate in enumerate(categories):
        m = len(taxonomy.membership[cate])
        n_groups = int(math.ceil(m / 2)) if spec.demographic_dependence else m
        group_keywords[cate] = tuple(f"grpsign{i}x{g}" for g in range(n_groups))
    rule = OracleRule(
        category_keywords=cat_keywords,
        group_keywords=group_keywords,
        membership=taxonomy.membership,
        demographic_dependence=spec.demographic_dependence,
        categories=categories,
    )

    rng = np.random.default_rng(spec.seed)
    fillers = [f"word{k}" for k in range(spec.vocabulary_size)]

    def filler_text() -> str:
        ids = rng.integers(0, spec.vocabulary_size, size=spec.tokens_per_field)
        return " ".join(fillers[j] for j in ids)

    def symptom_text(cat_kw: str, grp_kw: str, terse: bool) -> str:
        if terse:
            return f"{cat_kw} {grp_kw}"
        tokens = [fillers[j] for j in rng.integers(0, spec.vocabulary_size, size=spec.tokens_per_field)]
        for keyword in (cat_kw, grp_kw):
            tokens.insert(int(rng.integers(0, len(tokens) + 1)), keyword)
        return " ".join(tokens)

    records: list[PatientRecord] = []
    record_counts = spec.record_counts()
    for i, cate in enumerate(categories):
        n_groups = len(group_keywords[cate])
        for _ in range(record_counts[i]):
            age = float(np.round(rng.uniform(1.0, 90.0), 1))
            height = float(np.round(rng.uniform(50.0, 200.0), 1))
            weight = float(np.round(rng.uniform(3.0, 120.0), 1))
            duration = float(np.round(rng.uniform(0.0, 365.0), 1))
            gender = "male" if rng.random() < 0.5 else "female"
            if gender == "male":
                pregnancy = "unknown"
            else:
                pregnancy = ["not_pregnant", "pregnant", "unknown"][
                    int(rng.choice(3, p=[0.7, 0.15, 0.15]))
                ]
            group = int(rng.integers(0, n_groups))
            disease = rule.disease_for(cate, group, age, gender)
            terse = rng.random() < 0.2
            texts = {}
            for name in ("chronic", "surgery", "therapy", "usage", "allergy"):
                if terse or rng.random() < 0.3:
                    texts[name] = ""
                else:
                    texts[name] = filler_text()
            records.append(
                PatientRecord(
                    text_chronic=texts["chronic"],
                    text_surgery=texts["surgery"],
                    text_therapy=texts["therapy"],
                    text_usage=texts["usage"],
                    text_symptom=symptom_text(cat_keywords[i], group_keywords[cate][group], terse),
                    text_allergy=texts["allergy"],
                    age=age,
                    height=height,
                    weight=weight,
                    duration=duration,
                    gender=gender,
                    pregnancy=pregnancy,
                    category_label=cate,
                    disease_label=disease,
                )
            )
    dataset = Dataset(records=tuple(records), taxonomy=taxonomy)
    return dataset, taxonomy, rule
