"""The detection pipeline: transform, digit statistics, Benford comparison.

``score_image`` chains the gradient-magnitude transform, the first-digit
histogram and the KS/KL statistics against the Benford reference into one
per-image record. ``separation_sweep`` calibrates the single-threshold rule
that best splits clean from adversarial scores.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from digitlaw.attacks import AttackConfig, AttackMethod, NormKind
from digitlaw.benford import (
    DigitDistribution,
    benford_pmf,
    digit_histogram,
    kl_divergence,
    ks_statistic,
)
from digitlaw.imaging import ImageTensor, Scale, gradient_magnitude


class Condition(enum.Enum):
    CLEAN = "clean"
    ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class ScoreRecord:
    """Per-image detection record.

    Degenerate records (images whose transform produced no digits at all)
    carry NaN statistics and an explicit flag; they are never silently
    scored.
    """

    image_id: str
    condition: Condition
    attack_meta: AttackConfig | None
    ks: float
    kl: float
    digit_probs: np.ndarray
    degenerate: bool = False

    def __post_init__(self) -> None:
        probs = np.array(self.digit_probs, dtype=np.float64)
        if probs.shape != (9,):
            raise ValueError(f"digit_probs must have 9 entries, got shape {probs.shape}")
        probs.setflags(write=False)
        object.__setattr__(self, "digit_probs", probs)
        if self.degenerate:
            if not (math.isnan(self.ks) and math.isnan(self.kl)):
                raise ValueError("degenerate records must carry NaN statistics")
        else:
            if not 0.0 <= self.ks <= 1.0:
                raise ValueError(f"ks must lie in [0, 1], got {self.ks}")
            if self.kl < 0.0:
                raise ValueError(f"kl must be nonnegative, got {self.kl}")


@dataclass(frozen=True)
class SeparationResult:
    """Best single-threshold split and the full threshold/percentage curve."""

    best_threshold: float
    best_percentage: float
    curve: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.curve:
            raise ValueError("separation curve cannot be empty")
        taus = [tau for tau, _ in self.curve]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError("curve thresholds must be strictly increasing")
        top = max(pct for _, pct in self.curve)
        if abs(self.best_percentage - top) > 1e-12:
            raise ValueError("best_percentage must equal the curve maximum")


def score_image(
    image: ImageTensor,
    *,
    image_id: str = "",
    condition: Condition = Condition.CLEAN,
    attack_meta: AttackConfig | None = None,
    transform_depth: int = 1,
    reference: DigitDistribution | None = None,
) -> ScoreRecord:
    """Score one image against the Benford reference.

    Unit-scale images are first converted to the 8-bit scale (multiplied by
    255) so digits are counted on pixel-value magnitudes. The gradient
    magnitude transform is applied ``transform_depth`` times (default once);
    digits from all channels pool into a single histogram.
    """
    if transform_depth < 1:
        raise ValueError("transform_depth must be at least 1")
    if image.scale is Scale.DERIVED:
        raise ValueError("score_image expects a pixel image (unit or 8-bit scale)")
    reference = benford_pmf() if reference is None else reference
    work = image.to_eight_bit()
    for _ in range(transform_depth):
        work = gradient_magnitude(work)
    histogram = digit_histogram(work.data.ravel())
    if histogram.is_empty:
        return ScoreRecord(
            image_id=image_id,
            condition=condition,
            attack_meta=attack_meta,
            ks=float("nan"),
            kl=float("nan"),
            digit_probs=np.zeros(9),
            degenerate=True,
        )
    return ScoreRecord(
        image_id=image_id,
        condition=condition,
        attack_meta=attack_meta,
        ks=ks_statistic(histogram, reference),
        kl=kl_divergence(histogram, reference),
        digit_probs=histogram.probs,
        degenerate=False,
    )


def separation_sweep(clean, adversarial) -> SeparationResult:
    """Best pooled accuracy of the rule "adversarial iff score > threshold".

    Candidate thresholds are the midpoints between adjacent distinct
    observed scores plus one sentinel below and the maximum itself, which
    covers every achievable split. Percentage at threshold tau counts
    adversarial scores strictly above tau plus clean scores at or below
    tau, over the pooled total. Ties break toward the smallest threshold.
    """
    clean_arr = np.sort(np.asarray(list(clean), dtype=np.float64))
    adv_arr = np.sort(np.asarray(list(adversarial), dtype=np.float64))
    if clean_arr.size == 0 or adv_arr.size == 0:
        raise ValueError("separation sweep needs at least one score on each side")
    if not (np.all(np.isfinite(clean_arr)) and np.all(np.isfinite(adv_arr))):
        raise ValueError("scores must be finite (drop degenerate records first)")
    values = np.unique(np.concatenate([clean_arr, adv_arr]))
    candidates = np.concatenate(
        [[values[0] - 1.0], (values[:-1] + values[1:]) / 2.0, [values[-1]]]
    )
    total = clean_arr.size + adv_arr.size
    curve = []
    best_tau = candidates[0]
    best_pct = -1.0
    for tau in candidates:
        adv_high = adv_arr.size - np.searchsorted(adv_arr, tau, side="right")
        clean_low = np.searchsorted(clean_arr, tau, side="right")
        pct = (adv_high + clean_low) / total
        curve.append((float(tau), float(pct)))
        if pct > best_pct + 1e-15:
            best_tau, best_pct = float(tau), float(pct)
    return SeparationResult(best_threshold=best_tau, best_percentage=best_pct, curve=tuple(curve))


SCORE_CSV_COLUMNS = [
    "image_id",
    "condition",
    "attack_method",
    "attack_norm",
    "attack_epsilon",
    "attack_step_size",
    "attack_max_iters",
    "attack_random_start",
    "ks",
    "kl",
    "p1",
    "p2",
    "p3",
    "p4",
    "p5",
    "p6",
    "p7",
    "p8",
    "p9",
]


def _fmt(value: float) -> str:
    return repr(float(value))


def write_scores_csv(records, path: str | Path) -> None:
    """Serialize records with the stable documented column order.

    Degenerate records leave the ks and kl cells empty. Attack cells are
    empty for clean records without attack metadata.
    """
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SCORE_CSV_COLUMNS)
        for rec in records:
            meta = rec.attack_meta
            row = [
                rec.image_id,
                rec.condition.value,
                meta.method.value if meta else "",
                meta.norm.value if meta else "",
                _fmt(meta.epsilon) if meta else "",
                _fmt(meta.step_size) if meta and meta.step_size is not None else "",
                str(meta.max_iters) if meta else "",
                ("true" if meta.random_start else "false") if meta else "",
                "" if rec.degenerate else _fmt(rec.ks),
                "" if rec.degenerate else _fmt(rec.kl),
            ]
            row.extend(_fmt(p) for p in rec.digit_probs)
            writer.writerow(row)


def read_scores_csv(path: str | Path) -> list[ScoreRecord]:
    """Parse a scores CSV back into records.

    Attack metadata is reconstructed with default early-stop and seed
    fields, which the CSV does not carry.
    """
    records = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != SCORE_CSV_COLUMNS:
            raise ValueError(f"unexpected scores CSV header: {header}")
        for row in reader:
            if len(row) != len(SCORE_CSV_COLUMNS):
                raise ValueError(f"malformed scores CSV row: {row}")
            meta = None
            if row[2]:
                meta = AttackConfig(
                    method=AttackMethod(row[2]),
                    norm=NormKind(row[3]),
                    epsilon=float(row[4]),
                    step_size=float(row[5]) if row[5] else None,
                    max_iters=int(row[6]),
                    random_start=row[7] == "true",
                )
            degenerate = row[8] == ""
            records.append(
                ScoreRecord(
                    image_id=row[0],
                    condition=Condition(row[1]),
                    attack_meta=meta,
                    ks=float("nan") if degenerate else float(row[8]),
                    kl=float("nan") if degenerate else float(row[9]),
                    digit_probs=np.array([float(v) for v in row[10:19]]),
                    degenerate=degenerate,
                )
            )
    return records
