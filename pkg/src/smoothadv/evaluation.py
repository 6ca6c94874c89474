"""Attack evaluation: success probability, distortion, and reports.

Only images the classifier gets right are attacked; success probability
is the fraction of those that flip, and the average distortion is
conditional on success.  The operating characteristic P(D) gives the
success probability achievable within a distortion budget D.  Runs of the
same attack at several budgets merge per image: a success on any run
counts, at the smallest distortion any run achieved.

When a defense filter is active, it is applied to every image before
prediction — both the initial correctness check and the success check —
while the attack itself still sees the raw input, modeling an attacker
unaware of the defense.
"""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, is_dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyReportError
from .image import l2_distortion
from .magnify import BilateralConfig, bilateral_filter

DEFENSE_BILATERAL = BilateralConfig(sigma_domain=0.5, sigma_range=0.2)
REPORT_SCHEMA = 1
CHARACTERISTIC_POINTS = 100


def bilateral_defense(x, cfg=DEFENSE_BILATERAL):
    """The input-filtering defense: a small-window bilateral smoothing."""
    return bilateral_filter(x, cfg)


@dataclass(frozen=True)
class ImageOutcome:
    """Result of attacking one correctly-classified image."""

    image_id: int
    label: int
    success: bool
    distortion: float | None


@dataclass
class EvalReport:
    """Aggregate attack statistics over one labeled image set."""

    attack: str
    config: dict
    total: int  # images presented, before the correctness filter
    outcomes: list  # one ImageOutcome per correctly-classified image

    @property
    def correctly_classified(self):
        return len(self.outcomes)

    @property
    def successes(self):
        return sum(1 for o in self.outcomes if o.success)

    @property
    def p_suc(self):
        n = self.correctly_classified
        return self.successes / n if n else 0.0

    @property
    def success_distortions(self):
        """Distortions of the successful attacks, sorted ascending."""
        return sorted(o.distortion for o in self.outcomes if o.success)

    @property
    def mean_distortion(self):
        """Average distortion conditional on success; None if none succeeded."""
        ds = self.success_distortions
        return sum(ds) / len(ds) if ds else None


def evaluate_attack(classifier, attack, images, labels, defense=None, workers=1, image_ids=None, name=None):
    """Run an attack over a labeled set and aggregate the outcomes.

    attack is a callable (image, label) -> AttackResult, e.g. from
    make_attack.  Raises EmptyReportError when no image passes the
    correctness filter.  Results do not depend on worker count or
    completion order.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images vs {len(labels)} labels")
    if image_ids is None:
        image_ids = list(range(len(images)))

    view = defense if defense is not None else lambda x: x
    kept = [
        (int(i), x, int(y))
        for i, x, y in zip(image_ids, images, labels)
        if int(np.argmax(classifier.logits(view(x)))) == int(y)
    ]
    if not kept:
        raise EmptyReportError("no image in the set is classified correctly; nothing to attack")

    def attack_one(item):
        image_id, x, y = item
        result = attack(x, y)
        success = int(np.argmax(classifier.logits(view(result.adversarial)))) != y
        distortion = l2_distortion(result.adversarial, x) if success else None
        return ImageOutcome(image_id=image_id, label=y, success=success, distortion=distortion)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(attack_one, kept))
    else:
        outcomes = [attack_one(item) for item in kept]

    cfg = getattr(attack, "config", None)
    return EvalReport(
        attack=name or (cfg.kind if cfg is not None else getattr(attack, "__name__", "attack")),
        config=asdict(cfg) if is_dataclass(cfg) else {},
        total=len(images),
        outcomes=outcomes,
    )


def operating_characteristic(report, budget):
    """P(D): fraction of the correctly-classified set beaten within budget."""
    if budget < 0:
        raise ValueError(f"distortion budget must be nonnegative, got {budget}")
    n = report.correctly_classified
    if n == 0:
        return 0.0
    return sum(1 for d in report.success_distortions if d <= budget) / n


def characteristic_grid(report, points=CHARACTERISTIC_POINTS):
    """Sampled operating characteristic: (budgets, probabilities).

    The grid is `points` uniform values over [0, D_max] plus the exact
    jump points (the success distortions themselves), deduplicated and
    sorted, so the staircase is reproduced exactly.
    """
    ds = np.array(report.success_distortions)
    if ds.size == 0:
        return np.array([0.0]), np.array([0.0])
    grid = np.unique(np.concatenate([np.linspace(0.0, ds[-1], points), ds]))
    probs = np.searchsorted(ds, grid, side="right") / report.correctly_classified
    return grid, probs


def merge_multi_epsilon(reports):
    """Merge runs of one attack at several budgets over the same images.

    Per image: success if any run succeeded; distortion is the minimum
    over the succeeding runs.  The runs must cover identical image sets.
    """
    if not reports:
        raise ValueError("nothing to merge")
    if len(reports) == 1:
        return reports[0]
    ids = [tuple((o.image_id, o.label) for o in r.outcomes) for r in reports]
    if any(seq != ids[0] for seq in ids[1:]):
        raise ValueError("runs cover different image sets; cannot merge")

    merged = []
    for per_image in zip(*(r.outcomes for r in reports)):
        wins = [o.distortion for o in per_image if o.success]
        merged.append(
            ImageOutcome(
                image_id=per_image[0].image_id,
                label=per_image[0].label,
                success=bool(wins),
                distortion=min(wins) if wins else None,
            )
        )
    return EvalReport(
        attack=reports[0].attack + "+merged",
        config={"merged": [r.config for r in reports]},
        total=reports[0].total,
        outcomes=merged,
    )


def emit_report(report, path):
    """Write <path>.csv (per-image rows) and <path>.json (summary).

    CSV columns are image_id, success (0/1), distortion (blank on
    failure).  The JSON carries the aggregate statistics and the sampled
    operating characteristic.  Returns (csv_path, json_path).
    """
    base = Path(path)
    if base.suffix in (".csv", ".json"):
        base = base.with_suffix("")
    csv_path = base.with_suffix(".csv")
    json_path = base.with_suffix(".json")
    base.parent.mkdir(parents=True, exist_ok=True)

    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "success", "distortion"])
        for o in report.outcomes:
            writer.writerow([o.image_id, int(o.success), "" if o.distortion is None else repr(o.distortion)])

    grid, probs = characteristic_grid(report)
    summary = {
        "schema": REPORT_SCHEMA,
        "attack": report.attack,
        "config": report.config,
        "total": report.total,
        "correctly_classified": report.correctly_classified,
        "successes": report.successes,
        "p_suc": report.p_suc,
        "mean_distortion": report.mean_distortion,
        "characteristic": {"distortion": grid.tolist(), "probability": probs.tolist()},
    }
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return csv_path, json_path


def read_report_csv(path):
    """Parse an emitted CSV back into ImageOutcome rows."""
    outcomes = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            outcomes.append(
                ImageOutcome(
                    image_id=int(row["image_id"]),
                    label=-1,
                    success=row["success"] == "1",
                    distortion=float(row["distortion"]) if row["distortion"] else None,
                )
            )
    return outcomes
