"""Dataset handling: CSV ingestion, trial-wise splits, subsampling, and the
two-class synthetic benchmark.

A feature dataset is a matrix of D-dimensional rows, each carrying a class
label, a trial id, and a participant id. The CSV form uses the header
``f1,...,fD,label,trial,participant``; floats are rendered with repr
semantics (up to 17 significant digits) so a save/load round trip is
bit-exact.
"""

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DataFormatError",
    "FeatureDataset",
    "SplitPlan",
    "generate_simulation",
    "load_csv",
    "save_csv",
    "split_by_trials",
    "subsample",
]


class DataFormatError(ValueError):
    """Malformed dataset file or inconsistent dataset contents."""


def _frozen(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """Feature matrix with per-row label, trial, and participant ids."""

    features: np.ndarray
    labels: np.ndarray
    trials: np.ndarray
    participants: np.ndarray

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        if feats.size == 0:
            feats = feats.reshape(0, feats.shape[1] if feats.ndim == 2 else 0)
        labels = np.asarray(self.labels, dtype=int)
        trials = np.asarray(self.trials, dtype=int)
        parts = np.asarray(self.participants, dtype=int)
        n = feats.shape[0]
        if not (labels.shape == trials.shape == parts.shape == (n,)):
            raise DataFormatError(
                f"column lengths disagree: {n} rows vs labels {labels.shape}, "
                f"trials {trials.shape}, participants {parts.shape}"
            )
        if n and not np.all(np.isfinite(feats)):
            raise DataFormatError("features must be finite")
        if n and labels.min() < 1:
            raise DataFormatError("labels must be positive integers")
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "trials", _frozen(trials))
        object.__setattr__(self, "participants", _frozen(parts))

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def class_ids(self):
        return sorted(int(v) for v in np.unique(self.labels))

    def subset(self, mask):
        mask = np.asarray(mask)
        return FeatureDataset(
            features=self.features[mask],
            labels=self.labels[mask],
            trials=self.trials[mask],
            participants=self.participants[mask],
        )


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train/test trial id sets covering every trial in scope."""

    train_trials: frozenset
    test_trials: frozenset

    def __post_init__(self):
        train = frozenset(int(t) for t in self.train_trials)
        test = frozenset(int(t) for t in self.test_trials)
        if train & test:
            raise ValueError(f"trial ids leak across the split: {sorted(train & test)}")
        object.__setattr__(self, "train_trials", train)
        object.__setattr__(self, "test_trials", test)


SIMULATION_MEANS = ((2.5, 2.5), (5.0, 5.0))
SIMULATION_VAR = 0.5
SIMULATION_N_PER_CLASS = 100
SIMULATION_N_OUTLIERS = 10
SIMULATION_RANGE = (0.0, 8.0)
OUTLIER_RANGE = (0.0, 7.0)


def generate_simulation(seed=0, with_outliers=True, grid_step=0.05):
    """Two well-separated Gaussian classes plus uniform outliers on class 1.

    Returns ``(train, grid)``. Training data holds 100 draws per class from
    isotropic Gaussians at (2.5, 2.5) and (5, 5) with variance 0.5; when
    ``with_outliers`` is set, 10 points uniform on [0, 7]^2 are appended to
    class 1 (110 class-1 rows total). The evaluation grid covers
    [0, 8]^2 at ``grid_step`` with the optimal labels of the clean
    generating mixture (equidistance ties go to class 1).
    """
    rng = np.random.default_rng(seed)
    sd = np.sqrt(SIMULATION_VAR)
    blocks = []
    labels = []
    for cid, mean in enumerate(SIMULATION_MEANS, start=1):
        pts = np.asarray(mean) + sd * rng.standard_normal((SIMULATION_N_PER_CLASS, 2))
        blocks.append(pts)
        labels.extend([cid] * SIMULATION_N_PER_CLASS)
    if with_outliers:
        lo, hi = OUTLIER_RANGE
        outliers = rng.uniform(lo, hi, size=(SIMULATION_N_OUTLIERS, 2))
        blocks.append(outliers)
        labels.extend([1] * SIMULATION_N_OUTLIERS)
    feats = np.vstack(blocks)
    n = feats.shape[0]
    train = FeatureDataset(
        features=feats,
        labels=np.asarray(labels),
        trials=np.ones(n, dtype=int),
        participants=np.ones(n, dtype=int),
    )

    lo, hi = SIMULATION_RANGE
    steps = int(round((hi - lo) / grid_step))
    axis = np.linspace(lo, hi, steps + 1)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    grid_pts = np.column_stack([g1.ravel(), g2.ravel()])
    mu1, mu2 = (np.asarray(m) for m in SIMULATION_MEANS)
    d1 = ((grid_pts - mu1) ** 2).sum(axis=1)
    d2 = ((grid_pts - mu2) ** 2).sum(axis=1)
    grid_labels = np.where(d1 <= d2, 1, 2)
    grid = FeatureDataset(
        features=grid_pts,
        labels=grid_labels,
        trials=np.ones(grid_pts.shape[0], dtype=int),
        participants=np.ones(grid_pts.shape[0], dtype=int),
    )
    return train, grid


def save_csv(dataset, path):
    """Write a dataset in the canonical CSV form."""
    d = dataset.dim
    header = ",".join([f"f{i + 1}" for i in range(d)] + ["label", "trial", "participant"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i in range(dataset.n_rows):
            cells = [repr(float(v)) for v in dataset.features[i]]
            cells += [
                str(int(dataset.labels[i])),
                str(int(dataset.trials[i])),
                str(int(dataset.participants[i])),
            ]
            fh.write(",".join(cells) + "\n")


def load_csv(path, schema=None):
    """Read a dataset written in the canonical CSV form.

    ``schema`` optionally pins the expected feature dimension. Errors name
    the offending row and column; non-finite cells are rejected.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise DataFormatError(f"{path}: empty file (missing header)")
    header = lines[0].split(",")
    tail = ["label", "trial", "participant"]
    if len(header) < 4 or header[-3:] != tail:
        raise DataFormatError(
            f"{path}: header must end with {','.join(tail)}, got {lines[0]!r}"
        )
    d = len(header) - 3
    expected = [f"f{i + 1}" for i in range(d)]
    if header[:d] != expected:
        raise DataFormatError(
            f"{path}: feature columns must be {','.join(expected)}, got {header[:d]}"
        )
    if schema is not None and d != int(schema):
        raise DataFormatError(f"{path}: expected {schema} feature columns, found {d}")
    feats = np.empty((len(lines) - 1, d))
    labels = np.empty(len(lines) - 1, dtype=int)
    trials = np.empty(len(lines) - 1, dtype=int)
    parts = np.empty(len(lines) - 1, dtype=int)
    row_count = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != d + 3:
            raise DataFormatError(
                f"{path}: row {lineno} has {len(cells)} cells, expected {d + 3}"
            )
        for j in range(d):
            try:
                value = float(cells[j])
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {lineno}, column {header[j]}: not a number ({cells[j]!r})"
                ) from None
            if not np.isfinite(value):
                raise DataFormatError(
                    f"{path}: row {lineno}, column {header[j]}: non-finite value"
                )
            feats[row_count, j] = value
        for j, name in enumerate(tail):
            try:
                cell = cells[d + j]
                int_value = int(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {lineno}, column {name}: not an integer ({cells[d + j]!r})"
                ) from None
            if name == "label":
                labels[row_count] = int_value
            elif name == "trial":
                trials[row_count] = int_value
            else:
                parts[row_count] = int_value
        row_count += 1
    return FeatureDataset(
        features=feats[:row_count],
        labels=labels[:row_count],
        trials=trials[:row_count],
        participants=parts[:row_count],
    )


def split_by_trials(dataset, s):
    """All train/test partitions using ``s`` of the distinct trials for training.

    Returns one ``(plan, train, test)`` entry per size-``s`` combination of
    trial ids, in lexicographic order of the sorted ids. No trial ever
    appears on both sides.
    """
    trial_ids = sorted(int(t) for t in np.unique(dataset.trials))
    t = len(trial_ids)
    if not 0 < s < t:
        raise ValueError(f"need 0 < s < {t} distinct trials, got s = {s}")
    out = []
    for combo in itertools.combinations(trial_ids, s):
        train_set = frozenset(combo)
        test_set = frozenset(trial_ids) - train_set
        plan = SplitPlan(train_trials=train_set, test_trials=test_set)
        mask = np.isin(dataset.trials, list(combo))
        out.append((plan, dataset.subset(mask), dataset.subset(~mask)))
    return out


def subsample(dataset, fraction, seed):
    """Stratified uniform subsample without replacement.

    Each class contributes ``round(fraction * class_count)`` rows (at least
    one), preserving class proportions within one row. Rows are first put
    in a canonical sort order so the selected multiset depends only on the
    data multiset, the fraction, and the seed, never on input row order.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    order = np.lexsort(
        tuple(dataset.features[:, j] for j in reversed(range(dataset.dim)))
        + (dataset.participants, dataset.trials, dataset.labels)
    )
    keep = []
    for cid in dataset.class_ids:
        rows = order[dataset.labels[order] == cid]
        take = max(1, int(round(fraction * rows.shape[0])))
        chosen = rng.choice(rows.shape[0], size=min(take, rows.shape[0]), replace=False)
        keep.extend(rows[np.sort(chosen)])
    return dataset.subset(np.asarray(keep, dtype=int))
