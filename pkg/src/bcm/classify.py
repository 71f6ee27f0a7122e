"""Topic prediction for point-cloud documents against labeled references.

Four predictors share one set of transport solves:

``NN1``
    topic of the nearest reference in the entropic W2^2 surrogate;
``MinAvgDist``
    topic whose references are nearest on average;
``MinBaryLoss``
    topic whose references best explain the query as a barycenter
    (smallest minimized quadratic form);
``MaxCoord``
    topic receiving the most coordinate mass when all references are used
    jointly.

Transport results are cached by content hash so repeated queries and
nested reference sets reuse earlier solves.
"""
from __future__ import annotations

import csv
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, DomainError
from .fileio import read_pointcloud, write_pointcloud
from .gaussian import trial_rng
from .ot import PointCloud, barycentric_projection, entropic_cost, sinkhorn, squared_cost_matrix
from .qp import gram_from_displacements, solve_simplex_qp

METHODS = ("NN1", "MinAvgDist", "MinBaryLoss", "MaxCoord")


@dataclass(frozen=True, eq=False)
class LabeledCloud:
    cloud: PointCloud
    label: Hashable


@dataclass(frozen=True, eq=False)
class Transport:
    """Plan cost and barycentric projection for one (query, reference) pair."""

    cost: float
    image: np.ndarray


class TransportCache:
    """Thread-safe memo of :class:`Transport` keyed by ``(query, ref, epsilon)``.

    Each key is computed by exactly one thread; others asking for the same
    key wait for that result instead of solving again.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._data: dict = {}
        self._pending: dict = {}
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._data)

    def get(self, key, compute):
        with self._lock:
            if key in self._data:
                self.hits += 1
                return self._data[key]
            event = self._pending.get(key)
            owner = event is None
            if owner:
                event = self._pending[key] = threading.Event()
                self.misses += 1
        if not owner:
            event.wait()
            with self._lock:
                self.hits += 1
                return self._data[key]
        try:
            value = compute()
            with self._lock:
                self._data[key] = value
        finally:
            with self._lock:
                del self._pending[key]
            event.set()
        return value


def transport(query: PointCloud, ref: PointCloud, epsilon: float, tol=1e-7, max_iters=10_000) -> Transport:
    """Entropic OT with unhalved squared cost; returns plan cost and map image."""
    _, plan = sinkhorn(query, ref, epsilon, max_iters=max_iters, tol=tol)
    cost = entropic_cost(plan, squared_cost_matrix(query, ref))
    return Transport(cost, barycentric_projection(plan, query.weights, ref))


class Classifier:
    """Runs the predictors for queries against a fixed reference list."""

    def __init__(
        self,
        refs: Sequence[LabeledCloud],
        epsilon: float,
        cache: TransportCache | None = None,
        tol: float = 1e-7,
        max_iters: int = 10_000,
        threads: int = 1,
        topics: Sequence | None = None,
    ):
        if len(refs) == 0:
            raise DomainError("empty reference set")
        if not epsilon > 0:
            raise DomainError("epsilon must be positive")
        self.refs = list(refs)
        self.epsilon = float(epsilon)
        self.cache = cache if cache is not None else TransportCache()
        self.tol = tol
        self.max_iters = max_iters
        self.threads = threads
        present = sorted({r.label for r in self.refs})
        self.topics = sorted(set(topics)) if topics is not None else present
        self._missing = [t for t in self.topics if t not in present]

    def transports(self, query: PointCloud) -> list[Transport]:
        qd = query.digest()

        def one(ref: LabeledCloud):
            key = (qd, ref.cloud.digest(), self.epsilon)
            return self.cache.get(
                key, lambda: transport(query, ref.cloud, self.epsilon, self.tol, self.max_iters)
            )

        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                return list(pool.map(one, self.refs))
        return [one(r) for r in self.refs]

    def _per_topic(self, method):
        if self._missing:
            raise DomainError(f"{method} needs references for every topic; none for {self._missing}")

    def scores(self, query: PointCloud, method: str) -> dict:
        """Per-topic score; NN1/MinAvgDist/MinBaryLoss minimize it, MaxCoord maximizes."""
        if method not in METHODS:
            raise DomainError(f"unknown method {method!r}; choose from {METHODS}")
        if method in ("MinAvgDist", "MinBaryLoss"):
            self._per_topic(method)
        T = self.transports(query)
        labels = [r.label for r in self.refs]
        present = [t for t in self.topics if t in labels]
        if method == "NN1":
            return {t: min(tr.cost for tr, l in zip(T, labels) if l == t) for t in present}
        if method == "MinAvgDist":
            return {t: float(np.mean([tr.cost for tr, l in zip(T, labels) if l == t])) for t in present}
        if method == "MinBaryLoss":
            out = {}
            for t in present:
                maps = [tr.image for tr, l in zip(T, labels) if l == t]
                A = gram_from_displacements(query.points, query.weights, maps)
                out[t] = solve_simplex_qp(A).value
            return out
        A = gram_from_displacements(query.points, query.weights, [tr.image for tr in T])
        lam = solve_simplex_qp(A).lam
        mass = {t: 0.0 for t in self.topics}
        for l, m in zip(labels, lam):
            mass[l] += float(m)
        return mass

    def predict(self, query: PointCloud, method: str):
        s = self.scores(query, method)
        # min/max keep the first extremum, so sorting gives ties to the smallest label
        pick = max if method == "MaxCoord" else min
        return pick(sorted(s), key=s.__getitem__)


def classify(
    query: PointCloud,
    refs: Sequence[LabeledCloud],
    method: str,
    epsilon: float,
    cache: TransportCache | None = None,
    **kwargs,
):
    """Predict the topic of ``query``; ties go to the smallest topic label."""
    return Classifier(refs, epsilon, cache, **kwargs).predict(query, method)


# --- synthetic corpus ----------------------------------------------------

# ordered so that the first topics are the most distinct after standardization
_SHAPES = (
    stats.uniform,
    stats.expon,
    stats.norm,
    stats.gumbel_r,
    stats.laplace,
    stats.logistic,
)


def synthetic_corpus(
    topics: int,
    per_topic: int,
    n_points: int,
    rng: np.random.Generator,
    location=(-0.25, 0.25),
    scale=(0.8, 1.25),
) -> list[LabeledCloud]:
    """1D location-scale documents, one base shape per topic.

    A document of topic ``t`` puts uniform weight on ``a + b * F_t^{-1}(u_k)``
    at the midpoint quantile levels ``u_k = (k + 1/2) / n``, with random
    location ``a`` and scale ``b``.  Documents of one topic are therefore a
    compatible family: their barycenters are again members of the family.
    """
    if not 1 <= topics <= len(_SHAPES):
        raise DomainError(f"topics must lie in [1, {len(_SHAPES)}]")
    u = (np.arange(n_points) + 0.5) / n_points
    docs = []
    for t in range(topics):
        base = _SHAPES[t].ppf(u)
        base = (base - base.mean()) / base.std()
        for _ in range(per_topic):
            a = rng.uniform(*location)
            b = rng.uniform(*scale)
            docs.append(LabeledCloud(PointCloud.uniform((a + b * base)[:, None]), t))
    return docs


# --- dataset directories ---------------------------------------------------

LABELS_FILE = "labels.csv"


def save_dataset(directory, docs: Sequence[LabeledCloud], metadata=None) -> None:
    """One point-cloud CSV per document plus ``labels.csv`` (filename, topic)."""
    os.makedirs(directory, exist_ok=True)
    rows = []
    for i, doc in enumerate(docs):
        name = f"doc_{i:05d}.csv"
        write_pointcloud(os.path.join(directory, name), doc.cloud, metadata)
        rows.append((name, doc.label))
    with open(os.path.join(directory, LABELS_FILE), "w", newline="") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}={value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("filename", "topic"))
        w.writerows(rows)


def _label(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def load_dataset(directory) -> list[LabeledCloud]:
    path = os.path.join(directory, LABELS_FILE)
    if not os.path.exists(path):
        raise DomainError(f"{directory}: missing {LABELS_FILE}")
    docs = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    for row in csv.reader(lines):
        if row == ["filename", "topic"]:
            continue
        if len(row) != 2:
            raise DomainError(f"{path}: expected 'filename,topic' rows, got {row}")
        docs.append(LabeledCloud(read_pointcloud(os.path.join(directory, row[0])), _label(row[1])))
    if not docs:
        raise DomainError(f"{path}: no documents listed")
    return docs


# --- accuracy protocol ------------------------------------------------------

@dataclass
class ClassifyConfig:
    """Repeated random-split evaluation.

    For each repeat, every topic's documents are shuffled once; the first
    ``k`` of them are the references for each ``k`` (nested reuse, so
    transports cached for smaller ``k`` serve the larger ones), and the test
    set is drawn from documents not used as references at the largest
    ``k``.  With ``test_from_refs`` the references themselves are the test
    set.
    """

    epsilon: float | None = None
    ks: tuple = (1, 2, 3, 4, 5)
    repeats: int = 10
    test_size: int = 100
    seed: int = 0
    methods: tuple = METHODS
    test_from_refs: bool = False
    tol: float = 1e-7
    max_iters: int = 100_000
    threads: int = 1

    def validate(self):
        if self.epsilon is None:
            raise ConfigError("epsilon is required for classification")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not self.ks or any(int(k) < 1 for k in self.ks):
            raise ConfigError("ks must be positive integers")
        if self.repeats < 1 or self.test_size < 1:
            raise ConfigError("repeats and test_size must be positive")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}")


RESULT_COLUMNS = ("method", "k", "accuracy", "repeats")
REPEAT_COLUMNS = ("repeat", "method", "k", "accuracy")


def run_classification(docs: Sequence[LabeledCloud], cfg: ClassifyConfig):
    """Mean accuracy per ``(method, k)``.

    Returns ``(summary_rows, repeat_rows, cache)`` with rows following
    ``RESULT_COLUMNS`` and ``REPEAT_COLUMNS``.
    """
    cfg.validate()
    topics = sorted({d.label for d in docs})
    by_topic = {t: [d for d in docs if d.label == t] for t in topics}
    kmax = max(int(k) for k in cfg.ks)
    short = [t for t in topics if len(by_topic[t]) < kmax]
    if short:
        raise ConfigError(f"topics {short} have fewer than k={kmax} documents")
    cache = TransportCache()
    repeat_rows = []
    for r in range(cfg.repeats):
        rng = trial_rng(cfg.seed, r)
        order = {t: [by_topic[t][i] for i in rng.permutation(len(by_topic[t]))] for t in topics}
        if cfg.test_from_refs:
            test = None
        else:
            pool = [d for t in topics for d in order[t][kmax:]]
            if not pool:
                raise ConfigError("no documents left for testing; use test_from_refs")
            pick = rng.choice(len(pool), size=min(cfg.test_size, len(pool)), replace=False)
            test = [pool[i] for i in sorted(pick)]
        for k in sorted(int(k) for k in cfg.ks):
            refs = [d for t in topics for d in order[t][:k]]
            queries = refs if test is None else test
            clf = Classifier(refs, cfg.epsilon, cache, cfg.tol, cfg.max_iters, cfg.threads, topics)
            for m in cfg.methods:
                hits = sum(clf.predict(q.cloud, m) == q.label for q in queries)
                repeat_rows.append((r, m, k, hits / len(queries)))
    summary = []
    for m in cfg.methods:
        for k in sorted(int(k) for k in cfg.ks):
            acc = [row[3] for row in repeat_rows if row[1] == m and row[2] == k]
            summary.append((m, k, float(np.mean(acc)), len(acc)))
    return summary, repeat_rows, cache
