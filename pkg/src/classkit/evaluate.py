"""Cross-validation, accuracy metrics, and inter-rater reliability.

Folds are teacher-disjoint and stratified: teachers are sorted by their mean
target score and dealt serpentine-style (0..k-1, k-1..0, ...) so every fold
spans small to large scores. Undefined correlations (zero variance) become
explicit None markers, are excluded from fold means, and are counted.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from statistics import fmean, stdev

import numpy as np
from scipy.stats import rankdata

from . import lasso
from .aggregate import fit_standardizer, standardize
from .corpus import Corpus, Dimension, mean_target
from .features import FeatureConfig, compute_features

METRIC_KEYS = ("R", "RMSE", "spearman", "qwk")


@dataclass
class FoldPlan:
    k: int
    assignments: dict[str, int]
    seed: int

    def teachers_in_fold(self, fold: int) -> list[str]:
        return sorted(t for t, f in self.assignments.items() if f == fold)


@dataclass
class CvReport:
    dimension: str
    protocol: str
    feature_mode: str
    lam: float
    non_negative: bool
    k: int
    seed: int
    n_sessions: int
    n_excluded_missing_label: int
    per_fold: list[dict]
    summary: dict
    fold_model_json: list[str] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "protocol": self.protocol,
            "feature_mode": self.feature_mode,
            "lambda": self.lam,
            "non_negative": self.non_negative,
            "k": self.k,
            "seed": self.seed,
            "n_sessions": self.n_sessions,
            "n_excluded_missing_label": self.n_excluded_missing_label,
            "per_fold": self.per_fold,
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


@dataclass
class IrrReport:
    dimension: str
    per_labeler: list[dict]
    summary: dict
    notes: list[str]

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "per_labeler": self.per_labeler,
            "summary": self.summary,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def pearson(a, b) -> float | None:
    """Pearson's r, or None when either input has fewer than 2 points or zero variance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        return None
    # min == max, not the centered norm: the mean of n identical floats can
    # land 1 ulp off the common value, leaving a spuriously nonzero variance
    if float(a.min()) == float(a.max()) or float(b.min()) == float(b.max()):
        return None
    am = a - a.mean()
    bm = b - b.mean()
    denom = math.sqrt(float(am @ am) * float(bm @ bm))
    if denom == 0.0:
        return None
    return float(am @ bm) / denom


def spearman(a, b) -> float | None:
    """Pearson correlation of average ranks (ties share their mean rank)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        return None
    return pearson(rankdata(a, method="average"), rankdata(b, method="average"))


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < 1:
        raise ValueError("rmse needs at least one point")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5).astype(np.int64)


def qwk(pred, truth, score_range: tuple[float, float] = (1, 7)) -> float:
    """Quadratic-weighted Cohen's kappa after mapping predictions onto integers.

    Predictions are affinely rescaled from their own [min, max] onto
    score_range and rounded half-up; constant predictions all map to the
    rounded midpoint. Truth values are rounded to the same integer grid.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size < 2:
        raise ValueError("qwk needs at least two points")
    lo, hi = float(score_range[0]), float(score_range[1])
    pmin, pmax = float(pred.min()), float(pred.max())
    if pmax == pmin:
        scaled = np.full_like(pred, (lo + hi) / 2.0)
    else:
        scaled = lo + (pred - pmin) * (hi - lo) / (pmax - pmin)
    lo_i, hi_i = int(lo), int(hi)
    p_int = np.clip(_round_half_up(scaled), lo_i, hi_i)
    t_int = np.clip(_round_half_up(truth), lo_i, hi_i)
    n_cat = hi_i - lo_i + 1
    observed = np.zeros((n_cat, n_cat))
    for t, p in zip(t_int, p_int):
        observed[t - lo_i, p - lo_i] += 1
    observed /= observed.sum()
    hist_t = observed.sum(axis=1)
    hist_p = observed.sum(axis=0)
    expected = np.outer(hist_t, hist_p)
    idx = np.arange(n_cat)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (n_cat - 1) ** 2
    denominator = float((weights * expected).sum())
    numerator = float((weights * observed).sum())
    if denominator == 0.0:
        return 1.0
    return 1.0 - numerator / denominator


def make_folds(corpus: Corpus, dimension: Dimension, k: int = 5, seed: int = 0) -> FoldPlan:
    """Teacher-disjoint stratified folds via serpentine deal over sorted teachers.

    Teachers are ordered by their mean session target; a seeded shuffle fixes
    the order among exact-score ties before the stable sort.
    """
    labeled, _ = corpus.sessions_with_target(dimension)
    per_teacher: dict[str, list[float]] = {}
    for session in labeled:
        per_teacher.setdefault(session.teacher_id, []).append(mean_target(session, dimension))
    teachers = sorted(per_teacher)
    if len(teachers) < k:
        raise ValueError(f"need at least {k} teachers with {dimension.value} labels, have {len(teachers)}")
    tie_order = list(teachers)
    random.Random(seed).shuffle(tie_order)
    tie_rank = {t: i for i, t in enumerate(tie_order)}
    teachers.sort(key=lambda t: (fmean(per_teacher[t]), tie_rank[t]))
    assignments = {}
    cycle = 2 * k
    for i, teacher in enumerate(teachers):
        pos = i % cycle
        assignments[teacher] = pos if pos < k else cycle - 1 - pos
    return FoldPlan(k=k, assignments=assignments, seed=seed)


def _summary_entry(values: list[float | None], k: int) -> tuple[float | None, float | None, int]:
    defined = [v for v in values if v is not None]
    undefined = len(values) - len(defined)
    mean = fmean(defined) if defined else None
    se = stdev(defined) / math.sqrt(len(defined)) if len(defined) >= 2 else None
    return mean, se, undefined


def _summarize(per_fold: list[dict], k: int) -> dict:
    summary: dict = {}
    for key in METRIC_KEYS:
        mean, se, undefined = _summary_entry([entry[key] for entry in per_fold], k)
        summary[f"mean_{key}"] = mean
        summary[f"se_{key}"] = se
        summary[f"undefined_{key}"] = undefined
    return summary


def cross_validate(
    corpus: Corpus,
    feature_config: FeatureConfig,
    dimension: Dimension,
    lam: float = lasso.DEFAULT_LAMBDA,
    non_negative: bool = False,
    k: int = 5,
    seed: int = 0,
    keep_model_json: bool = False,
) -> CvReport:
    """Train on each fold's complement, evaluate on the fold, summarize.

    The vocabulary (fold scope), standardizer, and model are functions of the
    training fold only, so test transcripts never leak into training.
    """
    sessions, n_excluded = corpus.sessions_with_target(dimension)
    plan = make_folds(corpus, dimension, k=k, seed=seed)
    qwk_range = (1.0, 21.0) if dimension is Dimension.DOMAIN else (1.0, 7.0)
    per_fold: list[dict] = []
    fold_model_json: list[str] = []
    for fold in range(k):
        test = [s for s in sessions if plan.assignments[s.teacher_id] == fold]
        train = [s for s in sessions if plan.assignments[s.teacher_id] != fold]
        feats = compute_features(train, test, corpus.protocol, feature_config)
        names = feats[train[0].session_id].feature_names
        g_train = [feats[s.session_id].g for s in train]
        std = fit_standardizer(g_train)
        X = np.vstack([standardize(g, std) for g in g_train])
        y = np.array([mean_target(s, dimension) for s in train])
        model = lasso.fit(X, y, lam, non_negative, standardizer=std, feature_names=names)
        if keep_model_json:
            fold_model_json.append(lasso.model_to_json(model))
        preds = np.array([lasso.predict(model, feats[s.session_id].g) for s in test])
        truth = np.array([mean_target(s, dimension) for s in test])
        notes: list[str] = []
        r = pearson(preds, truth)
        if r is None:
            notes.append("pearson undefined (constant predictions or targets, or a single test session)")
        rho = spearman(preds, truth)
        if rho is None:
            notes.append("spearman undefined")
        if len(preds) >= 2:
            kappa = qwk(preds, truth, qwk_range)
            if float(preds.min()) == float(preds.max()):
                notes.append("qwk degenerate: constant predictions mapped to the midpoint")
        else:
            kappa = None
            notes.append("qwk undefined (single test session)")
        per_fold.append(
            {
                "fold": fold,
                "n_train": len(train),
                "n_test": len(test),
                "R": r,
                "RMSE": rmse(preds, truth),
                "spearman": rho,
                "qwk": kappa,
                "notes": notes,
            }
        )
    return CvReport(
        dimension=dimension.value,
        protocol=corpus.protocol,
        feature_mode=feature_config.mode,
        lam=lam,
        non_negative=non_negative,
        k=k,
        seed=seed,
        n_sessions=len(sessions),
        n_excluded_missing_label=n_excluded,
        per_fold=per_fold,
        summary=_summarize(per_fold, k),
        fold_model_json=fold_model_json,
    )


def irr(corpus: Corpus, dimension: Dimension) -> IrrReport:
    """Leave-one-labeler-out reliability.

    Each labeler is compared, over the sessions they scored that at least one
    other labeler also scored, against the mean of the other labelers' scores.
    Labelers with fewer than 2 qualifying sessions are excluded with a note.
    """
    scores: dict[str, dict[str, float]] = {}
    for session in corpus.sessions:
        for rec in session.labels_for(dimension):
            scores.setdefault(rec.labeler_id, {})[session.session_id] = rec.score
    labelers = sorted(scores)
    if len(labelers) < 2:
        raise ValueError(f"inter-rater reliability needs at least 2 labelers, have {len(labelers)}")
    per_labeler: list[dict] = []
    notes: list[str] = []
    for labeler in labelers:
        qualifying = sorted(
            sid
            for sid in scores[labeler]
            if any(sid in scores[other] for other in labelers if other != labeler)
        )
        if len(qualifying) < 2:
            notes.append(f"labeler {labeler!r} excluded: {len(qualifying)} qualifying sessions")
            continue
        mine = [scores[labeler][sid] for sid in qualifying]
        others = [
            fmean(scores[other][sid] for other in labelers if other != labeler and sid in scores[other])
            for sid in qualifying
        ]
        r = pearson(mine, others)
        if r is None:
            notes.append(f"labeler {labeler!r}: pearson undefined (zero variance)")
        per_labeler.append(
            {"labeler_id": labeler, "n_sessions": len(qualifying), "R": r, "RMSE": rmse(mine, others)}
        )
    summary: dict = {}
    for key in ("R", "RMSE"):
        mean, se, undefined = _summary_entry([entry[key] for entry in per_labeler], len(per_labeler))
        summary[f"mean_{key}"] = mean
        summary[f"se_{key}"] = se
        summary[f"undefined_{key}"] = undefined
    summary["n_labelers"] = len(per_labeler)
    return IrrReport(dimension=dimension.value, per_labeler=per_labeler, summary=summary, notes=notes)


def _cell(mean: float | None, se: float | None) -> str:
    if mean is None:
        return "n/a"
    if se is None:
        return f"{mean:.2f} (n/a)"
    return f"{mean:.2f} ({se:.2f})"


def render_cv_table(reports: list[CvReport]) -> str:
    """Plain-text accuracy table, one row per report, mean (se) per cell."""
    if not reports:
        return ""
    protocol = reports[0].protocol
    dim = Dimension(reports[0].dimension)
    lines = [
        f"Prediction accuracy: {dim.display_name(protocol)} [{dim.value}], protocol={protocol}",
        f"{'Method':<24}{'R':>16}{'RMSE':>16}{'Spearman':>16}{'QWK':>16}",
    ]
    for report in reports:
        summary = report.summary
        lines.append(
            f"{report.feature_mode:<24}"
            f"{_cell(summary['mean_R'], summary['se_R']):>16}"
            f"{_cell(summary['mean_RMSE'], summary['se_RMSE']):>16}"
            f"{_cell(summary['mean_spearman'], summary['se_spearman']):>16}"
            f"{_cell(summary['mean_qwk'], summary['se_qwk']):>16}"
        )
    undefined = sum(report.summary["undefined_R"] for report in reports)
    if undefined:
        lines.append(f"note: {undefined} fold(s) had undefined correlations and were excluded from means")
    return "\n".join(lines) + "\n"


def render_irr_table(report: IrrReport, protocol: str = "prek") -> str:
    dim = Dimension(report.dimension)
    lines = [
        f"Inter-rater reliability: {dim.display_name(protocol)} [{dim.value}]",
        f"{'Labeler':<16}{'n':>6}{'R':>12}{'RMSE':>12}",
    ]
    for entry in report.per_labeler:
        r_text = "n/a" if entry["R"] is None else f"{entry['R']:.3f}"
        lines.append(f"{entry['labeler_id']:<16}{entry['n_sessions']:>6}{r_text:>12}{entry['RMSE']:>12.3f}")
    lines.append(
        f"{'mean (se)':<16}{report.summary['n_labelers']:>6}"
        f"{_cell(report.summary['mean_R'], report.summary['se_R']):>12}"
        f"{_cell(report.summary['mean_RMSE'], report.summary['se_RMSE']):>12}"
    )
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"
