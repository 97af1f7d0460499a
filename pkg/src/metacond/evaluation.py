"""
Experiment harnesses: held-out scoring of conditional samplers over random
train/test splits, and the head-to-head comparison of GMCM fitters.

Random streams are keyed by position rather than drawn sequentially, so a
method's results depend only on the seed, the split and the test point. Two
identically configured methods therefore produce identical scores.
"""

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import MetacondError
from .gmcm import FitOptions, fit_gmcm, gmcm_loglik, gmcm_sample, initial_params
from .pipeline import (ConditionRequest, JointConfig, ckde_conditional_sample,
                       conditional_sample, fit_joint, fit_marginals)
from .scoring import crps, energy_distance, energy_score, log_score_kde, variogram_score

logger = logging.getLogger(__name__)

_FAMILY_OF = {"gc": "gaussian-copula", "gmcm": "gmcm", "tgmm": "tgmm",
              "student-t": "student-t"}
DEFAULT_METHODS = ("GC", "GMCM", "TGMM", "CKDE")


@dataclass
class MethodSpec:
    """A conditional sampler to evaluate.

    ``kind`` is one of ``gc``, ``gmcm``, ``tgmm``, ``student-t`` or ``ckde``.
    """

    name: str
    kind: str
    K: int = 2
    margins: str = "gmm-aic"
    fit: FitOptions = field(default_factory=FitOptions)
    bandwidth: float = 1.0
    tol: float = 0.1

    @classmethod
    def from_name(cls, name, K=2, **kw):
        kind = name.strip().lower()
        return cls(name=name, kind=kind, K=K, **kw)


@dataclass
class ScoreReport:
    """Per-point scores, their aggregates and run metadata.

    ``per_point`` rows are ``(split, point, method, score, value)``. The
    aggregate mean of a (method, score) cell is the plain mean of its
    per-point values; ``split_means`` keeps the per-split averages.
    """

    per_point: list
    failures: list
    metadata: dict

    @property
    def aggregate(self):
        cells = {}
        for row in self.per_point:
            cells.setdefault(row["method"], {}).setdefault(row["score"], []).append(row)
        out = {}
        for method, scores in cells.items():
            out[method] = {}
            for score, rows in scores.items():
                vals = np.array([r["value"] for r in rows])
                splits = sorted({r["split"] for r in rows})
                out[method][score] = {
                    "mean": float(np.mean(vals)),
                    "sd": float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0,
                    "n": int(vals.size),
                    "split_means": [float(np.mean([r["value"] for r in rows if r["split"] == s]))
                                    for s in splits],
                }
        return out

    def mean(self, method, score):
        return self.aggregate[method][score]["mean"]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["split", "point", "method", "score", "value"])
            for r in self.per_point:
                w.writerow([r["split"], r["point"], r["method"], r["score"], repr(r["value"])])

    def to_json(self, path):
        doc = {"metadata": self.metadata, "aggregate": self.aggregate, "failures": self.failures}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _score_sample(S, y):
    if S.shape[1] == 1:
        return {"crps": crps(S[:, 0], y[0]), "logs": log_score_kde(S[:, 0], y[0])}
    return {"es": energy_score(S, y), "vs": variogram_score(S, y)}


def _resolve(methods, K):
    specs = []
    for m in methods:
        specs.append(m if isinstance(m, MethodSpec) else MethodSpec.from_name(m, K=K))
    return specs


def evaluate_split(data, methods=DEFAULT_METHODS, given_cols=(1,), split_frac=0.8,
                   n_samples=1000, n_splits=3, seed=0, K=2, max_test=None):
    """Score conditional samplers on random train/test splits.

    Parameters
    ----------
    data : array_like, shape (n, d)
    methods : sequence of str or MethodSpec
        Method names resolve case-insensitively to ``gc``, ``gmcm``,
        ``tgmm``, ``student-t`` or ``ckde``.
    given_cols : sequence of int
        Conditioning columns; every other column is a target.
    max_test : int, optional
        Cap on test points per split (for quick runs).

    Returns
    -------
    ScoreReport
        Failures (fit or per-point) are listed in ``failures`` and the run
        continues.
    """
    X = np.asarray(data, dtype=float)
    n, d = X.shape
    given = tuple(sorted(int(c) for c in given_cols))
    target = [j for j in range(d) if j not in given]
    specs = _resolve(methods, K)
    n_train = int(round(split_frac * n))
    rows, failures = [], []
    for s in range(n_splits):
        perm = np.random.default_rng([seed, s]).permutation(n)
        train, test = X[perm[:n_train]], X[perm[n_train:]]
        if max_test is not None:
            test = test[:max_test]
        margin_cache = {}
        for spec in specs:
            try:
                if spec.kind == "ckde":
                    def sampler(req, rng, train=train, spec=spec):
                        return ckde_conditional_sample(train, req, spec.bandwidth, spec.tol, rng)
                elif spec.kind in _FAMILY_OF:
                    cfg = JointConfig(margins=spec.margins, fit=spec.fit, seed=seed * 1000 + s)
                    if spec.margins not in margin_cache:
                        margin_cache[spec.margins] = fit_marginals(
                            train, spec.margins, cfg.k_max, np.random.default_rng([seed, s, 3]))
                    model = fit_joint(train, _FAMILY_OF[spec.kind], spec.K, cfg,
                                      marginals=margin_cache[spec.margins])

                    def sampler(req, rng, model=model):
                        return conditional_sample(model, req, rng)
                else:
                    raise MetacondError(f"unknown method {spec.name!r}")
            except MetacondError as err:
                failures.append({"split": s, "point": None, "method": spec.name,
                                 "error": f"{type(err).__name__}: {err}"})
                logger.warning("method %s failed on split %d: %s", spec.name, s, err)
                continue
            for i, row in enumerate(test):
                req = ConditionRequest(given, row[list(given)], n_samples)
                rng = np.random.default_rng([seed, s, 2, i])
                try:
                    S = sampler(req, rng)
                except MetacondError as err:
                    failures.append({"split": s, "point": i, "method": spec.name,
                                     "error": f"{type(err).__name__}: {err}"})
                    continue
                for score, value in _score_sample(S, row[target]).items():
                    rows.append({"split": s, "point": i, "method": spec.name,
                                 "score": score, "value": float(value)})
    meta = {"seed": seed, "n_samples": n_samples, "n_splits": n_splits,
            "split_frac": split_frac, "methods": [sp.name for sp in specs],
            "given_columns": list(given), "target_columns": target, "n_rows": n}
    return ScoreReport(rows, failures, meta)


def crps_ordering(aggregate, tie=0.02):
    """Check ``{GMCM, TGMM} < CKDE < GC`` on mean CRPS.

    GMCM and TGMM count as tied when GMCM exceeds TGMM by at most ``tie``.

    Returns
    -------
    ok : bool or None
        None when one of the four methods has no CRPS cell.
    means : dict
    """
    need = ("GC", "GMCM", "TGMM", "CKDE")
    if not all(m in aggregate and "crps" in aggregate[m] for m in need):
        return None, {}
    c = {m: aggregate[m]["crps"]["mean"] for m in need}
    ok = (c["GMCM"] <= c["TGMM"] + tie and max(c["GMCM"], c["TGMM"]) < c["CKDE"] < c["GC"])
    return ok, c


# ---------------------------------------------------------------------------
# fitter comparison
# ---------------------------------------------------------------------------

FITTERS = ("AD", "FD", "PEM")


def compare_fitters(config, n, n_rep, seed=0, methods=FITTERS, K=None, opts=None):
    """Fit GMCM samples from ``config`` with each method and compare.

    Every replicate draws a training sample, a held-out sample and a fresh
    reference sample of size ``n`` from the true copula. All methods start
    from the same initialization. Recorded per (method, replicate):
    training log-likelihood at the returned parameters, held-out
    log-likelihood and the energy distance between the reference sample and
    ``n`` draws from the fitted copula. Failed fits are recorded as NaN.

    Returns
    -------
    list of dict
        Keys ``method, replicate, loglik, train_loglik, energy_distance,
        iterations, error``; ``loglik`` is the held-out value.
    """
    if n_rep < 1:
        raise ValueError("n_rep must be at least 1")
    K = config.n_components if K is None else K
    base = FitOptions() if opts is None else opts
    rows = []
    for r in range(n_rep):
        r_train, r_test, r_ref, r_init, r_model = np.random.default_rng([seed, r]).spawn(5)
        U = gmcm_sample(config, n, r_train)
        U_test = gmcm_sample(config, n, r_test)
        U_ref = gmcm_sample(config, n, r_ref)
        p0 = initial_params(U, K, r_init, base.em)
        for method in methods:
            opts_m = FitOptions(**{**base.__dict__, "method": method})
            row = {"method": method, "replicate": r, "loglik": np.nan, "train_loglik": np.nan,
                   "energy_distance": np.nan, "iterations": 0, "error": ""}
            try:
                p, trace = fit_gmcm(U, K, opts_m, init=p0)
                row["train_loglik"] = gmcm_loglik(U, p)
                row["loglik"] = gmcm_loglik(U_test, p)
                row["iterations"] = len(trace)
                fitted = gmcm_sample(p, n, np.random.default_rng([seed, r, 7]))
                row["energy_distance"] = energy_distance(U_ref, fitted)
            except MetacondError as err:
                row["error"] = f"{type(err).__name__}: {err}"
                logger.warning("fitter %s failed on replicate %d: %s", method, r, err)
            rows.append(row)
    return rows


def summarize_fitters(rows):
    """Mean and sd of each numeric column per method, ignoring NaN."""
    out = {}
    for method in dict.fromkeys(r["method"] for r in rows):
        sel = [r for r in rows if r["method"] == method]
        out[method] = {}
        for key in ("loglik", "train_loglik", "energy_distance"):
            v = np.array([r[key] for r in sel], dtype=float)
            v = v[np.isfinite(v)]
            out[method][key] = (float(v.mean()) if v.size else np.nan,
                                float(v.std(ddof=1)) if v.size > 1 else np.nan)
    return out


def write_fitter_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "replicate", "loglik", "energy_distance"])
        for r in rows:
            w.writerow([r["method"], r["replicate"], repr(float(r["loglik"])),
                        repr(float(r["energy_distance"]))])
