"""Seeded counterexample scans, threshold measurement and local refinement.

An :class:`Objective` draws random contexts from the cone sampler and maps
each to a normalized value that the underlying inequality asserts is
nonnegative:

* ``conjecture``: lambda_min(Q) / ||Q||_F
* ``theorem``: (lhs - bound) / (||Q||_F ||xi||^2)
* ``claim``: (A + B + C + D - E) / (|A| + ... + |E|)
* ``lemma:<id>``: gap / (sum of absolute terms)

A sample is a violation when its value is below ``-tol``.  Batches draw
from ``SeedSequence([seed, batch])`` so reports do not depend on how
batches are scheduled.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from math import comb

import numpy as np

from .cone import ConeSpec, SampleParams, in_gamma_k_batch, maclaurin_gap_batch, sample_batch
from .errors import ExhaustionError, InvalidInputError
from .harness import DerivSlice, claim_gap_batch, stability_terms
from .lemmas import LEMMA_IDS, evaluate_lemma, lemma_gap_batch
from .scalar import ScalarMode
from .symfunc import KappaVector, esp_all, esp_batch, minors1_batch
from .thm_forms import (QuadContext, conjecture_matrix, conjecture_matrix_batch, min_eigenvalue,
                        theorem_gap, theorem_gap_batch)

DEFAULT_TOL = 1e-9
# float values below -tol but above -CONFIRM_BAND are re-evaluated in
# extended precision before being counted
CONFIRM_BAND = 1e-6
SCAN_LEMMAS = LEMMA_IDS + ("maclaurin-vii",)
KIND_ALIASES = {"conjecture-min-eig": "conjecture", "theorem-gap": "theorem", "claim-e316": "claim"}
CASE_II_LEMMAS = ("a3.6", "L-n3.8", "half-retention-n3.12")


@dataclass(frozen=True)
class Objective:
    kind: str
    ratios: tuple = (1e3,)
    case: str | None = None
    lemma: str | None = None
    escalate_below: float = CONFIRM_BAND
    bits: int = 128

    def __post_init__(self):
        if self.kind not in ("conjecture", "theorem", "claim", "lemma"):
            raise InvalidInputError(f"unknown objective kind {self.kind!r}")
        if self.kind == "lemma" and self.lemma not in SCAN_LEMMAS:
            raise InvalidInputError(f"unknown lemma id {self.lemma!r}")
        if self.case not in (None, "I", "II"):
            raise InvalidInputError("case must be None, 'I' or 'II'")
        ratios = tuple(float(r) for r in np.atleast_1d(self.ratios))
        if not ratios or not all(r > 1 for r in ratios):
            raise InvalidInputError("K-ratios must exceed 1 so that c_{k,K} > 0")
        object.__setattr__(self, "ratios", ratios)

    @classmethod
    def parse(cls, text: str, **kw) -> "Objective":
        """Accepts ``conjecture``, ``theorem-gap``, ``lemma:n3.5``, ``lemma(n3.5)`` and so on."""
        text = text.strip()
        if text.startswith("lemma(") and text.endswith(")"):
            return cls("lemma", lemma=text[6:-1], **kw)
        kind, _, lemma = text.partition(":")
        if kind == "lemma":
            return cls("lemma", lemma=lemma, **kw)
        return cls(KIND_ALIASES.get(kind, kind), **kw)

    @property
    def ratio(self) -> float:
        return self.ratios[0]

    @property
    def uses_ratio(self) -> bool:
        return self.kind != "lemma"

    @property
    def name(self) -> str:
        base = f"lemma:{self.lemma}" if self.kind == "lemma" else self.kind
        return base if self.case is None else f"{base}[case {self.case}]"

    def default_case(self) -> str | None:
        if self.case is not None:
            return self.case
        if self.kind == "conjecture" or (self.kind == "lemma" and self.lemma in CASE_II_LEMMAS):
            return "II"
        return None

    def with_ratio(self, ratio: float) -> "Objective":
        return Objective(self.kind, (ratio,), self.case, self.lemma, self.escalate_below, self.bits)


# ---------------------------------------------------------------------------
# drawing contexts


def _choose(rng: np.random.Generator, mask: np.ndarray):
    """Uniform column among True entries of each row; (idx, row_has_any)."""
    r = rng.random(mask.shape)
    r[~mask] = -1.0
    return np.argmax(r, axis=1), mask.any(axis=1)


def _choose_other(rng, mask, first):
    mask = mask.copy()
    mask[np.arange(mask.shape[0]), first] = False
    return _choose(rng, mask)


def _case2_mask(X: np.ndarray) -> np.ndarray:
    k1 = X.max(axis=1, keepdims=True)
    return X > k1 - np.sqrt(k1) / X.shape[1]


def _case_mask(case, X):
    if case == "II":
        return _case2_mask(X)
    if case == "I":
        return ~_case2_mask(X)
    return np.ones_like(X, dtype=bool)


def _draw(obj: Objective, rng: np.random.Generator, spec: ConeSpec, sp: SampleParams, size: int):
    """Draw up to ``size`` rows; returns (X, aux, draw stats); rows may be dropped."""
    case = obj.default_case()
    X, stats = sample_batch(spec, sp, size, rng, case="II" if case == "II" else None)
    N, n = X.shape
    k = spec.k
    aux: dict[str, np.ndarray] = {}
    cmask = _case_mask(case, X)
    ok = np.ones(N, dtype=bool)
    if obj.kind in ("conjecture", "theorem"):
        i, has = _choose(rng, cmask & (X > 0))
        ok &= has
        aux["i"] = i
        if obj.kind == "theorem":
            aux["xi"] = rng.standard_normal((N, n))
    elif obj.kind == "claim":
        i, has = _choose(rng, cmask)
        ok &= has
        aux["i"] = i
        aux["V"] = rng.uniform(-1.0, 1.0, (N, n)) * (X[:, 0] ** 1.5)[:, None]
    else:
        ok &= _lemma_aux(obj.lemma, X, k, rng, cmask, aux)
    if obj.uses_ratio:
        if len(obj.ratios) == 1:
            aux["ratio"] = np.full(N, obj.ratio)
        else:
            aux["ratio"] = rng.choice(np.array(obj.ratios), N)
    keep = np.nonzero(ok)[0]
    X = X[keep]
    aux = {key: v[keep] for key, v in aux.items()}
    if obj.uses_ratio:
        aux["K"] = _bigK(obj, X, k, aux["i"], aux["ratio"])
    return X, aux, stats


def _bigK(obj: Objective, X: np.ndarray, k: int, i: np.ndarray, ratio: np.ndarray) -> np.ndarray:
    """K with K kappa_i sigma^{ii} = ratio (the largest entry's column for the claim)."""
    rows = np.arange(X.shape[0])
    col = np.argmax(X, axis=1) if obj.kind == "claim" else i
    keep = np.ones(X.shape, dtype=bool)
    keep[rows, col] = False
    s = esp_batch(np.where(keep, X, 0.0), k)[:, k - 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        return ratio / (X[rows, col] * s)


def _lemma_aux(lemma: str, X: np.ndarray, k: int, rng, cmask, aux) -> np.ndarray:
    N, n = X.shape
    rows = np.arange(N)
    ok = np.ones(N, dtype=bool)
    anyc = np.ones_like(X, dtype=bool)
    if lemma == "theta-2.3":
        i, _ = _choose(rng, anyc)
        j, _ = _choose_other(rng, anyc, i)
        swap = X[rows, i] < X[rows, j]
        aux["idx"] = np.stack([np.where(swap, j, i), np.where(swap, i, j)], axis=1)
    elif lemma == "neg-2.5a":
        i, has = _choose(rng, X <= 0)
        ok &= has
        aux["idx"] = i[:, None]
    elif lemma == "neg-2.5b":
        neg = X <= 0
        i, h1 = _choose(rng, neg)
        j, h2 = _choose_other(rng, neg, i)
        ok &= h1 & h2
        swap = X[rows, i] > X[rows, j]
        aux["idx"] = np.stack([np.where(swap, j, i), np.where(swap, i, j)], axis=1)
    elif lemma == "theta-2.7":
        rank = np.argsort(np.argsort(-X, axis=1, kind="stable"), axis=1, kind="stable")
        j, _ = _choose(rng, rank < k)
        aux["idx"] = j[:, None]
    elif lemma == "ratio-2.4":
        aux["s"] = rng.integers(0, k + 1, N)
    elif lemma == "prod-2.6":
        if k < 2:
            return np.zeros(N, dtype=bool)
        aux["s"] = rng.integers(1, k, N)
    elif lemma == "maclaurin-vii":
        aux["l"] = rng.integers(1, max(k, 2), N)
    elif lemma == "guan-2.2":
        if k < 2:
            return np.zeros(N, dtype=bool)
        aux["l"] = np.full(N, int(rng.integers(1, k)))
        aux["delta"] = rng.choice(np.array([0.1, 0.5, 1.0]), N)
        aux["w"] = rng.uniform(-1.0, 1.0, (N, n)) * X.max(axis=1)[:, None]
    elif lemma in ("expdiff-3.1", "n3.5", "hess-dominance-e2.30"):
        i, _ = _choose(rng, anyc)
        l, _ = _choose_other(rng, anyc, i)
        aux["idx"] = np.stack([i, l], axis=1)
    elif lemma in ("a3.6", "L-n3.8"):
        i, has = _choose(rng, cmask)
        j, h2 = _choose_other(rng, anyc, i)
        ok &= has & h2
        if lemma == "L-n3.8":
            ok &= X[rows, i] != X[rows, j]
        aux["idx"] = np.stack([i, j], axis=1)
    elif lemma == "half-retention-n3.12":
        i, h1 = _choose(rng, cmask)
        j, h2 = _choose_other(rng, cmask, i)
        ok &= h1 & h2
        aux["idx"] = np.stack([i, j], axis=1)
    else:  # pragma: no cover
        raise InvalidInputError(f"unknown lemma id {lemma!r}")
    return ok


# ---------------------------------------------------------------------------
# evaluation


def _frob(Q: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("npq,npq->n", Q, Q))


def evaluate(obj: Objective, X: np.ndarray, aux: dict, k: int):
    """Normalized values (NaN where undefined), witness vectors and per-row modes."""
    X = np.asarray(X, dtype=np.float64)
    N, n = X.shape
    vec = np.zeros((N, n))
    modes = np.array(["float64"] * N, dtype=object)
    with np.errstate(all="ignore"):
        if obj.kind == "conjecture":
            Q = conjecture_matrix_batch(X, k, aux["i"], aux["K"])
            w, V = np.linalg.eigh(Q)
            val = w[:, 0] / _frob(Q)
            vec = V[:, :, 0]
            for r in np.nonzero(val < obj.escalate_below)[0]:
                val[r] = _conjecture_hp(X[r], k, int(aux["i"][r]), float(aux["K"][r]), obj.bits)
                modes[r] = f"extended:{obj.bits}"
        elif obj.kind == "theorem":
            Xi = aux["xi"]
            gap, _, _, Q = theorem_gap_batch(X, k, aux["i"], aux["K"], Xi)
            val = gap / (_frob(Q) * np.einsum("np,np->n", Xi, Xi))
            vec = Xi
        elif obj.kind == "claim":
            gap, scale = claim_gap_batch(X, k, aux["i"], aux["K"], aux["V"])
            val = gap / scale
            vec = aux["V"]
        else:
            gap, scale = _lemma_values(obj.lemma, X, k, aux)
            val = np.where(scale > 0, gap / scale, gap)
            if obj.lemma == "guan-2.2":
                vec = aux["w"]
    return np.asarray(val, dtype=np.float64), vec, modes


def _lemma_values(lemma, X, k, aux):
    if lemma == "maclaurin-vii":
        return maclaurin_gap_batch(X, k, aux["l"])
    params = {}
    if "s" in aux:
        params["s"] = aux["s"]
    if lemma == "guan-2.2":
        if X.shape[0] == 0:
            return np.zeros(0), np.zeros(0)
        params = {"l": int(aux["l"][0]), "delta": aux["delta"], "w": aux["w"]}
    return lemma_gap_batch(lemma, X, k, aux.get("idx"), params)


def _conjecture_hp(x, k, i, K, bits) -> float:
    mode = ScalarMode.extended(bits)
    ctx = QuadContext(KappaVector(tuple(float(v) for v in x), mode), k, i, mode.convert(K), validate=False)
    Q = conjecture_matrix(ctx)
    lam = min_eigenvalue(Q, bits)
    norm = mode.ctx.sqrt(sum(v * v for v in Q.ravel()))
    return float(lam / norm)


def _maclaurin_hp(kap: KappaVector, k: int, l: int) -> float:
    """Normalized Maclaurin gap (lhs - rhs) / (lhs + rhs), as in the batch path."""
    mode = kap.mode
    sig = esp_all(kap.entries, k, mode)
    lhs = mode.root(sig[l] / comb(kap.n, l), l)
    rhs = mode.root(sig[k] / comb(kap.n, k), k)
    return float((lhs - rhs) / (lhs + rhs))


# ---------------------------------------------------------------------------
# witnesses


def _witness(obj, spec, X, aux, vec, modes, val, r) -> dict:
    i = int(aux["i"][r]) if "i" in aux else (int(aux["idx"][r][0]) if "idx" in aux else -1)
    w = {
        "objective": obj.name, "n": spec.n, "k": spec.k, "i": i,
        "K": float(aux["K"][r]) if "K" in aux else None,
        "ratio": float(aux["ratio"][r]) if "ratio" in aux else None,
        "mode": str(modes[r]), "value": float(val[r]),
        "kappa": [float(v) for v in X[r]], "xi": [float(v) for v in vec[r]],
    }
    if obj.kind == "lemma":
        params = {}
        for key in ("idx", "s", "l", "delta"):
            if key in aux:
                v = aux[key][r]
                params[key] = v.tolist() if hasattr(v, "tolist") else v
        w["lemma"] = obj.lemma
        w["params"] = params
    return w


def _aux_from_witness(obj: Objective, w: dict) -> dict:
    """Single-row aux arrays rebuilt from a witness (K is recomputed from the ratio)."""
    aux: dict[str, np.ndarray] = {}
    if obj.uses_ratio:
        aux["i"] = np.array([int(w["i"])])
        aux["ratio"] = np.array([float(w["ratio"] if w.get("ratio") is not None else obj.ratio)])
        if obj.kind == "theorem":
            aux["xi"] = np.array([w["xi"]], dtype=np.float64)
        elif obj.kind == "claim":
            aux["V"] = np.array([w["xi"]], dtype=np.float64)
    else:
        p = w.get("params", {})
        if "idx" in p:
            aux["idx"] = np.array([np.atleast_1d(p["idx"])], dtype=np.int64)
        for key in ("s", "l"):
            if key in p:
                aux[key] = np.array([int(p[key])])
        if "delta" in p:
            aux["delta"] = np.array([float(p["delta"])])
        if obj.lemma == "guan-2.2":
            aux["w"] = np.array([w["xi"]], dtype=np.float64)
    return aux


def replay(witness: dict, bits: int = 128) -> dict:
    """Recompute a witness's value on the scalar path at ``bits`` precision."""
    mode = ScalarMode.extended(bits)
    n, k = int(witness["n"]), int(witness["k"])
    kap = KappaVector(tuple(witness["kappa"]), mode)
    objective = witness.get("objective", "")
    spec = ConeSpec(n, k)
    if objective.startswith("conjecture"):
        value = _conjecture_hp(witness["kappa"], k, witness["i"], witness["K"], bits)
    elif objective.startswith("theorem"):
        ctx = QuadContext(kap, k, witness["i"], mode.convert(witness["K"]), validate=False)
        xi = [mode.convert(v) for v in witness["xi"]]
        Q = conjecture_matrix(ctx)
        norm = mode.ctx.sqrt(sum(v * v for v in Q.ravel()))
        value = float(theorem_gap(ctx, xi) / (norm * sum(v * v for v in xi)))
    elif objective.startswith("claim"):
        i = witness["i"]
        sl = DerivSlice(n, {(l, l, i): mode.convert(v) for l, v in enumerate(witness["xi"])})
        tb = stability_terms(kap, sl, spec, i, mode.convert(witness["K"]), check_cone=False)
        value = float(tb.gap / tb.scale)
    elif objective.startswith("lemma:"):
        lemma = witness["lemma"]
        params = dict(witness.get("params", {}))
        idx = params.pop("idx", [])
        if lemma == "maclaurin-vii":
            value = _maclaurin_hp(kap, k, int(params["l"]))
        else:
            if lemma == "guan-2.2":
                params["w"] = witness["xi"]
            res = evaluate_lemma(lemma, kap, spec, [int(v) for v in np.atleast_1d(idx)], params)
            value = res.normalized
    else:
        raise InvalidInputError(f"cannot replay objective {objective!r}")
    return {"value": value, "mode": str(mode), "recorded": witness["value"],
            "violates": value < -DEFAULT_TOL}


# ---------------------------------------------------------------------------
# scans


@dataclass
class ScanReport:
    objective: str
    n: int
    k: int
    samples: int
    seed: int
    kappa1_range: tuple
    tol: float
    ratios: tuple | None
    min_value: float
    violations: int
    witnesses: list
    escalated: int
    confirmed: int
    skipped: int
    accept_rate: float
    known_threshold: float | None = None
    elapsed_s: float = 0.0

    @property
    def clean(self) -> bool:
        return self.violations == 0

    @property
    def argmin(self) -> dict | None:
        return self.witnesses[0] if self.witnesses else None

    @property
    def below_threshold(self) -> bool | None:
        """True when violations were found in a range starting below a known threshold."""
        if self.known_threshold is None or self.clean:
            return None
        return self.kappa1_range[0] < self.known_threshold

    def to_dict(self) -> dict:
        """Deterministic content (no timings)."""
        return {
            "objective": self.objective, "n": self.n, "k": self.k, "samples": self.samples,
            "seed": self.seed, "kappa1_range": list(self.kappa1_range), "tol": self.tol,
            "ratios": None if self.ratios is None else list(self.ratios),
            "min": self.min_value, "argmin": self.argmin, "violations_count": self.violations,
            "violations": [w for w in self.witnesses if w["value"] < -self.tol],
            "lowest": self.witnesses, "escalated": self.escalated, "confirmed": self.confirmed,
            "skipped": self.skipped, "accept_rate": self.accept_rate,
            "known_threshold": self.known_threshold, "below_threshold": self.below_threshold,
        }


def _run_batch(obj: Objective, spec: ConeSpec, sp: SampleParams, size: int, seed: int, b: int,
               tol: float, keep: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
    got = drawn = accepted = escalated = confirmed = skipped = nviol = 0
    requested = kept = 0
    vmin = math.inf
    wits: list = []
    tries = 0
    while got < size:
        tries += 1
        if tries > 200:
            raise ExhaustionError("could not draw enough contexts satisfying the objective's filters",
                                {"objective": obj.name, "n": spec.n, "k": spec.k, "got": got,
                                 "accept_rate": accepted / max(drawn, 1)})
        want = size - got
        request = min(math.ceil(want * requested / max(kept, 1)) if tries > 1 else want, 1 << 16)
        X, aux, st = _draw(obj, rng, spec, sp, max(request, want))
        requested += max(request, want)
        kept += len(X)
        drawn += st["drawn"]
        accepted += st["accepted"]
        if len(X) == 0:
            continue
        X = X[:want]
        aux = {key: v[:want] for key, v in aux.items()}
        val, vec, modes = evaluate(obj, X, aux, spec.k)
        escalated += int(np.sum(modes != "float64"))
        # near-boundary float violations are confirmed or refuted in extended precision
        for r in np.nonzero((val < -tol) & (val > -CONFIRM_BAND) & (modes == "float64"))[0]:
            val[r] = replay(_witness(obj, spec, X, aux, vec, modes, val, r), obj.bits)["value"]
            modes[r] = f"extended:{obj.bits}"
            confirmed += 1
        bad = ~np.isfinite(val)
        skipped += int(bad.sum())
        good = np.nonzero(~bad)[0]
        got += len(X)
        if len(good) == 0:
            continue
        v = val[good]
        vmin = min(vmin, float(v.min()))
        nviol += int(np.sum(v < -tol))
        order = good[np.argsort(v, kind="stable")[:keep]]
        wits.extend(_witness(obj, spec, X, aux, vec, modes, val, r) | {"batch": b} for r in order)
    wits.sort(key=lambda w: (w["value"], w["batch"]))
    return {"min": vmin, "violations": nviol, "witnesses": wits[:keep], "escalated": escalated,
            "confirmed": confirmed, "skipped": skipped, "drawn": drawn, "accepted": accepted, "count": got}


def default_jobs() -> int:
    if hasattr(os, "sched_getaffinity"):
        return max(1, len(os.sched_getaffinity(0)))
    return os.cpu_count() or 1


def scan(objective: Objective, spec: ConeSpec, samples: int, seed: int = 42,
         kappa1_range: tuple = (1.0, 1e3), negativity_bias: float = 0.3, tol: float = DEFAULT_TOL,
         batch_size: int = 2048, jobs: int = 1, keep: int = 20, max_rejects: int = 10_000,
         known_threshold: float | None = None) -> ScanReport:
    """Evaluate ``samples`` random contexts and collect the lowest values.

    The report is identical for any ``jobs``: batch sizes and seeds are
    fixed by ``samples``, ``batch_size`` and ``seed`` alone.
    """
    if samples < 1:
        raise InvalidInputError("samples must be positive")
    need = {"neg-2.5a": 1, "neg-2.5b": 2}.get(objective.lemma, 0)
    if spec.n - spec.k < need:
        raise ExhaustionError(f"{objective.name} needs {need} nonpositive entries; Gamma_k allows n-k",
                              {"n": spec.n, "k": spec.k, "accept_rate": 0.0})
    sp = SampleParams(tuple(float(v) for v in kappa1_range), negativity_bias, seed, max_rejects)
    sizes = [min(batch_size, samples - s) for s in range(0, samples, batch_size)]
    t0 = time.perf_counter()
    if jobs > 1 and len(sizes) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_run_batch, objective, spec, sp, sz, seed, b, tol, keep)
                    for b, sz in enumerate(sizes)]
            parts = [f.result() for f in futs]
    else:
        parts = [_run_batch(objective, spec, sp, sz, seed, b, tol, keep) for b, sz in enumerate(sizes)]
    wits = sorted((w for p in parts for w in p["witnesses"]), key=lambda w: (w["value"], w["batch"]))[:keep]
    drawn = sum(p["drawn"] for p in parts)
    return ScanReport(
        objective=objective.name, n=spec.n, k=spec.k, samples=sum(p["count"] for p in parts), seed=seed,
        kappa1_range=tuple(sp.kappa1_range), tol=tol,
        ratios=objective.ratios if objective.uses_ratio else None,
        min_value=min(p["min"] for p in parts), violations=sum(p["violations"] for p in parts),
        witnesses=wits, escalated=sum(p["escalated"] for p in parts),
        confirmed=sum(p["confirmed"] for p in parts), skipped=sum(p["skipped"] for p in parts),
        accept_rate=sum(p["accepted"] for p in parts) / max(drawn, 1),
        known_threshold=known_threshold, elapsed_s=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# thresholds


@dataclass
class ThresholdResult:
    objective: str
    n: int
    k: int
    ratio: float | None
    threshold: float | None
    rungs: list
    verified: bool | None
    verify: dict | None

    def to_dict(self) -> dict:
        return {"objective": self.objective, "n": self.n, "k": self.k, "ratio": self.ratio,
                "threshold": self.threshold,
                "note": None if self.threshold is not None else "none found <= top of ladder",
                "rungs": self.rungs, "verified": self.verified, "verify": self.verify}


def ladder(lo: float = 1.0, hi: float = 1e8, octaves: float = 1.0) -> list[float]:
    """Edges lo, lo 2^octaves, ... ending exactly at hi."""
    if not (0 < lo < hi) or octaves <= 0:
        raise InvalidInputError("ladder needs 0 < lo < hi and a positive resolution")
    step = 2.0**octaves
    edges = [float(lo)]
    while edges[-1] * step < hi * (1 - 1e-12):
        edges.append(edges[-1] * step)
    edges.append(float(hi))
    return edges


def threshold_kappa1(objective: Objective, spec: ConeSpec, samples_per_rung: int = 1000, seed: int = 42,
                     lo: float = 1.0, hi: float = 1e8, octaves: float = 1.0, tol: float = DEFAULT_TOL,
                     verify_samples: int = 0, verify_hi: float = 1e6, jobs: int = 1,
                     negativity_bias: float = 0.3) -> ThresholdResult:
    """Smallest ladder edge above which every rung scan is clean.

    Rungs are scanned from the top down and the walk stops at the first
    rung with a violation.  ``None`` means even the top rung violates.
    With ``verify_samples`` the range [threshold, max(verify_hi, 2 threshold)]
    is rescanned at that budget; a failed verification moves the threshold
    up one edge and retries.
    """
    if len(objective.ratios) > 1:
        raise InvalidInputError("threshold_kappa1 takes a single K-ratio; use threshold_sweep")
    edges = ladder(lo, hi, octaves)
    rungs = []
    threshold = edges[0]
    for r in range(len(edges) - 2, -1, -1):
        rep = scan(objective, spec, samples_per_rung, seed=seed + r, kappa1_range=(edges[r], edges[r + 1]),
                   tol=tol, jobs=jobs, keep=3, negativity_bias=negativity_bias)
        rungs.append({"lo": edges[r], "hi": edges[r + 1], "min": rep.min_value,
                      "violations": rep.violations, "samples": rep.samples})
        if not rep.clean:
            threshold = None if r == len(edges) - 2 else edges[r + 1]
            break
    verified = verify = None
    if verify_samples and threshold is not None:
        while True:
            top = max(verify_hi, 2 * threshold)
            rep = scan(objective, spec, verify_samples, seed=seed + 7919, kappa1_range=(threshold, top),
                       tol=tol, jobs=jobs, keep=5, negativity_bias=negativity_bias)
            verify = {"range": [threshold, top], "samples": rep.samples, "min": rep.min_value,
                      "violations": rep.violations, "escalated": rep.escalated,
                      "witnesses": [w for w in rep.witnesses if w["value"] < -tol]}
            if rep.clean:
                verified = True
                break
            higher = [e for e in edges if e > threshold]
            if not higher:
                threshold, verified = None, False
                break
            threshold = higher[0]
    ratio = objective.ratio if objective.uses_ratio else None
    return ThresholdResult(objective.name, spec.n, spec.k, ratio, threshold, rungs, verified, verify)


def threshold_sweep(objective: Objective, spec: ConeSpec, **kw) -> dict:
    """Thresholds per K-ratio plus an empirical check that larger K never raises it."""
    results = [threshold_kappa1(objective.with_ratio(r), spec, **kw) for r in sorted(objective.ratios)]
    ts = [math.inf if t.threshold is None else t.threshold for t in results]
    return {"thresholds": [t.to_dict() for t in results],
            "monotone_in_K": all(a >= b for a, b in zip(ts, ts[1:]))}


def empirical_theta(spec: ConeSpec, samples: int = 10_000, seed: int = 42,
                    kappa1_range: tuple = (1.0, 1e3)) -> float:
    """Sharpest constant seen for sigma_k^{jj} >= theta sigma_k / kappa_j over the top k entries."""
    sp = SampleParams(tuple(float(v) for v in kappa1_range), 0.3, seed)
    X, _ = sample_batch(spec, sp, samples, np.random.default_rng(np.random.SeedSequence([seed, 2027])))
    k = spec.k
    S1 = minors1_batch(X, k - 1)
    sk = esp_batch(X, k)[:, k]
    return float(np.min(X[:, :k] * S1[:, :k] / sk[:, None]))


# ---------------------------------------------------------------------------
# local refinement


def _filters_ok(obj: Objective, X: np.ndarray, aux: dict) -> bool:
    case = obj.default_case()
    rows = np.arange(X.shape[0])
    if "i" in aux:
        i = aux["i"]
        if obj.kind in ("conjecture", "theorem") and not np.all(X[rows, i] > 0):
            return False
        if not np.all(_case_mask(case, X)[rows, i]):
            return False
    if "idx" in aux and obj.lemma in CASE_II_LEMMAS:
        c2 = _case2_mask(X)
        if not np.all(c2[rows, aux["idx"][:, 0]]):
            return False
        if obj.lemma == "half-retention-n3.12" and not np.all(c2[rows, aux["idx"][:, 1]]):
            return False
    if obj.lemma in ("neg-2.5a", "neg-2.5b") and not np.all(X[rows[:, None], aux["idx"]] <= 0):
        return False
    return True


def refine_local(objective: Objective, spec: ConeSpec, witness: dict, iterations: int = 400,
                 radius: float = 0.1, min_radius: float = 1e-10) -> dict:
    """Coordinatewise trust-region descent from a witness on the normalized value.

    Only strict improvements are accepted; moves leaving Gamma_k or the
    objective's index/case filters are rejected.  Free variables are the
    curvature entries plus the direction vector for the theorem and claim
    objectives; for the conjecture the direction is the exact eigenvector.
    K is recomputed from the witness's ratio at every step.  Returns a
    witness for the best point with ``history`` and ``evals`` attached.
    """
    k = spec.k
    x = np.asarray(witness["kappa"], dtype=np.float64).reshape(1, -1).copy()
    if x.shape[1] != spec.n:
        raise InvalidInputError("witness dimension does not match spec")
    aux = _aux_from_witness(objective, witness)
    vec_key = {"theorem": "xi", "claim": "V"}.get(objective.kind)

    def value(xx, aa):
        if not in_gamma_k_batch(xx, k)[0] or not _filters_ok(objective, xx, aa):
            return math.inf, None
        aa = dict(aa)
        if objective.uses_ratio:
            aa["K"] = _bigK(objective, xx, k, aa["i"], aa["ratio"])
        v, vec, modes = evaluate(objective, xx, aa, k)
        v = float(v[0])
        return (v if math.isfinite(v) else math.inf), (aa, vec, modes)

    best, state = value(x, aux)
    if not math.isfinite(best):
        raise InvalidInputError("refine_local needs a feasible starting witness")
    evals = 1
    history = [best]
    scale = float(np.max(np.abs(x)))
    rad = radius
    coords = [("x", c) for c in range(x.shape[1])]
    if vec_key:
        coords += [(vec_key, c) for c in range(x.shape[1])]
    while evals < iterations and rad > min_radius:
        improved = False
        for kind, c in coords:
            for sgn in (1.0, -1.0):
                if evals >= iterations:
                    break
                xx, aa = x.copy(), {key: v.copy() for key, v in aux.items()}
                if kind == "x":
                    xx[0, c] += sgn * rad * scale
                else:
                    mag = float(np.max(np.abs(aa[kind]))) or 1.0
                    aa[kind][0, c] += sgn * rad * mag
                v, st = value(xx, aa)
                evals += 1
                if v < best:
                    best, x, aux, state = v, xx, aa, st
                    improved = True
                    history.append(best)
                    break
        if not improved:
            rad /= 2
    full_aux, vec, modes = state
    out = _witness(objective, spec, x, full_aux, vec, modes, np.array([best]), 0)
    out["evals"] = evals
    out["history"] = history
    return out


# ---------------------------------------------------------------------------
# export


def witnesses_csv(witnesses: list, n: int | None = None) -> str:
    """CSV text: n,k,i,K,mode,value,kappa_1..kappa_n,xi_1..xi_n."""
    if n is None:
        n = max((int(w["n"]) for w in witnesses), default=0)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["n", "k", "i", "K", "mode", "value"] + [f"kappa_{a}" for a in range(1, n + 1)]
                + [f"xi_{a}" for a in range(1, n + 1)])
    for w in witnesses:
        pad = [""] * (n - len(w["kappa"]))
        wr.writerow([w["n"], w["k"], w["i"], "" if w["K"] is None else repr(w["K"]), w["mode"], repr(w["value"])]
                    + [repr(v) for v in w["kappa"]] + pad + [repr(v) for v in w["xi"]] + pad)
    return buf.getvalue()
