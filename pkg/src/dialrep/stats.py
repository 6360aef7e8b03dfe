"""Welch t-tests, Spearman rank correlation and formula-driven OLS.

The regressions here are ordinary least squares approximations of the mixed
models used for the original analyses: random effects (dialogue / sample /
speaker grouping) are NOT modeled, so standard errors are optimistic. Every
emitted table carries this caveat in its header.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import stdtr

# two-sided 95% normal quantile, pinned for CI construction
Z975 = 1.959964

OLS_CAVEAT = (
    "OLS approximation: group-level random effects are not modeled; "
    "standard errors and p-values are optimistic."
)


@dataclass
class TTestResult:
    t: float
    df: float
    p: float
    mean_a: float
    mean_b: float


@dataclass
class CorrelationResult:
    rho: float
    p: float
    n: int


@dataclass
class Coefficient:
    name: str
    coef: float
    std_err: float
    z: float
    p: float
    ci_low: float
    ci_high: float


@dataclass
class RegressionResult:
    coefficients: list[Coefficient]
    n: int
    r_squared: float

    def coef(self, name: str) -> Coefficient:
        for c in self.coefficients:
            if c.name == name:
                return c
        raise KeyError(f"no coefficient named {name!r}; have "
                       f"{[c.name for c in self.coefficients]}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.coefficients]


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _t_sf(t: float, df: float) -> float:
    return float(stdtr(df, -t))


def welch_t(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Welch's unequal-variance t-test with Satterthwaite degrees of freedom;
    two-sided p-value. The statistic's sign follows mean(a) - mean(b)."""
    if len(a) < 2:
        raise ValueError(f"group a has {len(a)} values; need at least 2")
    if len(b) < 2:
        raise ValueError(f"group b has {len(b)} values; need at least 2")
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    ma, mb = float(xa.mean()), float(xb.mean())
    va, vb = float(xa.var(ddof=1)), float(xb.var(ddof=1))
    na, nb = len(xa), len(xb)
    sa, sb = va / na, vb / nb
    se = math.sqrt(sa + sb)
    if se == 0.0:
        t = 0.0 if ma == mb else math.copysign(math.inf, ma - mb)
        return TTestResult(t=t, df=float(na + nb - 2), p=1.0 if t == 0.0 else 0.0,
                           mean_a=ma, mean_b=mb)
    t = (ma - mb) / se
    df = (sa + sb) ** 2 / (sa**2 / (na - 1) + sb**2 / (nb - 1))
    p = 2.0 * _t_sf(abs(t), df)
    return TTestResult(t=t, df=df, p=min(1.0, p), mean_a=ma, mean_b=mb)


def _average_ranks(values: Sequence[float]) -> np.ndarray:
    """Ranks starting at 1, ties receiving the average of their positions."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        ranks[order[i : j + 1]] = avg
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Spearman rank correlation: Pearson correlation of average ranks, with
    a t-approximation two-sided p-value."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise ValueError(f"need at least 3 pairs, got {n}")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sx2 = float((dx * dx).sum())
    sy2 = float((dy * dy).sum())
    if sx2 == 0.0:
        raise ValueError("x is constant; rank correlation undefined")
    if sy2 == 0.0:
        raise ValueError("y is constant; rank correlation undefined")
    rho = float((dx * dy).sum() / math.sqrt(sx2 * sy2))
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        p = 0.0
    else:
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p = min(1.0, 2.0 * _t_sf(abs(t), n - 2))
    return CorrelationResult(rho=rho, p=p, n=n)


def _parse_formula(formula: str) -> tuple[str, list[tuple[str, ...]]]:
    if "~" not in formula:
        raise ValueError(f"formula {formula!r} must contain '~'")
    lhs, rhs = formula.split("~", 1)
    response = lhs.strip()
    if not response:
        raise ValueError(f"formula {formula!r} has no response variable")
    terms: list[tuple[str, ...]] = []
    for raw in rhs.split("+"):
        factors = tuple(f.strip() for f in raw.split(":") if f.strip())
        if not factors:
            raise ValueError(f"formula {formula!r} has an empty term")
        if factors not in terms:
            terms.append(factors)
    return response, terms


def _is_categorical(values: list) -> bool:
    return any(isinstance(v, (str, bool)) for v in values)


def build_design_matrix(
    rows: Sequence[Mapping], formula: str
) -> tuple[np.ndarray, np.ndarray, list[str], str]:
    """Design matrix for ``response ~ term + term`` with ``:`` interactions.

    Categorical variables (string/bool valued) get treatment coding with the
    lexicographically first level as the reference. Inside an interaction, a
    categorical factor keeps ALL its levels when the term obtained by
    removing that factor is not itself in the model (so ``y ~ S + dist:S``
    yields one distance slope per level of S), and is treatment-coded
    otherwise. Numeric factors multiply in directly. The intercept is always
    included.
    """
    if not rows:
        raise ValueError("no rows to fit")
    response, terms = _parse_formula(formula)

    variables: set[str] = {response}
    for term in terms:
        variables.update(term)
    columns_data: dict[str, list] = {}
    for var in variables:
        col = []
        for i, row in enumerate(rows):
            if var not in row or row[var] is None:
                raise ValueError(f"row {i} is missing variable {var!r}")
            col.append(row[var])
        columns_data[var] = col

    levels: dict[str, list[str]] = {}
    for var in variables - {response}:
        if _is_categorical(columns_data[var]):
            levels[var] = sorted({str(v) for v in columns_data[var]})

    n = len(rows)
    names: list[str] = ["Intercept"]
    cols: list[np.ndarray] = [np.ones(n)]
    term_set = {frozenset(t) for t in terms}

    for term in terms:
        numeric = [f for f in term if f not in levels]
        categorical = [f for f in term if f in levels]
        base = np.ones(n)
        for f in numeric:
            base = base * np.asarray(columns_data[f], dtype=np.float64)
        if not categorical:
            names.append(":".join(term))
            cols.append(base)
            continue
        level_choices = []
        for f in categorical:
            reduced = frozenset(x for x in term if x != f)
            drop_reference = (not reduced) or (reduced in term_set)
            lv = levels[f]
            if drop_reference:
                level_choices.append([(f, l, True) for l in lv[1:]])
            else:
                level_choices.append([(f, l, False) for l in lv])
        # first categorical factor cycles fastest
        for combo in product(*reversed(level_choices)):
            combo = tuple(reversed(combo))
            indicator = np.ones(n)
            for f, l, _treated in combo:
                indicator = indicator * np.array(
                    [1.0 if str(v) == l else 0.0 for v in columns_data[f]]
                )
            parts = []
            picked = {f: (l, treated) for f, l, treated in combo}
            for f in term:
                if f in picked:
                    l, treated = picked[f]
                    prefix = "T." if treated else ""
                    parts.append(f"{f}[{prefix}{l}]")
                else:
                    parts.append(f)
            names.append(":".join(parts))
            cols.append(base * indicator)

    X = np.column_stack(cols)
    y = np.asarray(columns_data[response], dtype=np.float64)
    return X, y, names, response


def _collinear_columns(X: np.ndarray, names: list[str]) -> list[str]:
    involved = []
    for j in range(X.shape[1]):
        others = np.delete(X, j, axis=1)
        beta, _, _, _ = np.linalg.lstsq(others, X[:, j], rcond=None)
        resid = X[:, j] - others @ beta
        scale = max(1.0, float(np.abs(X[:, j]).max()))
        if float(np.abs(resid).max()) <= 1e-8 * scale:
            involved.append(names[j])
    return involved


def ols(rows: Sequence[Mapping], formula: str) -> RegressionResult:
    """Least squares via QR; normal-approximation inference per coefficient
    (z = coef / std_err, 95% CI = coef +/- 1.959964 * std_err).

    A rank-deficient design is an error that names the collinear columns;
    nothing is silently dropped.
    """
    X, y, names, _ = build_design_matrix(rows, formula)
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more rows ({n}) than coefficients ({p})")
    rank = np.linalg.matrix_rank(X)
    if rank < p:
        raise ValueError(
            "design matrix is rank-deficient; collinear columns: "
            + ", ".join(_collinear_columns(X, names))
        )
    q, r = np.linalg.qr(X)
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    dof = n - p
    sigma2 = rss / dof
    r_inv = np.linalg.solve(r, np.eye(p))
    xtx_inv = r_inv @ r_inv.T
    se = np.sqrt(np.clip(np.diag(xtx_inv), 0.0, None) * sigma2)

    tss = float(((y - y.mean()) ** 2).sum())
    if tss > 0:
        r_squared = 1.0 - rss / tss
    else:
        r_squared = 1.0 if rss == 0.0 else 0.0

    coefficients = []
    for name, b, s in zip(names, beta, se):
        b = float(b)
        s = float(s)
        if s == 0.0:
            z = 0.0 if b == 0.0 else math.copysign(math.inf, b)
            pv = 1.0 if b == 0.0 else 0.0
        else:
            z = b / s
            pv = min(1.0, 2.0 * _normal_sf(abs(z)))
        coefficients.append(
            Coefficient(
                name=name, coef=b, std_err=s, z=z, p=pv,
                ci_low=b - Z975 * s, ci_high=b + Z975 * s,
            )
        )
    return RegressionResult(coefficients=coefficients, n=n, r_squared=r_squared)


def decay_slope(
    records: Iterable, measure: str = "co", split: str = "speaker_relation"
) -> RegressionResult:
    """Locality regression over repetition records: measure ~ S + dist:S,
    where S is 'same' (within-speaker) vs 'diff' (between-speaker). The
    dist:S[diff] coefficient is the between-speaker decay slope."""
    if measure not in ("co", "vo"):
        raise ValueError(f"measure must be 'co' or 'vo', got {measure!r}")
    rows = []
    for r in records:
        relation = getattr(r, split)
        rows.append({
            measure: getattr(r, measure),
            "S": "same" if relation == "within" else "diff",
            "dist": float(r.distance),
        })
    for label in ("same", "diff"):
        dists = {row["dist"] for row in rows if row["S"] == label}
        if len(dists) < 2:
            raise ValueError(
                f"need at least 2 distinct distances for S={label!r}, got {sorted(dists)}"
            )
    return ols(rows, f"{measure} ~ S + dist:S")


def regression_table(result: RegressionResult, title: str = "") -> str:
    """Aligned text table with the Coef./Std./z/P>|z|/CI columns."""
    header = ["", "Coef.", "Std.", "z", "P>|z|", "[0.025", "0.975]"]
    rows = [header]
    for c in result.coefficients:
        rows.append([
            c.name,
            f"{c.coef:.6f}", f"{c.std_err:.6f}",
            f"{c.z:.3f}" if math.isfinite(c.z) else ("inf" if c.z > 0 else "-inf"),
            f"{c.p:.3f}",
            f"{c.ci_low:.6f}", f"{c.ci_high:.6f}",
        ])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    if title:
        lines.append(title)
    lines.append(OLS_CAVEAT)
    lines.append(f"n = {result.n}, R^2 = {result.r_squared:.6f}")
    for r in rows:
        lines.append("  ".join(s.rjust(w) for s, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def write_regression_csv(result: RegressionResult, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "Coef.", "Std.", "z", "P>|z|", "[0.025", "0.975]"])
        for c in result.coefficients:
            writer.writerow([
                c.name, repr(c.coef), repr(c.std_err), repr(c.z), repr(c.p),
                repr(c.ci_low), repr(c.ci_high),
            ])
