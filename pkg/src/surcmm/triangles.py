"""Run-off triangle data model, long-CSV ingestion and premium standardisation.

Triangles are stored as dense ``(I, I)`` arrays indexed ``[i-1, j-1]`` by
accident year ``i`` and development year ``j``; cells below the
anti-diagonal (``i + j - 1 > I``) hold NaN.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, StructuralError, ValidationError

log = logging.getLogger(__name__)

CSV_HEADER = (
    "company_id",
    "lob",
    "accident_year",
    "development_lag",
    "incremental_paid",
    "premium",
)


class Lob(enum.IntEnum):
    LOB1 = 1
    LOB2 = 2


@dataclass(frozen=True, order=True)
class TriangleIndex:
    accident_year_index: int
    development_year_index: int

    def is_observed(self, size):
        return self.accident_year_index + self.development_year_index - 1 <= size


def observed_mask(size):
    i, j = np.indices((size, size))
    return i + j <= size - 1


def observed_cells(size):
    """Upper-triangle cells in row-major order."""
    return [
        TriangleIndex(i, j)
        for i in range(1, size + 1)
        for j in range(1, size + 2 - i)
    ]


def lower_triangle_cells(size):
    """Cells to be predicted: ``i >= 2`` and ``j >= I - i + 2``."""
    if size < 2:
        raise DomainError(f"triangle size must be at least 2, got {size}")
    return [
        TriangleIndex(i, j)
        for i in range(2, size + 1)
        for j in range(size - i + 2, size + 1)
    ]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _arrays_equal(a, b):
    return a.shape == b.shape and bool(np.array_equal(a, b, equal_nan=True))


@dataclass(frozen=True, eq=False)
class LossTriangle:
    """Incremental paid losses of one line of business for one company."""

    lob_id: Lob
    values: np.ndarray
    premiums: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        premiums = _frozen(self.premiums)
        object.__setattr__(self, "lob_id", Lob(self.lob_id))
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise StructuralError(f"triangle must be square, got shape {values.shape}")
        size = values.shape[0]
        if premiums.shape != (size,):
            raise StructuralError(f"expected {size} premiums, got {premiums.shape}")
        mask = observed_mask(size)
        upper = values[mask]
        if not np.all(np.isfinite(upper)):
            i, j = np.argwhere(mask & ~np.isfinite(values))[0]
            raise StructuralError(f"missing observed cell ({i + 1},{j + 1})")
        if np.any(upper <= 0):
            i, j = np.argwhere(mask & (values <= 0))[0]
            raise ValidationError(
                f"nonpositive incremental paid loss at cell ({i + 1},{j + 1})"
            )
        if not np.all(np.isnan(values[~mask])):
            values = values.copy()
            values[~mask] = np.nan
            values = _frozen(values)
        if not np.all(premiums > 0) or not np.all(np.isfinite(premiums)):
            raise ValidationError("premiums must be finite and strictly positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "premiums", premiums)

    @property
    def size(self):
        return self.values.shape[0]

    @property
    def cells(self):
        return {
            idx: float(self.values[idx.accident_year_index - 1, idx.development_year_index - 1])
            for idx in observed_cells(self.size)
        }

    def observed(self):
        """Observed values flattened in :func:`observed_cells` order."""
        return self.values[observed_mask(self.size)]

    def __eq__(self, other):
        if not isinstance(other, LossTriangle):
            return NotImplemented
        return (
            type(self) is type(other)
            and self.lob_id == other.lob_id
            and _arrays_equal(self.values, other.values)
            and _arrays_equal(self.premiums, other.premiums)
        )

    __hash__ = None


class StandardizedTriangle(LossTriangle):
    """Loss ratios ``X_ij / premium_i``; same layout as :class:`LossTriangle`."""

    def unstandardize(self):
        return LossTriangle(self.lob_id, self.values * self.premiums[:, None], self.premiums)


def standardize(triangle):
    return StandardizedTriangle(
        triangle.lob_id, triangle.values / triangle.premiums[:, None], triangle.premiums
    )


@dataclass(frozen=True)
class LossTrianglePair:
    company_id: str
    triangle_1: LossTriangle
    triangle_2: LossTriangle

    def __post_init__(self):
        if self.triangle_1.size != self.triangle_2.size:
            raise StructuralError(
                f"company {self.company_id}: triangle sizes differ "
                f"({self.triangle_1.size} vs {self.triangle_2.size})"
            )
        if self.triangle_1.lob_id == self.triangle_2.lob_id:
            raise StructuralError(f"company {self.company_id}: both triangles are {self.triangle_1.lob_id.name}")

    @property
    def size(self):
        return self.triangle_1.size

    def triangle(self, lob):
        return self.triangle_1 if Lob(lob) == Lob.LOB1 else self.triangle_2


@dataclass(frozen=True)
class Portfolio:
    """Companies, stored in canonical (sorted ``company_id``) order.

    ``holdout`` optionally carries realised lower-triangle losses per
    ``(company_id, lob)`` when the input file contains them; they are never
    used for estimation.
    """

    companies: tuple
    size: int
    holdout: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        # canonical order makes every downstream reduction order-independent
        companies = tuple(sorted(self.companies, key=lambda c: c.company_id))
        object.__setattr__(self, "companies", companies)
        ids = [c.company_id for c in companies]
        if len(set(ids)) != len(ids):
            raise ValidationError("company_id values must be unique")
        for c in companies:
            if c.size != self.size:
                raise StructuralError(
                    f"company {c.company_id} has size {c.size}, portfolio size is {self.size}"
                )

    @property
    def company_ids(self):
        return tuple(c.company_id for c in self.companies)

    def __len__(self):
        return len(self.companies)

    def triangles(self, lob):
        return [c.triangle(lob) for c in self.companies]

    def standardized(self, lob):
        return [standardize(c.triangle(lob)) for c in self.companies]

    def subset(self, company_ids):
        keep = set(company_ids)
        return Portfolio(
            tuple(c for c in self.companies if c.company_id in keep),
            self.size,
            {k: v for k, v in self.holdout.items() if k[0] in keep},
        )


# ---------------------------------------------------------------------------
# long CSV
# ---------------------------------------------------------------------------


def _parse_number(text, path, line, column):
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"{path}:{line}: column {column!r} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"{path}:{line}: column {column!r} is not finite: {text!r}")
    return value


def _parse_year(text, path, line, column):
    value = _parse_number(text, path, line, column)
    if value != int(value):
        raise ValidationError(f"{path}:{line}: column {column!r} must be an integer: {text!r}")
    return int(value)


def load_portfolio(path, format="long_csv", drop_invalid_companies=False):
    """Read a long-format CSV into a :class:`Portfolio`.

    Accident years and development lags are re-indexed ``1..I`` in sorted
    order.  Rows that fall below the anti-diagonal are kept aside in
    ``Portfolio.holdout``.
    """
    if format != "long_csv":
        raise ValidationError(f"unsupported portfolio format {format!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValidationError(
                f"{path}:1: header must be exactly {','.join(CSV_HEADER)}, got {','.join(header)}"
            )
        rows = []
        for record in reader:
            line = reader.line_num
            if not record or all(not f.strip() for f in record):
                continue
            if len(record) != len(CSV_HEADER):
                raise ValidationError(f"{path}:{line}: expected {len(CSV_HEADER)} fields, got {len(record)}")
            company, lob, ay, lag, paid, premium = (f.strip() for f in record)
            if lob not in ("1", "2"):
                raise ValidationError(f"{path}:{line}: lob must be 1 or 2, got {lob!r}")
            rows.append(
                (
                    company,
                    int(lob),
                    _parse_year(ay, path, line, "accident_year"),
                    _parse_year(lag, path, line, "development_lag"),
                    _parse_number(paid, path, line, "incremental_paid"),
                    _parse_number(premium, path, line, "premium"),
                    line,
                )
            )
    if not rows:
        raise ValidationError(f"{path}: no data rows")

    years = sorted({r[2] for r in rows})
    lags = sorted({r[3] for r in rows})
    size = len(years)
    if len(lags) != size:
        raise StructuralError(
            f"{path}: {size} accident years but {len(lags)} development lags; triangles must be square"
        )
    year_pos = {y: k for k, y in enumerate(years)}
    lag_pos = {g: k for k, g in enumerate(lags)}
    mask = observed_mask(size)

    cells = {}
    premiums = {}
    holdout = {}
    for company, lob, ay, lag, paid, premium, line in rows:
        i, j = year_pos[ay], lag_pos[lag]
        key = (company, lob)
        prem = premiums.setdefault(key, {})
        if i in prem and prem[i] != premium:
            raise ValidationError(
                f"{path}:{line}: company {company} lob {lob} accident year {ay}: "
                f"inconsistent premium {premium!r} vs {prem[i]!r}"
            )
        prem[i] = premium
        if not mask[i, j]:
            holdout.setdefault(key, np.full((size, size), np.nan))[i, j] = paid
            continue
        grid = cells.setdefault(key, {})
        if (i, j) in grid:
            raise ValidationError(f"{path}:{line}: duplicate row for company {company} lob {lob} cell ({i + 1},{j + 1})")
        grid[(i, j)] = (paid, line)

    companies = []
    dropped = []
    for company in sorted({k[0] for k in cells} | {k[0] for k in premiums}):
        tris = []
        bad = None
        for lob in (1, 2):
            key = (company, lob)
            grid = cells.get(key, {})
            values = np.full((size, size), np.nan)
            for i, j in zip(*np.nonzero(mask)):
                if (i, j) not in grid:
                    raise StructuralError(
                        f"{path}: company {company} lob {lob} is missing observed cell "
                        f"({i + 1},{j + 1}) [accident_year={years[i]}, development_lag={lags[j]}]"
                    )
                paid, line = grid[(i, j)]
                if paid <= 0 and bad is None:
                    bad = (
                        f"{path}:{line}: company {company} lob {lob} cell ({i + 1},{j + 1}) "
                        f"has nonpositive incremental_paid {paid!r}"
                    )
                values[i, j] = paid
            prem = premiums.get(key, {})
            missing = [years[i] for i in range(size) if i not in prem]
            if missing:
                raise StructuralError(f"{path}: company {company} lob {lob} has no premium for accident years {missing}")
            tris.append((values, np.array([prem[i] for i in range(size)])))
        if bad is not None:
            if not drop_invalid_companies:
                raise ValidationError(bad)
            log.warning("dropping company %s: %s", company, bad)
            dropped.append(company)
            continue
        companies.append(
            LossTrianglePair(
                company,
                LossTriangle(Lob.LOB1, *tris[0]),
                LossTriangle(Lob.LOB2, *tris[1]),
            )
        )
    if not companies:
        raise ValidationError(f"{path}: no valid companies remain")
    kept = {c.company_id for c in companies}
    holdout = {
        k: _frozen(v) for k, v in sorted(holdout.items()) if k[0] in kept
    }
    return Portfolio(tuple(companies), size, holdout)


def write_portfolio(portfolio, path, accident_years=None, development_lags=None):
    """Write the long-CSV form; floats use ``repr`` so reading back is exact."""
    size = portfolio.size
    years = list(accident_years) if accident_years is not None else list(range(1, size + 1))
    lags = list(development_lags) if development_lags is not None else list(range(1, size + 1))
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for pair in portfolio.companies:
            for tri in (pair.triangle_1, pair.triangle_2):
                for idx in observed_cells(size):
                    i, j = idx.accident_year_index - 1, idx.development_year_index - 1
                    writer.writerow(
                        (
                            pair.company_id,
                            int(tri.lob_id),
                            years[i],
                            lags[j],
                            repr(float(tri.values[i, j])),
                            repr(float(tri.premiums[i])),
                        )
                    )
    return path


@dataclass(frozen=True)
class ReserveEstimate:
    """Reserve per LOB and in total (currency units)."""

    lob_1: float
    lob_2: float

    def __post_init__(self):
        for name in ("lob_1", "lob_2"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"reserve {name} must be finite and nonnegative, got {v}")
            object.__setattr__(self, name, v)

    @property
    def total(self):
        return self.lob_1 + self.lob_2

    def __getitem__(self, lob):
        return self.lob_1 if Lob(lob) == Lob.LOB1 else self.lob_2
