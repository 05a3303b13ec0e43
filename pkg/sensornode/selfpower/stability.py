#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from .lti import InvalidParameterError, Polynomial, TransferFunction
from .pid import PidGains, closed_loop

__all__ = ["ZeroPolynomialError", "RouthTable", "StabilityVerdict", "routh_table", "is_stable",
           "closed_loop_charpoly", "STABLE", "UNSTABLE", "MARGINAL"]

logger = logging.getLogger(__name__)

STABLE = "stable"
UNSTABLE = "unstable"
MARGINAL = "marginal"


class ZeroPolynomialError(ValueError):
    pass


@dataclass(frozen=True)
class RouthTable:
    coefficients: Tuple[float, ...]
    rows: Tuple[Tuple[float, ...], ...]
    special_case_notes: Tuple[str, ...]
    epsilon_used: bool
    imaginary_axis_roots: int

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def first_column(self) -> Tuple[float, ...]:
        return tuple(row[0] for row in self.rows)

    def row_labels(self) -> List[str]:
        return [f"s^{self.degree - i}" for i in range(len(self.rows))]

    def to_text(self) -> str:
        cells = [[f"{v:.6g}" for v in row] for row in self.rows]
        width = max(len(c) for row in cells for c in row)
        labels = self.row_labels()
        label_width = max(len(label) for label in labels)
        lines = [f"{label.ljust(label_width)} | " + "  ".join(c.rjust(width) for c in row)
                 for label, row in zip(labels, cells)]
        return "\n".join(lines + list(self.special_case_notes)) + "\n"


@dataclass(frozen=True)
class StabilityVerdict:
    status: str
    sign_changes: int
    first_column: Tuple[float, ...]
    table: RouthTable

    @property
    def stable(self) -> bool:
        return self.status == STABLE

    @property
    def marginal(self) -> bool:
        return self.status == MARGINAL

    def to_dict(self) -> dict:
        return {"coefficients": list(self.table.coefficients),
                "rows": [list(row) for row in self.table.rows],
                "first_column": list(self.first_column),
                "sign_changes": self.sign_changes,
                "status": self.status,
                "stable": self.stable,
                "notes": list(self.table.special_case_notes)}


def _polynomial(charpoly: Union[Polynomial, Sequence[float]]) -> Polynomial:
    poly = Polynomial(charpoly)
    if poly.is_zero():
        raise ZeroPolynomialError("The zero polynomial has no Routh table")
    if poly.degree < 1:
        raise InvalidParameterError(f"A characteristic polynomial needs degree >= 1, got {poly}")
    return poly


def routh_table(charpoly: Union[Polynomial, Sequence[float]]) -> RouthTable:
    poly = _polynomial(charpoly)
    notes = []
    coeffs = list(poly.coeffs)
    if coeffs[0] < 0.0:
        coeffs = [-c for c in coeffs]
        notes.append("leading coefficient was negative, the polynomial was negated")
    n = len(coeffs) - 1
    width = n // 2 + 1
    epsilon = 1e-9 * max(abs(c) for c in coeffs)

    def padded(values) -> List[float]:
        values = [float(v) for v in values]
        return values + [0.0] * (width - len(values))

    rows = [padded(coeffs[0::2]), padded(coeffs[1::2])]
    epsilon_used = False
    imaginary = 0

    def resolve(i: int):
        nonlocal epsilon_used, imaginary
        row = rows[i]
        scale = max(abs(v) for v in rows[i - 1] + (rows[i - 2] if i >= 2 else []))
        if all(abs(v) <= 1e-12 * scale for v in row):
            # Row of zeros: replace by the derivative of the auxiliary polynomial formed from the row above
            order = n - (i - 1)
            auxiliary = np.zeros(order + 1)
            for j, v in enumerate(rows[i - 1]):
                if 2 * j <= order:
                    auxiliary[2 * j] = v
            derivative = np.polyder(auxiliary)
            rows[i] = padded(derivative[0::2])
            roots = np.roots(auxiliary)
            on_axis = int(np.sum(np.abs(roots.real) <= 1e-6 * np.maximum(1.0, np.abs(roots))))
            imaginary += on_axis
            note = (f"row s^{n - i} was all zeros, replaced by the derivative of the auxiliary polynomial "
                    f"{Polynomial(auxiliary).coeffs} ({on_axis} roots on the imaginary axis)")
            notes.append(note)
            logger.info(note)
        if rows[i][0] == 0.0:
            rows[i][0] = epsilon
            epsilon_used = True
            note = f"first entry of row s^{n - i} was zero, replaced by epsilon = {epsilon:.3g}"
            notes.append(note)
            logger.info(note)

    resolve(1)
    for i in range(2, n + 1):
        above, pivot = rows[i - 2], rows[i - 1]
        rows.append(padded([(pivot[0] * above[j + 1] - above[0] * pivot[j + 1]) / pivot[0] for j in range(width - 1)]))
        resolve(i)

    return RouthTable(coefficients=tuple(coeffs),
                      rows=tuple(tuple(row) for row in rows),
                      special_case_notes=tuple(notes),
                      epsilon_used=epsilon_used,
                      imaginary_axis_roots=imaginary)


def is_stable(charpoly: Union[Polynomial, Sequence[float]]) -> StabilityVerdict:
    table = routh_table(charpoly)
    column = table.first_column
    sign_changes = sum(1 for a, b in zip(column, column[1:]) if (a > 0.0) != (b > 0.0))
    if sign_changes > 0:
        status = UNSTABLE
    elif table.imaginary_axis_roots > 0 or table.epsilon_used:
        status = MARGINAL
    else:
        status = STABLE
    return StabilityVerdict(status=status, sign_changes=sign_changes, first_column=column, table=table)


def closed_loop_charpoly(plant: TransferFunction, gains: PidGains) -> Polynomial:
    """M s^3 + (D + kd) s^2 + (K + kp) s + ki for a mass-spring-damper under PID control."""
    return closed_loop(plant, gains).den
