"""Certificate rows: one machine-checked inequality instance per record."""

from __future__ import annotations

from dataclasses import dataclass

PASS = "pass"
FAIL = "fail"
INDETERMINATE = "indeterminate"
NOT_APPLICABLE = "not-applicable"
ERROR = "error"


@dataclass(frozen=True)
class Certificate:
    cert_id: str
    anchor: str  # the inequality the row instantiates, in plain text
    measured: float
    bound: float
    margin: float
    status: str
    probe: int | None = None


def judged(
    cert_id: str,
    anchor: str,
    measured: float,
    bound: float,
    slack: float = 0.0,
    probe: int | None = None,
) -> Certificate:
    """Build a pass/fail certificate: pass iff measured <= bound + slack."""
    status = PASS if measured <= bound + slack else FAIL
    return Certificate(
        cert_id=cert_id,
        anchor=anchor,
        measured=float(measured),
        bound=float(bound),
        margin=float(bound - measured),
        status=status,
        probe=probe,
    )


def indeterminate(cert_id: str, anchor: str, probe: int | None = None) -> Certificate:
    return Certificate(cert_id, anchor, 0.0, 0.0, 0.0, INDETERMINATE, probe)


def aggregate(certs: list[Certificate]) -> list[Certificate]:
    """Collapse per-probe rows to one worst-margin row per certificate id.

    Determinate rows win over indeterminate ones; an indeterminate-only group
    stays indeterminate.  Output is ordered by certificate id.
    """
    by_id: dict[str, list[Certificate]] = {}
    for c in certs:
        by_id.setdefault(c.cert_id, []).append(c)
    out: list[Certificate] = []
    for cert_id in sorted(by_id):
        group = by_id[cert_id]
        judged_rows = [c for c in group if c.status in (PASS, FAIL)]
        if judged_rows:
            worst = min(judged_rows, key=lambda c: c.margin)
            status = FAIL if any(c.status == FAIL for c in judged_rows) else PASS
            if any(c.status == INDETERMINATE for c in group) and status == PASS:
                status = INDETERMINATE
            out.append(
                Certificate(
                    cert_id=cert_id,
                    anchor=worst.anchor,
                    measured=worst.measured,
                    bound=worst.bound,
                    margin=worst.margin,
                    status=status,
                    probe=None,
                )
            )
        else:
            first = group[0]
            out.append(
                Certificate(cert_id, first.anchor, 0.0, 0.0, 0.0, first.status, None)
            )
    return out
