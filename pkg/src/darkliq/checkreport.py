"""Shared result record for property checks and trajectory certifications."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CheckReport:
    """Pass/fail outcome of one numerical oracle.

    A failed report always carries a witness describing the offending
    input and the margin by which the property was violated.
    """

    name: str
    status: bool
    samples: int
    tolerance: float
    witness: str | None = None
    margin: float | None = None

    def __post_init__(self):
        if not self.status and self.witness is None:
            raise ValueError("failed reports must carry a witness")

    def as_record(self):
        return {
            "name": self.name,
            "status": "pass" if self.status else "fail",
            "samples": self.samples,
            "tolerance": self.tolerance,
            "margin": self.margin,
            "witness": self.witness,
        }
