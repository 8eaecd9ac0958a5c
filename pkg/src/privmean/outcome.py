"""Tagged mechanism result: either FAIL or an estimate vector."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class Outcome:
    estimate: Optional[np.ndarray] = None
    reason: str = ""
    diagnostics: dict = field(default_factory=dict)
    ledger: object = None

    @property
    def failed(self) -> bool:
        return self.estimate is None

    @classmethod
    def fail(cls, reason: str, **diagnostics) -> "Outcome":
        return cls(None, reason, dict(diagnostics))

    @classmethod
    def release(cls, estimate, **diagnostics) -> "Outcome":
        return cls(np.atleast_1d(np.asarray(estimate, dtype=float)), "", dict(diagnostics))

    def __repr__(self):
        if self.failed:
            return f"Outcome(FAIL, reason={self.reason!r})"
        return f"Outcome({np.array2string(self.estimate, precision=4)})"
