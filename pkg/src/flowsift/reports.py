"""Report type shared by every detector's top-k output."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class HeavyReport:
    """Ranked (key bytes, estimated statistic) list plus the running total
    the detector thresholds against."""

    detector: str
    entries: list[tuple[bytes, float]] = field(default_factory=list)
    total: float = 0.0
    threshold: float = 0.0

    def keys(self) -> list[bytes]:
        return [k for k, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)
