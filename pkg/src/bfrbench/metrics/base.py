from dataclasses import dataclass


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    higher_is_better: bool
