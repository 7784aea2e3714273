from pathlib import Path
from typing import Optional

import pandas as pd
from pydantic import BaseModel, Field

BASELINE_VARIANT = "additive-linear"


class CvModelResult(BaseModel):
    variant: str
    overall: float
    ozone_tail: float
    temp_tail: float
    both_tails: float
    n_holdout: int
    n_cities: int
    skipped: dict[str, str] = Field(default_factory=dict)


class CvReport(BaseModel):
    """Holdout deviances per model on one shared split."""

    fraction: float
    seed: int
    contiguous: bool = False
    results: list[CvModelResult] = Field(default_factory=list)

    def result(self, variant: str) -> Optional[CvModelResult]:
        for result in self.results:
            if result.variant == variant:
                return result
        return None

    def merge(self, other: "CvReport") -> "CvReport":
        if (other.fraction, other.seed, other.contiguous) != (self.fraction, self.seed, self.contiguous):
            raise ValueError("reports were computed on different splits")
        merged = {r.variant: r for r in self.results}
        merged.update({r.variant: r for r in other.results})
        return self.model_copy(update={"results": list(merged.values())})

    def to_frame(self) -> pd.DataFrame:
        """One row per model: deviances, then differences from the linear additive model."""
        columns = ["overall", "ozone_tail", "temp_tail", "both_tails"]
        frame = pd.DataFrame([r.model_dump(exclude={"skipped"}) for r in self.results])
        if frame.empty:
            return pd.DataFrame(columns=["variant"] + columns)
        baseline = self.result(BASELINE_VARIANT)
        for column in columns:
            frame[f"diff_{column}"] = frame[column] - getattr(baseline, column) if baseline else float("nan")
        frame["fraction"] = self.fraction
        frame["seed"] = self.seed
        frame["contiguous"] = self.contiguous
        return frame

    def save_csv(self, path: Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
