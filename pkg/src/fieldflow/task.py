"""Field-strength enhancement task descriptors."""

from __future__ import annotations

from dataclasses import dataclass

MODALITIES = ("T1", "T2", "FLAIR")
TRANSITIONS = (("64mT", "3T"), ("3T", "7T"))


@dataclass(frozen=True)
class FieldTask:
    """One enhancement task: a modality plus a source/target field pair."""

    modality: str
    source_field: str
    target_field: str

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}; expected one of {MODALITIES}")
        if (self.source_field, self.target_field) not in TRANSITIONS:
            raise ValueError(
                f"unsupported field transition {self.source_field}->{self.target_field}"
            )

    @property
    def prompt(self) -> str:
        return (
            f"MRI {self.modality} sequence enhancement from "
            f"{self.source_field} to {self.target_field} magnetic field"
        )

    @property
    def transition(self) -> str:
        """Short key for the field pair, e.g. ``"64mT_to_3T"``."""
        return f"{self.source_field}_to_{self.target_field}"

    def __str__(self):
        return f"{self.modality}:{self.transition}"

    @classmethod
    def parse(cls, text: str) -> "FieldTask":
        """Inverse of ``str(task)``: ``"T1:64mT_to_3T"``."""
        try:
            modality, transition = text.strip().split(":")
            source, target = transition.split("_to_")
        except ValueError:
            raise ValueError(f"cannot parse task {text!r}; expected e.g. 'T1:64mT_to_3T'") from None
        return cls(modality, source, target)


ALL_TASKS = tuple(FieldTask(m, s, t) for (s, t) in TRANSITIONS for m in MODALITIES)
ALL_PROMPTS = tuple(task.prompt for task in ALL_TASKS)
