import numpy as np
from dataclasses import dataclass
from typing import Dict, Any, Iterable, List, Optional, Sequence, Tuple

# Default options: deliver a message as sent, leave a device alone, or plain compromise
# (compromise is not an intervention, the monotone sw adversary may always take it)
FREE_LABELS = ("deliver", "none", "compromise")


def is_intervention(label: str) -> bool:
    return label not in FREE_LABELS


@dataclass(frozen=True)
class Choice:
    key: str
    label: str
    index: int
    n_options: int
    free: int = 1


class DecisionStrategy:
    """Base class for sources of adversary decisions at engine choice points."""

    def __init__(self, max_interventions: Optional[int] = None):
        self.max_interventions = max_interventions
        self.interventions = 0
        self.choices: List[Choice] = []

    def decide(self, key: str, options: Sequence[str]) -> str:
        """Pick one of options (the first is always the default) for choice point key."""
        allowed = list(options)
        if self.max_interventions is not None and self.interventions >= self.max_interventions:
            allowed = [o for o in allowed if not is_intervention(o)]
        index = min(self._pick(key, allowed), len(allowed) - 1)
        label = allowed[index]
        if is_intervention(label):
            self.interventions += 1
        free = sum(1 for o in allowed if not is_intervention(o))
        self.choices.append(Choice(key, label, index, len(allowed), free))
        return label

    def _pick(self, key: str, options: List[str]) -> int:
        raise NotImplementedError

    @property
    def decisions(self) -> List[Tuple[str, str]]:
        """Non-default decisions as (key, label) pairs: the canonical schedule."""
        return [(c.key, c.label) for c in self.choices if c.index > 0]

    @property
    def info(self) -> Dict[str, Any]:
        return {
            "choice_points": len(self.choices),
            "interventions": self.interventions,
            "max_interventions": self.max_interventions,
        }


class ScriptedStrategy(DecisionStrategy):
    """Explicit decisions keyed by choice point; everything else takes the default."""

    def __init__(self, decisions: Iterable[Tuple[str, str]] | Dict[str, str] = (),
                 max_interventions: Optional[int] = None):
        super().__init__(max_interventions)
        self.script = dict(decisions)

    def _pick(self, key: str, options: List[str]) -> int:
        label = self.script.get(key)
        if label is not None and label in options:
            return options.index(label)
        return 0


class ReplayStrategy(DecisionStrategy):
    """Follows a prefix of option indices, then always the default (depth-first search)."""

    def __init__(self, prefix: Sequence[int] = (), max_interventions: Optional[int] = None):
        super().__init__(max_interventions)
        self.prefix = list(prefix)

    def _pick(self, key: str, options: List[str]) -> int:
        position = len(self.choices)
        return self.prefix[position] if position < len(self.prefix) else 0


class RandomStrategy(DecisionStrategy):
    """Uniform seeded choice over the permitted options."""

    def __init__(self, seed, max_interventions: Optional[int] = None):
        super().__init__(max_interventions)
        self.rng = np.random.default_rng(seed)

    def _pick(self, key: str, options: List[str]) -> int:
        return int(self.rng.integers(len(options)))


def next_prefix(choices: Sequence[Choice], floor: int = 0) -> Optional[List[int]]:
    """Odometer step over recorded choices; positions below floor stay fixed."""
    for position in range(len(choices) - 1, floor - 1, -1):
        choice = choices[position]
        if choice.index + 1 < choice.n_options:
            return [c.index for c in choices[:position]] + [choice.index + 1]
    return None
