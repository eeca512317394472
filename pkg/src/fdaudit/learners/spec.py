from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from fdaudit.errors import ValidationError

KINDS = ("poly-lasso", "mlp", "poly-ols")
_ALIASES = {"lasso": "poly-lasso", "ols": "poly-ols", "nn": "mlp"}


def parse_penalty(rule: str) -> tuple[str, float | int | None]:
    """``plugin`` | ``cv:K`` | ``fixed:LAMBDA`` -> (kind, argument)."""
    rule = str(rule).strip().lower()
    if rule == "plugin":
        return "plugin", None
    kind, _, arg = rule.partition(":")
    try:
        if kind == "cv":
            k = int(arg or 5)
            if k < 2:
                raise ValueError
            return "cv", k
        if kind == "fixed":
            lam = float(arg)
            if not lam >= 0:
                raise ValueError
            return "fixed", lam
    except ValueError:
        pass
    raise ValidationError(f"bad lasso penalty rule {rule!r}; use plugin, cv:K or fixed:LAMBDA")


@dataclass(frozen=True)
class LearnerSpec:
    """Configuration of a conditional-expectation learner.

    The penalty default follows the usual rigorous-Lasso constants
    (``c = 1.1``, ``gamma = 0.1 / log n``, two residual-variance updates).
    ``mlp_hidden`` is the width of the single hidden layer.
    """

    kind: str = "poly-lasso"
    degree: int = 3
    lasso_penalty: str = "plugin"
    post_lasso: bool = True
    plugin_c: float = 1.1
    plugin_sigma_iter: int = 2
    lasso_tol: float = 1e-8
    lasso_max_sweeps: int = 100_000
    mlp_hidden: tuple = (10,)
    mlp_iters: int = 1000
    mlp_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "mlp_hidden", tuple(int(h) for h in self.mlp_hidden))
        if kind not in KINDS:
            raise ValidationError(f"unknown learner kind {self.kind!r}; choose from {KINDS}")
        if int(self.degree) < 1:
            raise ValidationError("polynomial degree must be >= 1")
        if int(self.mlp_iters) < 1:
            raise ValidationError("mlp_iters must be >= 1")
        if not self.mlp_rate > 0:
            raise ValidationError("mlp_rate must be positive")
        if len(self.mlp_hidden) != 1 or self.mlp_hidden[0] < 1:
            raise ValidationError("mlp_hidden must hold one positive width (single hidden layer)")
        parse_penalty(self.lasso_penalty)

    @property
    def penalty(self):
        return parse_penalty(self.lasso_penalty)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
