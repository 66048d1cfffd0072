from dataclasses import dataclass, field

import torch


def _scalar(v):
    return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)


@dataclass
class LossReport:
    """A weighted loss and its unweighted parts.

    ``total`` keeps the autograd graph when the parts are tensors;
    ``per_term`` holds plain floats for logging.
    """

    total: object
    per_term: dict
    weights: dict = field(default_factory=dict)

    @classmethod
    def weighted(cls, parts, weights):
        total = 0.0
        for name, weight in weights.items():
            total = total + weight * parts[name]
        return cls(total, {k: _scalar(parts[k]) for k in weights}, dict(weights))

    @property
    def value(self):
        return _scalar(self.total)

    def as_dict(self):
        return {"total": self.value, **self.per_term}
