"""Analytical FLOPs estimates for fine-tuning versus retrieval inference.

    fine-tuning:  6 * n_params * s_samples * e_epochs * l_seq
    retrieval:    2 * n_params * s_test * l_seq

Sequence length and epoch count are not known for the reference totals,
so the presets below carry values solved back from those totals; their
``notes`` say so.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

from .errors import NonPositiveParam

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostParams:
    n_params: float
    l_seq: int
    s_samples: int = 0
    e_epochs: float = 0.0
    s_test: int = 0
    notes: str = ""

    def scaled(self, name: str, factor: float) -> CostParams:
        return replace(self, **{name: getattr(self, name) * factor})


def _check(p: CostParams, counts: tuple[str, ...]) -> None:
    for name in ("n_params", "l_seq"):
        v = getattr(p, name)
        if not math.isfinite(v) or v <= 0:
            raise NonPositiveParam(f"{name} must be positive, got {v}")
    for name in counts:
        v = getattr(p, name)
        if not math.isfinite(v) or v < 0:
            raise NonPositiveParam(f"{name} must be non-negative, got {v}")
        if v == 0:
            logger.warning("%s is zero; cost estimate is 0", name)


def flops_finetune(p: CostParams) -> float:
    _check(p, ("s_samples", "e_epochs"))
    return 6.0 * p.n_params * p.s_samples * p.e_epochs * p.l_seq


def flops_retrieval(p: CostParams) -> float:
    _check(p, ("s_test",))
    return 2.0 * p.n_params * p.s_test * p.l_seq


def relative_cost(c_ft: float, c_ret: float) -> float:
    if c_ret <= 0:
        raise NonPositiveParam("retrieval cost must be positive to form a ratio")
    return c_ft / c_ret


@dataclass
class CostReport:
    c_ft: float
    c_ret: float
    ft_params: CostParams
    ret_params: CostParams
    notes: list[str] = field(default_factory=list)

    @property
    def ratio(self) -> float:
        return relative_cost(self.c_ft, self.c_ret)

    def to_json(self) -> dict:
        return {
            "c_ft": self.c_ft,
            "c_ret": self.c_ret,
            "ratio": self.ratio,
            "ft_params": asdict(self.ft_params),
            "ret_params": asdict(self.ret_params),
            "notes": self.notes,
        }


def cost_report(ft_params: CostParams, ret_params: CostParams) -> CostReport:
    notes = [n for n in (ft_params.notes, ret_params.notes) if n]
    return CostReport(flops_finetune(ft_params), flops_retrieval(ret_params), ft_params, ret_params, notes)


# Legal-BERT base has 110M parameters and a 8,192-token hierarchical context.
PRESETS: dict[str, CostParams] = {
    "table2-lora": CostParams(
        n_params=110e6,
        l_seq=8192,
        s_samples=2000,
        e_epochs=3.5,
        notes="table2-lora: e_epochs=3.5 solved so the estimate lands on the 3.8e16 reference figure (an assumed input); memory ~50 MB",
    ),
    "table2-fullft": CostParams(
        n_params=110e6,
        l_seq=8192,
        s_samples=2000,
        e_epochs=5.25,
        notes="table2-fullft: e_epochs=5.25 solved so the estimate lands on the 5.7e16 reference figure (an assumed input); memory ~928 MB",
    ),
    "table2-retrieval": CostParams(
        n_params=0.6e9,
        l_seq=800,
        s_test=2000,
        notes="table2-retrieval: l_seq=800 solved so the estimate lands on the 1.9e15 reference figure; l_seq=8192 would give ~2.0e16; memory 0 MB",
    ),
}

#: Reference FLOPs totals the presets are calibrated against.
REFERENCE_FLOPS = {"table2-fullft": 5.7e16, "table2-lora": 3.8e16, "table2-retrieval": 1.9e15}


def comparison_table() -> str:
    """Method / FLOPs / relative-cost table computed from the presets."""
    ret = flops_retrieval(PRESETS["table2-retrieval"])
    rows = [
        ("Full fine-tune", flops_finetune(PRESETS["table2-fullft"])),
        ("LoRA fine-tune", flops_finetune(PRESETS["table2-lora"])),
        ("Retrieval", ret),
    ]
    lines = [f"{'Method':<16} {'FLOPs (est.)':>13} {'Rel. cost':>10}"]
    for name, flops in rows:
        lines.append(f"{name:<16} {flops:>13.2e} {flops / ret:>9.1f}x")
    return "\n".join(lines)
