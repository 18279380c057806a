"""
Gradient Check
Central finite differences against the analytic backward pass, scalar by scalar.
"""
from dataclasses import dataclass, field

import numpy as np

from errors import BudgetError, ValidationError
from diffcore.graph import gradients
from diffcore.tensor import record_patterns

EPSILON = 1e-8
MAX_SCALARS = 10_000


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), EPSILON)


@dataclass
class GradientReport:
    """Per-parameter analytic and numeric gradients with the worst relative error.

    Scalars whose perturbation crosses a kink of a non-smooth op are counted in
    `skipped` and left out of `max_rel_error`; their numeric entry is NaN.
    """
    analytic: dict = field(default_factory=dict)
    numeric: dict = field(default_factory=dict)
    max_rel_error: float = 0.0
    worst: str = ''
    checked: int = 0
    skipped: int = 0

    @property
    def total(self):
        return self.checked + self.skipped


def _loss_and_pattern(graph, loss_node, inputs):
    log = []
    with record_patterns(log):
        value = graph.trace(inputs)[loss_node].item()
    return value, log


def grad_check(graph, loss_node, inputs, step=1e-3, select=None, max_scalars=MAX_SCALARS):
    """Compare analytic gradients with central differences.

    `select` optionally maps parameter names to flat index arrays so large graphs can be
    subsampled explicitly; without it every scalar is perturbed and the count must fit
    in `max_scalars`.
    """
    if step <= 0:
        raise ValidationError(f'step must be positive, got {step}')
    params = graph.parameters.params
    if select is None:
        select = {name: np.arange(p.size) for name, p in params.items()}
    total = int(np.sum([len(ix) for ix in select.values()], dtype=np.int64))
    if total > max_scalars:
        raise BudgetError(f'{total} parameter scalars exceed the budget of {max_scalars}; '
                          'pass an explicit selection')

    report = GradientReport()
    if total == 0:
        return report

    # Batch-norm buffers move on every training-mode trace; restore them afterwards
    buffers = {k: v.copy() for k, v in graph.parameters.buffers.items()}
    try:
        analytic = gradients(graph, loss_node, inputs)
        _, base_pattern = _loss_and_pattern(graph, loss_node, inputs)
        worst = -1.0
        for name, indices in select.items():
            flat = params[name].data.reshape(-1)
            a = analytic[name].reshape(-1)[indices]
            n = np.full(len(indices), np.nan)
            for slot, index in enumerate(indices):
                original = flat[index]
                flat[index] = original + step
                plus, plus_pattern = _loss_and_pattern(graph, loss_node, inputs)
                flat[index] = original - step
                minus, minus_pattern = _loss_and_pattern(graph, loss_node, inputs)
                flat[index] = original
                if plus_pattern != base_pattern or minus_pattern != base_pattern:
                    report.skipped += 1
                    continue
                n[slot] = (plus - minus) / (2.0 * step)
                err = float(relative_error(a[slot], n[slot]))
                report.checked += 1
                if err > worst:
                    worst, report.worst = err, f'{name}[{index}]'
            report.analytic[name] = a
            report.numeric[name] = n
        report.max_rel_error = max(worst, 0.0)
    finally:
        for k, v in buffers.items():
            graph.parameters.buffers[k][...] = v
    return report
