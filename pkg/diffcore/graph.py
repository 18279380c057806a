"""
Graph Evaluation
Define-by-run graphs over a parameter store: evaluate named outputs and their gradients.
"""
import numpy as np

from errors import GraphError
from diffcore.layers import ParameterStore
from diffcore.tensor import Tensor, backward, topological_order


class Graph:
    """A build function wired to named trainable parameters and named input placeholders.

    `build(params, inputs)` receives the ParameterStore and a dict of input Tensors and
    returns a dict of named output Tensors. Every evaluation re-traces the build, so the
    node list always reflects the last evaluation in topological order.
    """

    def __init__(self, build, parameters=None, inputs=()):
        self.build = build
        self.parameters = parameters if parameters is not None else ParameterStore()
        self.input_names = tuple(inputs)
        self.nodes = []

    def bind(self, inputs):
        unbound = [name for name in self.input_names if name not in inputs]
        if unbound:
            raise GraphError(f'unbound graph inputs: {", ".join(unbound)}')
        return {name: inputs[name] if isinstance(inputs[name], Tensor) else Tensor(inputs[name])
                for name in self.input_names}

    def trace(self, inputs):
        outputs = self.build(self.parameters, self.bind(inputs))
        if not isinstance(outputs, dict):
            raise GraphError('graph build must return a dict of named outputs')
        nodes, seen = [], set()
        for tensor in outputs.values():
            for node in topological_order(tensor):
                if id(node) not in seen:
                    seen.add(id(node))
                    nodes.append(node)
        self.nodes = nodes
        return outputs

    def unreached(self):
        """Parameters not referenced by any node of the last trace"""
        reached = {id(node) for node in self.nodes}
        return [name for name, p in self.parameters if id(p) not in reached]


def evaluate(graph, inputs):
    """Forward values of every named output"""
    return {name: t.data.copy() for name, t in graph.trace(inputs).items()}


def gradients_of(loss, parameters):
    """Backpropagate a scalar Tensor and collect gradients for the named parameters"""
    for p in parameters.values():
        p.grad = None
    backward(loss)
    return {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
            for name, p in parameters.items()}


def gradients(graph, loss_node, inputs):
    """d(loss_node)/d(parameter) for every graph parameter; zero for unreached ones"""
    outputs = graph.trace(inputs)
    if loss_node not in outputs:
        raise GraphError(f'graph has no output named "{loss_node}"')
    loss = outputs[loss_node]
    if loss.size != 1:
        raise GraphError(f'loss node "{loss_node}" is not scalar: shape {loss.shape}')
    return gradients_of(loss, graph.parameters.params)
