"""
Lab Errors
Exception hierarchy shared by the engine, the controllers and the command layer.
"""


class LabError(Exception):
    """Base error; `status` is the process exit code used by the command layer"""

    status = 1
    title = 'Lab error'

    def __init__(self, message, details=None):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        """Error payload in the {'error', 'details'} shape"""
        payload = {'error': self.title, 'details': self.message}
        if self.details is not None:
            payload['context'] = self.details
        return payload


class ValidationError(LabError):
    """Invalid argument, configuration value or domain value"""
    status = 2
    title = 'Invalid input'


class ShapeError(ValidationError):
    """Tensor extents incompatible with an operation; the message names the node"""
    title = 'Shape mismatch'


class GraphError(LabError):
    """Unbound input, non-scalar loss or non-differentiable active path"""
    title = 'Graph error'


class BudgetError(LabError):
    """Exhaustive gradient check would exceed the perturbation budget"""
    title = 'Budget exceeded'


class DatasetError(LabError):
    """Missing or inconsistent corpus, manifest or image files"""
    title = 'Dataset error'


class CheckpointError(LabError):
    """Unreadable checkpoint or checkpoint not matching the architecture"""
    title = 'Checkpoint error'


class RankingError(LabError):
    """Pairwise tally that admits no Bradley-Terry estimate"""
    title = 'Ranking error'
