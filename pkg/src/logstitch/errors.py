"""Exception hierarchy shared by all pipeline stages."""


class LogStitchError(Exception):
    """Base class for every error raised by this package."""


class NoMatch(LogStitchError):
    def __init__(self, message, where=None):
        self.message = message
        self.where = where
        text = f"no template matches {message!r}"
        if where:
            text = f"{where}: {text}"
        super().__init__(text)


class AmbiguousMatch(LogStitchError):
    def __init__(self, message, candidates, where=None):
        self.message = message
        self.candidates = tuple(candidates)
        self.where = where
        text = f"{message!r} matches several templates: {', '.join(self.candidates)}"
        if where:
            text = f"{where}: {text}"
        super().__init__(text)


class TimestampError(LogStitchError):
    pass


class EmptyExecution(LogStitchError):
    pass


class TemplateError(LogStitchError):
    pass


class ArchitectureError(LogStitchError):
    pass


class CycleDetected(ArchitectureError):
    pass


class EmptyInput(LogStitchError):
    pass


class AlphabetOverlap(LogStitchError):
    def __init__(self, template_id):
        self.template_id = template_id
        super().__init__(f"operands share event {template_id!r}")


class ExplosionGuard(LogStitchError):
    pass


class ModelFormatError(LogStitchError):
    pass


class ReplayStuck(LogStitchError):
    def __init__(self, component, index, state, entry=None):
        self.component = component
        self.index = index
        self.state = state
        self.entry = entry
        super().__init__(
            f"{component}: no transition from state {state} reads entry #{index}"
            + (f" ({entry.template_id}{list(entry.valuation)})" if entry is not None else "")
        )


class TransitionNotFound(LogStitchError):
    pass


class TooFewExecutions(LogStitchError):
    pass


class RetriesExhausted(LogStitchError):
    pass


class InferenceTimeout(LogStitchError):
    pass
