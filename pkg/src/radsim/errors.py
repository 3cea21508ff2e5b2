"""Exception types shared across the simulator."""


class RadsimError(Exception):
    """Base class for all simulator errors."""


class RelationshipParseError(RadsimError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConflictError(RadsimError):
    """Contradictory relationship declarations for the same AS pair."""


class NonConvergenceError(RadsimError):
    """Route computation did not reach a fixed point within the sweep cap."""

    def __init__(self, blocks):
        self.blocks = tuple(blocks)
        names = ", ".join(f"{b.origin}/{b.specificity.value}" for b in self.blocks)
        super().__init__(f"no fixed point for blocks: {names}")


class ForwardingLoopError(RadsimError):
    """Hop-by-hop forwarding revisited an AS."""


class DegenerateTrafficError(RadsimError):
    """Traffic model inputs admit no flows (e.g. all-zero weights)."""


class ScenarioError(RadsimError):
    """Invalid or inconsistent scenario configuration."""
