"""Exception types raised by the simulation pipeline."""


class CrawlerError(Exception):
    """Base class for all simulator errors."""


class DegenerateCrease(CrawlerError):
    """A crease ray passes too close to a sheet corner; the panel would be degenerate."""


class NoClosure(CrawlerError):
    """No fold-angle root satisfies the vertex loop closure on the tracked branch."""


class BranchJump(CrawlerError):
    """Continuation step moved a fold angle by more than the allowed jump; refine the step."""


class NoStablePose(CrawlerError):
    """No resting orientation keeps the center of mass over the contact polygon."""


class Unstable(CrawlerError):
    """Center of mass projects outside the contact triangle (missed tip-over)."""


class Degenerate(CrawlerError):
    """Contact triangle is too small for a well-conditioned force balance."""


class NoAnchor(CrawlerError):
    """No contact point can stick while the other two slip; the sheet cannot crawl here."""


class NoRoot(CrawlerError):
    """Moment-balance root finder failed to bracket a heading increment."""


class TooShort(CrawlerError):
    """Trajectory segment has too few samples for curvature estimation."""
