"""Exception hierarchy for the copulacast package.

Argument-domain violations in pure numeric helpers raise plain ValueError;
the classes below cover failures tied to data content, model fitting, or
configuration, so the command line can report a category with each message.
"""


class CopulacastError(Exception):
    """Base class for package-specific failures."""

    category = "internal"


class ConfigError(CopulacastError):
    """Invalid or inconsistent experiment configuration."""

    category = "config"


class DataError(CopulacastError):
    """Malformed input data: unreadable CSV, bad tokens, shape mismatches."""

    category = "data"


class FitError(CopulacastError):
    """Model fitting cannot proceed or diverged."""

    category = "fit"


class EvaluationError(CopulacastError):
    """Evaluation inputs violate a metric's preconditions."""

    category = "evaluation"
