"""Exception hierarchy shared across the pipeline.

Every error carries a short machine-readable ``code`` so the CLI can emit
single-line parseable failures.
"""


class PipelineError(Exception):
    code = "pipeline"


class SchemaError(PipelineError):
    """A required column or template section is missing or misnamed."""

    code = "schema"


class ParseError(PipelineError):
    """A value in an input file could not be parsed; names row and column."""

    code = "parse"


class IntegrityError(PipelineError):
    """Input violates a dataset invariant (duplicate ids, status conflicts)."""

    code = "integrity"


class ConfigError(PipelineError):
    """An option value is outside its enumerated or numeric domain."""

    code = "config"
