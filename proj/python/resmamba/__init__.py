"""Python access to the resmamba C++ core.

Configuration arguments are the flat ``key = value`` text accepted by the
command line tool; an empty string means all defaults.
"""

from fractions import Fraction

from ._core import (
    AutoEncoder,
    attention_reference,
    binary_collapse,
    evaluate,
    format_percent,
    gen_synthetic,
    kpis,
    parse_config,
    read_checkpoint,
    roc_auc,
    scaling_run,
    selective_scan,
    train_autoencoder,
    train_classifier,
)

__all__ = [
    "AutoEncoder",
    "attention_reference",
    "binary_collapse",
    "evaluate",
    "format_percent",
    "gen_synthetic",
    "kpis",
    "parse_config",
    "read_checkpoint",
    "ratio",
    "roc_auc",
    "scaling_run",
    "selective_scan",
    "train_autoencoder",
    "train_classifier",
]


def ratio(pair):
    """Turns a (num, den) pair from a report into a Fraction; 0 when den is 0."""
    num, den = pair
    return Fraction(num, den) if den else Fraction(0)
