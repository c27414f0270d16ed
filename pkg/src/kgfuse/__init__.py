"""Knowledge-graph and negation features fused into an ESIM NLI classifier.

Modules: ``kg`` (triple store), ``kge`` (DistMult), ``annotate`` (lexicon
concept matching and negation), ``embed`` (feature fusion), ``esim``
(classifier), ``harness`` (datasets and ablations), ``synthetic``
(seeded corpora) and ``cli``.
"""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
