"""kNN / Deep-kNN classifiers with conformal credibility scoring and a suite
of adversarial attacks."""

__version__ = "0.1.0"
