"""Mixed-kernel SVM exploration for bespoke analog/digital classifiers."""

__version__ = "0.1.0"
